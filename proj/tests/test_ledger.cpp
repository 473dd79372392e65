#include <doctest.h>

#include <fstream>

#include "pairlearn/io.hpp"
#include "pairlearn/ledger.hpp"
#include "test_util.hpp"

using namespace pairlearn;

namespace {

LedgerKey key(Feature f, int level, std::uint64_t seed, std::string hash = "h1") {
  return {{f, Alignment::high, level}, seed, std::move(hash)};
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("ledger appends and reloads") {
  test_util::TempDir dir;
  const auto path = dir.path() / "sub" / "ledger.jsonl";
  {
    RunLedger l(path);
    CHECK(l.size() == 0);
    l.append(key(Feature::size, 1, 0), "runs/a.json");
    l.append(key(Feature::size, 1, 1), "runs/b.json");
    CHECK(l.append_if_absent(key(Feature::shape, 6, 0), "runs/c.json"));
    CHECK_FALSE(l.append_if_absent(key(Feature::shape, 6, 0), "runs/other.json"));
    CHECK(l.size() == 3);
  }
  CHECK(line_count(path) == 3);
  const RunLedger again(path);
  CHECK(again.size() == 3);
  CHECK(again.contains(key(Feature::size, 1, 1)));
  CHECK(again.record_path(key(Feature::shape, 6, 0)) == "runs/c.json");
  CHECK_FALSE(again.contains(key(Feature::size, 1, 1, "h2")));
  CHECK_THROWS_AS(again.record_path(key(Feature::pattern, 3, 0)), std::out_of_range);
}

TEST_CASE("duplicate keys are refused and nothing is rewritten") {
  test_util::TempDir dir;
  const auto path = dir.path() / "ledger.jsonl";
  RunLedger l(path);
  l.append(key(Feature::pattern, 3, 5), "x.json");
  const auto before = io::read_file(path);
  CHECK_THROWS_AS(l.append(key(Feature::pattern, 3, 5), "y.json"), DuplicateLedgerKey);
  CHECK(io::read_file(path) == before);
  CHECK(l.record_path(key(Feature::pattern, 3, 5)) == "x.json");

  // A file that already holds the same key twice is rejected on load.
  std::ofstream(path, std::ios::app) << io::read_file(path);
  CHECK_THROWS_AS(RunLedger{path}, DuplicateLedgerKey);
}

TEST_CASE("a torn last line is skipped and later appends stay readable") {
  test_util::TempDir dir;
  const auto path = dir.path() / "ledger.jsonl";
  {
    RunLedger l(path);
    l.append(key(Feature::size, 6, 0), "a.json");
  }
  std::ofstream(path, std::ios::app) << "{\"feature\": \"size\", \"alig";
  {
    RunLedger l(path);
    CHECK(l.size() == 1);
    l.append(key(Feature::size, 6, 1), "b.json");
  }
  const RunLedger reloaded(path);
  CHECK(reloaded.size() == 2);
  CHECK(reloaded.record_path(key(Feature::size, 6, 1)) == "b.json");
}
