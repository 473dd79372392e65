#include "pairlearn/ledger.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "pairlearn/schedule.hpp"

namespace pairlearn {

using nlohmann::json;

RunLedger::RunLedger(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      // torn line from a killed writer
      continue;
    }
    LedgerKey k;
    k.cell.feature = parse_feature(j.at("feature").get<std::string>());
    k.cell.alignment = parse_alignment(j.at("alignment").get<std::string>());
    k.cell.supervision = SupervisionLevel(j.at("supervision").get<int>()).labeled_count();
    k.seed = j.at("seed").get<std::uint64_t>();
    k.config_hash = j.at("config_hash").get<std::string>();
    if (!entries_.emplace(k, j.at("record").get<std::string>()).second)
      throw DuplicateLedgerKey(path_.string() + ":" + std::to_string(lineno) + ": duplicate key " +
                               cell_label(k.cell) + " seed " + std::to_string(k.seed));
  }
}

bool RunLedger::contains(const LedgerKey& key) const {
  std::lock_guard lock(mu_);
  return entries_.contains(key);
}

std::string RunLedger::record_path(const LedgerKey& key) const {
  std::lock_guard lock(mu_);
  return entries_.at(key);
}

std::size_t RunLedger::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void RunLedger::write_line(const LedgerKey& key, const std::string& record_path) {
  json j;
  j["feature"] = to_string(key.cell.feature);
  j["alignment"] = to_string(key.cell.alignment);
  j["supervision"] = key.cell.supervision;
  j["seed"] = key.seed;
  j["config_hash"] = key.config_hash;
  j["record"] = record_path;
  std::string line = j.dump() + "\n";
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::ifstream tail(path_, std::ios::binary | std::ios::ate); tail && tail.tellg() > 0) {
    tail.seekg(-1, std::ios::end);
    if (tail.get() != '\n') line.insert(0, "\n");
  }
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open ledger " + path_.string());
  const auto n = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw std::runtime_error("short write to ledger " + path_.string());
}

void RunLedger::append(const LedgerKey& key, const std::string& record_path) {
  std::lock_guard lock(mu_);
  if (entries_.contains(key))
    throw DuplicateLedgerKey("ledger already has " + cell_label(key.cell) + " seed " +
                             std::to_string(key.seed));
  write_line(key, record_path);
  entries_.emplace(key, record_path);
}

bool RunLedger::append_if_absent(const LedgerKey& key, const std::string& record_path) {
  std::lock_guard lock(mu_);
  if (entries_.contains(key)) return false;
  write_line(key, record_path);
  entries_.emplace(key, record_path);
  return true;
}

}  // namespace pairlearn
