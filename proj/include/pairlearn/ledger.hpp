#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>

#include "pairlearn/evaluation.hpp"

namespace pairlearn {

struct LedgerKey {
  Cell cell;
  std::uint64_t seed = 0;
  std::string config_hash;

  auto operator<=>(const LedgerKey&) const = default;
};

class DuplicateLedgerKey : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Append-only JSON-lines index of completed run records. Each line is
/// written with a single append, entries are never rewritten.
class RunLedger {
 public:
  explicit RunLedger(std::filesystem::path path);

  bool contains(const LedgerKey& key) const;
  /// Relative record path for key; throws std::out_of_range when absent.
  std::string record_path(const LedgerKey& key) const;
  std::size_t size() const;
  /// Throws DuplicateLedgerKey if the key is already present.
  void append(const LedgerKey& key, const std::string& record_path);
  /// Appends unless present; returns true when a line was written.
  bool append_if_absent(const LedgerKey& key, const std::string& record_path);

  const std::filesystem::path& path() const { return path_; }

 private:
  void write_line(const LedgerKey& key, const std::string& record_path);

  std::filesystem::path path_;
  std::map<LedgerKey, std::string> entries_;
  mutable std::mutex mu_;
};

}  // namespace pairlearn
