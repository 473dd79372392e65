#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairlearn/training.hpp"

namespace pairlearn {

inline constexpr int kConfigFormatVersion = 1;

/// Malformed or semantically invalid configuration. Parse errors carry the
/// 1-based position of the offending node.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0, int column = 0);
  int line = 0;
  int column = 0;
};

struct AnalysisConfig {
  double confidence = 0.95;
  /// 0 disables the bootstrap intervals on cell means.
  int bootstrap_resamples = 0;
  std::uint64_t bootstrap_seed = 0;
  std::string human_csv;  // empty: no human columns

  bool operator==(const AnalysisConfig&) const = default;
};

struct ExperimentConfig {
  int version = kConfigFormatVersion;
  Profile profile = Profile::desk;
  AttributeSpace space;
  std::vector<CategoryBinding> categories;  // empty: the default six
  int half_width = 64;
  int half_height = 64;
  int base_width = 8;
  int embedding_dim = 128;
  int projection_dim = 128;
  TrainConfig train;
  SweepGrid grid;
  std::vector<std::uint64_t> seeds;
  std::string output_root = "out";
  AnalysisConfig analysis;
  bool save_checkpoints = false;
  int jobs = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  EncoderConfig encoder() const;
  std::vector<CategoryBinding> resolved_categories() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Defaults for a profile: desk is 64x64 halves on the 6-block encoder, full
/// is 112x112 halves on the 18-layer encoder.
ExperimentConfig default_config(Profile profile);

/// Parses YAML. Missing keys take the profile's defaults; unknown keys are
/// rejected.
ExperimentConfig parse_config(const std::string& yaml_text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Applies PAIRLEARN_* environment overrides (EPOCHS, LR, SEEDS, JOBS, OUT,
/// PROFILE-independent fields only).
void apply_env_overrides(ExperimentConfig& cfg);

/// "0-9" (inclusive range), "3,5,8" (list) or "N" (0..N-1).
std::vector<std::uint64_t> parse_seed_list(const std::string& spec);
/// "bce,consistency,contrastive", e.g. "1,1,1".
LossWeights parse_weights(const std::string& spec);

/// SHA-1 (hex, first 12 digits) of the result-affecting settings. Seeds,
/// jobs and the output root are excluded.
std::string config_hash(const ExperimentConfig& cfg);
std::string full_config_hash(const ExperimentConfig& cfg);

std::string tool_version();

}  // namespace pairlearn
