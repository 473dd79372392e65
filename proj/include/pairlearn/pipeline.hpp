#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairlearn/config.hpp"
#include "pairlearn/factorial.hpp"
#include "pairlearn/ledger.hpp"
#include "pairlearn/report.hpp"

namespace pairlearn {

/// out/<config-hash>/{stimuli,schedules,runs,analysis}
struct OutputLayout {
  std::filesystem::path root;

  static OutputLayout for_config(const ExperimentConfig& cfg);
  std::filesystem::path stimuli() const { return root / "stimuli"; }
  std::filesystem::path schedules() const { return root / "schedules"; }
  std::filesystem::path runs() const { return root / "runs"; }
  std::filesystem::path analysis() const { return root / "analysis"; }
  std::filesystem::path ledger() const { return root / "ledger.jsonl"; }
  void create() const;
};

SweepContext make_sweep_context(const ExperimentConfig& cfg);

nlohmann::json object_json(const AttributeSpace& space, const ObjectSpec& o);
/// One stimulus manifest line.
nlohmann::json manifest_entry(const AttributeSpace& space, const std::string& pair_id,
                              const PairSpec& p, const std::string& image_path);
nlohmann::json test_manifest_entry(const AttributeSpace& space, const std::string& pair_id,
                                   const CategoryRule& rule, Alignment alignment, const TestPair& p,
                                   const std::string& image_path);
/// One schedule manifest line per trial.
std::string schedule_jsonl(const TrialSchedule& s);

/// Writes the run's training and test images plus manifest.jsonl under dir.
void write_run_stimuli(const RunInputs& in, const std::filesystem::path& dir);

/// Reads every *.json run record in dir (sorted by file name).
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

struct AnalysisOptions {
  std::filesystem::path out_dir;
  double confidence = 0.95;
  int bootstrap_resamples = 0;
  std::uint64_t bootstrap_seed = 0;
  std::optional<std::filesystem::path> human_csv;
  /// Factor sets for marginal means, e.g. {{"trait","supervision"}}.
  std::vector<std::vector<std::string>> contrasts = {
      {"trait"}, {"alignment"}, {"supervision"}, {"trait", "supervision"},
      {"trait", "alignment", "supervision"}};
  report::Provenance provenance;
};

struct AnalysisResult {
  CellTable table;
  std::optional<FactorialFit> fit;
  std::string fit_error;  // why fit is absent
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> warnings;
};

/// "trait:supervision,alignment" -> {{"trait","supervision"},{"alignment"}}
std::vector<std::vector<std::string>> parse_contrast_sets(const std::string& spec);

/// Tables, fit, marginal means and figures from the ok records.
AnalysisResult analyze_records(const std::vector<RunRecord>& records, const AnalysisOptions& opts);

struct RunAllSummary {
  OutputLayout layout;
  int records = 0;
  int trained = 0;
  int reused = 0;
  int failed = 0;
  bool analysis_ok = false;
  std::string analysis_error;
  std::vector<std::string> failures;  // run_id: diagnostic
};

nlohmann::json to_json(const RunAllSummary& s);

/// stimuli -> schedules -> sweep -> analysis under the hashed output root.
/// Completed runs are skipped on re-invocation.
RunAllSummary command_run_all(const ExperimentConfig& cfg);

}  // namespace pairlearn
