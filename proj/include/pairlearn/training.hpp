#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairlearn/evaluation.hpp"
#include "pairlearn/losses.hpp"
#include "pairlearn/model.hpp"
#include "pairlearn/schedule.hpp"

namespace pairlearn {

enum class Batching { per_trial, full_batch };

std::string_view to_string(Batching b);
Batching parse_batching(std::string_view s);

struct TrainConfig {
  int epochs = 200;
  double base_lr = 1e-2;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossWeights weights;
  double margin = 0.0;
  Batching batching = Batching::per_trial;
  /// Resample the unlabeled pairs every epoch instead of reusing the
  /// schedule's fixed trials.
  bool fresh_unsupervised = false;
  std::uint64_t seed = 0;

  /// epochs may be 0 here (a no-op run); configs loaded from files require >= 1.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Cosine annealing: base_lr * (1 + cos(pi * step / total_steps)) / 2.
double lr_at(long step, long total_steps, double base_lr);

/// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(std::size_t size, double beta1, double beta2, double epsilon, double weight_decay);
  void step(std::span<double> params, std::span<const double> grad, double lr);
  long steps_taken() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

/// Everything one category run trains and tests on.
struct RunInputs {
  AttributeSpace space;
  int half_width = 64;
  int half_height = 64;
  TrialSchedule schedule;
  std::map<std::string, RenderedPair> rendered;  // by pair_id
  std::vector<TestPair> test_pairs;
  std::vector<RenderedPair> test_images;
};

struct RunRecord {
  std::string run_id;
  Cell cell;
  std::uint64_t seed = 0;
  std::string plan_id;
  std::string category;
  LossWeights weights;
  double margin = 0.0;
  int epochs = 0;
  double base_lr = 0.0;
  std::vector<double> loss_curve;  // mean trial loss per epoch
  int correct = 0;
  int total = 0;
  double accuracy = 0.0;
  std::string status = "ok";  // ok | diverged | failed
  std::string diagnostic;
  std::string checkpoint_path;
  std::string config_hash;
  std::string tool_version;

  bool ok() const { return status == "ok"; }
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

struct RunOutcome {
  RunRecord record;
  ModelParams params;
};

/// Trains on the six learning trials only and scores the held-out images.
/// Deterministic in (cfg, encoder seed, inputs).
RunOutcome train_category_run(const TrainConfig& cfg, const EncoderConfig& encoder,
                              const RunInputs& inputs);

// --- sweep ------------------------------------------------------------------

struct SweepGrid {
  std::vector<Feature> features{Feature::size, Feature::shape, Feature::pattern};
  std::vector<Alignment> alignments{Alignment::high, Alignment::low};
  std::vector<int> levels{1, 3, 6};

  std::vector<Cell> cells() const;
  bool operator==(const SweepGrid&) const = default;
};

struct RunSpec {
  Cell cell;
  std::uint64_t seed = 0;
  std::size_t seed_index = 0;
  std::string run_id;
};

std::string make_run_id(const Cell& cell, std::uint64_t seed);

/// Fixed, result-affecting settings shared by every run of a sweep.
struct SweepContext {
  AttributeSpace space;
  std::vector<CategoryBinding> categories;
  int half_width = 64;
  int half_height = 64;
  EncoderConfig encoder;
  TrainConfig train;
  std::string config_hash;
  std::string tool_version;
};

/// Seeds derived from (run seed, cell) for the independent random streams.
std::uint64_t derive_seed(std::uint64_t seed, const Cell& cell, std::uint64_t stream);

/// Builds the schedule, test set and renders for one run.
RunInputs prepare_run(const SweepContext& ctx, const RunSpec& spec);
/// Trains one prepared run with its derived encoder and shuffle seeds and
/// stamps the record with the context's provenance.
RunOutcome execute_run(const SweepContext& ctx, const RunSpec& spec, const RunInputs& in);

struct SweepOptions {
  std::filesystem::path runs_dir;
  bool resume = true;
  int jobs = 1;
  bool save_checkpoints = false;
  /// Called once per run that is about to train (e.g. to write stimuli).
  std::function<void(const RunSpec&, const RunInputs&)> on_prepared;
  /// Called after each run is persisted.
  std::function<void(const RunRecord&)> on_finished;
};

struct SweepResult {
  std::vector<RunRecord> records;  // ordered by cell then seed
  int trained = 0;
  int reused = 0;
  int failed = 0;
};

std::vector<RunSpec> plan_sweep(const SweepGrid& grid, const std::vector<std::uint64_t>& seeds);

/// One record per (cell, seed). Records are written one file per run as they
/// finish; with resume, valid records from earlier invocations are reused.
SweepResult run_sweep(const SweepContext& ctx, const SweepGrid& grid,
                      const std::vector<std::uint64_t>& seeds, const SweepOptions& opts);

}  // namespace pairlearn
