#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pairlearn/model.hpp"
#include "pairlearn/stimulus.hpp"

namespace pairlearn {

inline constexpr double kDecisionThreshold = 0.5;
inline constexpr double kChanceLevel = 0.5;

/// One (feature, alignment, supervision) condition.
struct Cell {
  Feature feature = Feature::size;
  Alignment alignment = Alignment::high;
  int supervision = 6;

  auto operator<=>(const Cell&) const = default;
};

std::string cell_label(const Cell& c);
/// The 18 cells in table order: feature (size, shape, pattern), alignment,
/// supervision.
std::vector<Cell> all_cells();

struct ConditionResult {
  Cell cell;
  std::uint64_t seed = 0;
  int correct = 0;
  int total = 0;
  double accuracy = 0.0;
};

/// Predicts each image independently and scores it against its membership flag.
ConditionResult evaluate_test_set(const ModelParams& params, const std::vector<TestPair>& pairs,
                                  const std::vector<RenderedPair>& images);

/// Any per-image probability source; used by evaluate_test_set and by tests
/// that need a constructed predictor.
template <typename Predict>
ConditionResult score_test_set(const std::vector<TestPair>& pairs,
                               const std::vector<RenderedPair>& images, Predict&& predict);

class EmptyCells : public std::runtime_error {
 public:
  EmptyCells(const std::string& what, std::vector<Cell> missing)
      : std::runtime_error(what), missing_cells(std::move(missing)) {}
  std::vector<Cell> missing_cells;
};

struct CellSummary {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

using CellTable = std::map<Cell, CellSummary>;

/// Mean accuracy per cell over the required cells (all 18 by default).
CellTable aggregate_table(const std::vector<ConditionResult>& records,
                          const std::vector<Cell>& required = all_cells());

/// Human reference rows, display only.
struct HumanTable {
  std::map<Cell, double> accuracy;
  std::vector<std::string> warnings;  // missing cells
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV with header feature,alignment,supervision,accuracy.
HumanTable ingest_human_table(const std::filesystem::path& path);
std::string format_human_table(const HumanTable& t);

// ---------------------------------------------------------------------------

template <typename Predict>
ConditionResult score_test_set(const std::vector<TestPair>& pairs,
                               const std::vector<RenderedPair>& images, Predict&& predict) {
  if (pairs.size() != 6 || images.size() != pairs.size())
    throw std::invalid_argument("malformed test set: expected 6 pairs with 6 rendered images, got " +
                                std::to_string(pairs.size()) + " and " +
                                std::to_string(images.size()));
  ConditionResult r;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool left = predict(images[i].left_half) >= kDecisionThreshold;
    const bool right = predict(images[i].right_half) >= kDecisionThreshold;
    r.correct += (left == pairs[i].left_is_member) + (right == pairs[i].right_is_member);
    r.total += 2;
  }
  r.accuracy = static_cast<double>(r.correct) / r.total;
  return r;
}

}  // namespace pairlearn
