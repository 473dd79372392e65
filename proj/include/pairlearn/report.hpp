#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pairlearn/evaluation.hpp"
#include "pairlearn/factorial.hpp"
#include "pairlearn/training.hpp"

namespace pairlearn::report {

/// Stamped on every emitted artifact.
struct Provenance {
  std::string config_hash;
  std::string tool_version;
};

/// Shortest round-trip decimal representation.
std::string fmt(double v);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};
using CellIntervals = std::map<Cell, Interval>;

/// One row per run, in the order given.
std::string results_csv(const std::vector<RunRecord>& records, const Provenance& prov);

/// Wide layout: one row per feature, columns alignment x supervision x
/// (human, cnn). Human columns are blank without a human table.
std::string table1_csv(const CellTable& cnn, const HumanTable* human, const Provenance& prov);

/// Long layout: one row per cell with mean, sd, n, interval and human value.
std::string cell_means_csv(const CellTable& cnn, const CellIntervals& ci, const HumanTable* human,
                           const Provenance& prov);

std::string coefficients_csv(const FactorialFit& fit, const Provenance& prov);
std::string marginal_means_csv(const MarginalMeans& mm, const Provenance& prov);
std::string contrasts_csv(const MarginalMeans& mm, const Provenance& prov);

/// Model-based intervals from the saturated fit.
CellIntervals model_intervals(const FactorialFit& fit, double confidence);
/// t intervals from each cell's own sd (used when no fit is available).
CellIntervals per_cell_intervals(const CellTable& t, double confidence);
/// Percentile bootstrap of each cell mean over its runs.
CellIntervals bootstrap_intervals(const std::vector<ConditionResult>& records, int resamples,
                                  std::uint64_t seed, double confidence);

enum class Facet { by_alignment, by_feature };

/// Accuracy vs supervision with error bars and a dotted chance line.
/// by_alignment: one panel per alignment, one line per feature.
/// by_feature: one panel per feature, one line per alignment.
std::string accuracy_figure_svg(const CellTable& means, const CellIntervals& ci, Facet facet,
                                const std::string& title, const Provenance& prov);

}  // namespace pairlearn::report
