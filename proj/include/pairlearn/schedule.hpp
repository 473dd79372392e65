#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pairlearn/stimulus.hpp"

namespace pairlearn {

inline constexpr int kTrialsPerSchedule = 6;

/// Number of labeled trials out of six: 1, 3 or 6.
class SupervisionLevel {
 public:
  explicit SupervisionLevel(int labeled_count);
  int labeled_count() const { return labeled_; }
  auto operator<=>(const SupervisionLevel&) const = default;

 private:
  int labeled_ = 6;
};

inline const std::array<SupervisionLevel, 3> kAllSupervisionLevels = {
    SupervisionLevel(1), SupervisionLevel(3), SupervisionLevel(6)};

struct CounterbalancePlan {
  std::string plan_id;
  std::set<int> supervised_positions;
  std::array<PairKind, kTrialsPerSchedule> kind_sequence{};

  bool operator==(const CounterbalancePlan&) const = default;
};

/// The counterbalanced plan set for a supervision level:
///   6/6: the 20 orderings of three compare and three contrast trials.
///   3/6: those 20 orderings, each paired with a distinct 3-subset of
///        positions so every position is supervised 10 times and the
///        supervised compare/contrast mix covers 3:0 through 0:3.
///   1/6: six rotations, one per supervised position, alternating the
///        supervised kind.
std::vector<CounterbalancePlan> enumerate_plans(SupervisionLevel level);

/// Round-robin plan assignment over the seed index.
const CounterbalancePlan& plan_for_seed(const std::vector<CounterbalancePlan>& plans,
                                        std::size_t seed_index);

struct Trial {
  std::string pair_id;
  PairSpec pair;
  bool supervised = false;
  PairKind pair_kind = PairKind::compare;
};

struct TrialSchedule {
  std::string run_id;
  CategoryRule category;
  Alignment alignment = Alignment::high;
  SupervisionLevel level{6};
  std::string plan_id;
  std::vector<Trial> trials;

  /// Every object shown during learning.
  std::vector<ObjectSpec> seen_objects() const;
};

/// Builds six mutually distinct pairs following `plan`. Pair ids are
/// "<run_id>-t<i>".
TrialSchedule build_schedule(const AttributeSpace& space, const CategoryRule& rule,
                             Alignment alignment, SupervisionLevel level,
                             const CounterbalancePlan& plan, Rng& rng,
                             const std::string& run_id = "run");

struct HalfLabels {
  int left = 0;
  int right = 0;
  bool operator==(const HalfLabels&) const = default;
};

/// The training-side view of one trial. Unlabeled views never carry
/// membership information.
struct TrainingTrial {
  std::string pair_id;
  int trial_index = 0;
  bool supervised = false;
  bool same = false;  // pair_kind == compare
  std::optional<HalfLabels> labels;
};

struct ScheduleViews {
  std::vector<TrainingTrial> supervised;
  std::vector<TrainingTrial> unsupervised;
};

ScheduleViews split_views(const TrialSchedule& s);

}  // namespace pairlearn
