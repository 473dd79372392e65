#include "pairlearn/schedule.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace pairlearn {

SupervisionLevel::SupervisionLevel(int labeled_count) : labeled_(labeled_count) {
  if (labeled_count != 1 && labeled_count != 3 && labeled_count != 6)
    throw std::invalid_argument("supervision level must be 1, 3 or 6 (got " +
                                std::to_string(labeled_count) + ")");
}

namespace {

using KindSeq = std::array<PairKind, kTrialsPerSchedule>;

// All 3-subsets of {0..5} in lexicographic order.
std::vector<std::set<int>> triples() {
  std::vector<std::set<int>> out;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b)
      for (int c = b + 1; c < 6; ++c) out.push_back({a, b, c});
  return out;
}

KindSeq kinds_from_compare_positions(const std::set<int>& compare) {
  KindSeq k;
  for (int i = 0; i < kTrialsPerSchedule; ++i)
    k[i] = compare.contains(i) ? PairKind::compare : PairKind::contrast;
  return k;
}

std::string plan_name(int level, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "L%d-P%02zu", level, index);
  return buf;
}

std::size_t overlap(const std::set<int>& a, const std::set<int>& b) {
  return static_cast<std::size_t>(
      std::count_if(a.begin(), a.end(), [&](int x) { return b.contains(x); }));
}

// Pairs every compare-position triple with a distinct supervised triple so the
// number of supervised compare trials follows the hypergeometric proportions
// 1:9:9:1 for 0..3 (which sums to exactly half of all supervised trials).
bool match_triples(const std::vector<std::set<int>>& t, std::size_t j, std::vector<int>& perm,
                   std::vector<bool>& used, std::array<int, 4>& remaining) {
  if (j == t.size()) return true;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (used[k]) continue;
    const std::size_t o = overlap(t[j], t[k]);
    if (remaining[o] == 0) continue;
    used[k] = true;
    --remaining[o];
    perm[j] = static_cast<int>(k);
    if (match_triples(t, j + 1, perm, used, remaining)) return true;
    used[k] = false;
    ++remaining[o];
  }
  return false;
}

}  // namespace

std::vector<CounterbalancePlan> enumerate_plans(SupervisionLevel level) {
  const auto t = triples();
  std::vector<CounterbalancePlan> plans;
  const int n = level.labeled_count();
  if (n == 6) {
    for (std::size_t j = 0; j < t.size(); ++j)
      plans.push_back({plan_name(6, j), {0, 1, 2, 3, 4, 5}, kinds_from_compare_positions(t[j])});
  } else if (n == 3) {
    std::vector<int> perm(t.size(), -1);
    std::vector<bool> used(t.size(), false);
    std::array<int, 4> remaining = {1, 9, 9, 1};
    if (!match_triples(t, 0, perm, used, remaining))
      throw std::logic_error("no balanced 3/6 plan assignment exists");
    for (std::size_t j = 0; j < t.size(); ++j)
      plans.push_back({plan_name(3, j), t[perm[j]], kinds_from_compare_positions(t[j])});
  } else {
    const KindSeq base = {PairKind::compare,  PairKind::compare,  PairKind::compare,
                          PairKind::contrast, PairKind::contrast, PairKind::contrast};
    for (int i = 0; i < kTrialsPerSchedule; ++i) {
      // Rotate `base` so that position i lands on a compare entry for even i
      // and a contrast entry for odd i.
      const int offset = (i % 2 == 0) ? i / 2 : 3 + i / 2;
      KindSeq k;
      for (int j = 0; j < kTrialsPerSchedule; ++j)
        k[j] = base[((j - i + offset) % 6 + 6) % 6];
      plans.push_back({plan_name(1, static_cast<std::size_t>(i)), {i}, k});
    }
  }
  return plans;
}

const CounterbalancePlan& plan_for_seed(const std::vector<CounterbalancePlan>& plans,
                                        std::size_t seed_index) {
  if (plans.empty()) throw std::invalid_argument("empty plan list");
  return plans[seed_index % plans.size()];
}

std::vector<ObjectSpec> TrialSchedule::seen_objects() const {
  std::vector<ObjectSpec> seen;
  for (const auto& t : trials) {
    seen.push_back(t.pair.left);
    seen.push_back(t.pair.right);
  }
  return seen;
}

TrialSchedule build_schedule(const AttributeSpace& space, const CategoryRule& rule,
                             Alignment alignment, SupervisionLevel level,
                             const CounterbalancePlan& plan, Rng& rng, const std::string& run_id) {
  if (static_cast<int>(plan.supervised_positions.size()) != level.labeled_count())
    throw std::invalid_argument("plan " + plan.plan_id + " does not match supervision level " +
                                std::to_string(level.labeled_count()));
  for (int p : plan.supervised_positions)
    if (p < 0 || p >= kTrialsPerSchedule)
      throw std::invalid_argument("plan " + plan.plan_id + " has an out-of-range position");

  TrialSchedule s;
  s.run_id = run_id;
  s.category = rule;
  s.alignment = alignment;
  s.level = level;
  s.plan_id = plan.plan_id;

  auto same_objects = [](const PairSpec& a, const PairSpec& b) {
    return (a.left == b.left && a.right == b.right) || (a.left == b.right && a.right == b.left);
  };

  for (int i = 0; i < kTrialsPerSchedule; ++i) {
    const PairKind kind = plan.kind_sequence[i];
    PairSpec pair;
    int attempts = 0;
    for (;;) {
      pair = make_pair(space, rule, alignment, kind, rng);
      const bool dup = std::any_of(s.trials.begin(), s.trials.end(),
                                   [&](const Trial& t) { return same_objects(t.pair, pair); });
      if (!dup) break;
      if (++attempts > 1000)
        throw ConstraintInfeasible("could not sample six distinct learning pairs");
    }
    s.trials.push_back({run_id + "-t" + std::to_string(i), pair,
                        plan.supervised_positions.contains(i), kind});
  }
  return s;
}

ScheduleViews split_views(const TrialSchedule& s) {
  ScheduleViews v;
  for (int i = 0; i < static_cast<int>(s.trials.size()); ++i) {
    const Trial& t = s.trials[i];
    TrainingTrial tt;
    tt.pair_id = t.pair_id;
    tt.trial_index = i;
    tt.supervised = t.supervised;
    tt.same = t.pair_kind == PairKind::compare;
    if (t.supervised) {
      tt.labels = HalfLabels{t.pair.left_is_member ? 1 : 0, t.pair.right_is_member ? 1 : 0};
      v.supervised.push_back(std::move(tt));
    } else {
      v.unsupervised.push_back(std::move(tt));
    }
  }
  return v;
}

}  // namespace pairlearn
