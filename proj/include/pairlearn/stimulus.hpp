#pragma once

#include <random>
#include <string>
#include <vector>

#include "pairlearn/attributes.hpp"

namespace pairlearn {

using Rng = std::mt19937_64;

/// A compare or contrast pairing of two objects under one rule.
struct PairSpec {
  ObjectSpec left;
  ObjectSpec right;
  PairKind pair_kind = PairKind::compare;
  Alignment alignment = Alignment::high;
  CategoryRule rule;
  bool left_is_member = false;
  bool right_is_member = false;

  bool operator==(const PairSpec&) const = default;
};

/// Non-target structural attributes that vary in low-alignment pairs, in
/// priority order. Contrast pairs vary the first one (plus color), compare
/// pairs vary the first two.
std::vector<Attribute> low_alignment_confounds(const CategoryRule& rule);

PairSpec make_pair(const AttributeSpace& space, const CategoryRule& rule,
                   Alignment alignment, PairKind kind, Rng& rng);

/// Empty iff every PairSpec invariant holds for the pair's cell.
std::vector<std::string> validate_pair(const AttributeSpace& space, const PairSpec& p);

/// Twelve unseen objects, six members and six non-members, in shuffled order.
std::vector<ObjectSpec> build_test_set(const AttributeSpace& space,
                                       const CategoryRule& rule,
                                       const std::vector<ObjectSpec>& seen, Rng& rng);

/// A test-time pairing. Membership is recorded per side but scoring is per
/// image.
struct TestPair {
  ObjectSpec left;
  ObjectSpec right;
  bool left_is_member = false;
  bool right_is_member = false;

  bool operator==(const TestPair&) const = default;
};

std::vector<TestPair> pair_test_items(const CategoryRule& rule,
                                      const std::vector<ObjectSpec>& items, Rng& rng);

}  // namespace pairlearn
