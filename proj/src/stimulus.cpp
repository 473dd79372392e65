#include "pairlearn/stimulus.hpp"

#include <algorithm>
#include <set>

namespace pairlearn {

namespace {

constexpr std::array<Attribute, 4> kStructural = {
    Attribute::center_shape, Attribute::appendage_shape, Attribute::pattern, Attribute::size};

int uniform_index(int n, Rng& rng) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

int other_value(const AttributeSpace& space, Attribute a, int current, Rng& rng) {
  const int n = space.cardinality(a);
  // Draw from the n-1 values that differ from `current`.
  const int v = uniform_index(n - 1, rng);
  return v >= current ? v + 1 : v;
}

ObjectSpec random_object(const AttributeSpace& space, Rng& rng) {
  ObjectSpec o;
  for (Attribute a : kAllAttributes) set_attribute(o, a, uniform_index(space.cardinality(a), rng));
  return o;
}

std::vector<Attribute> differing(const ObjectSpec& l, const ObjectSpec& r) {
  std::vector<Attribute> d;
  for (Attribute a : kAllAttributes)
    if (attribute_value(l, a) != attribute_value(r, a)) d.push_back(a);
  return d;
}

bool contains(const std::vector<Attribute>& v, Attribute a) {
  return std::find(v.begin(), v.end(), a) != v.end();
}

std::string join_names(const std::vector<Attribute>& v) {
  std::string s;
  for (Attribute a : v) {
    if (!s.empty()) s += ",";
    s += to_string(a);
  }
  return s.empty() ? "none" : s;
}

}  // namespace

std::vector<Attribute> low_alignment_confounds(const CategoryRule& rule) {
  const Attribute target = rule_attribute(rule);
  std::vector<Attribute> out;
  for (Attribute a : kStructural)
    if (a != target) out.push_back(a);
  return out;
}

PairSpec make_pair(const AttributeSpace& space, const CategoryRule& rule, Alignment alignment,
                   PairKind kind, Rng& rng) {
  validate_rule(space, rule);
  if (space.cardinality(Attribute::color) < 2)
    throw ConstraintInfeasible("pair construction needs at least 2 colors");
  for (Attribute a : kStructural)
    if (space.cardinality(a) < 2)
      throw ConstraintInfeasible("pair construction needs at least 2 values of " +
                                 std::string(to_string(a)));

  const Attribute target = rule_attribute(rule);
  const auto confounds = low_alignment_confounds(rule);

  PairSpec p;
  p.pair_kind = kind;
  p.alignment = alignment;
  p.rule = rule;

  ObjectSpec base = random_object(space, rng);
  set_attribute(base, target, rule.target_value);

  if (kind == PairKind::compare) {
    ObjectSpec other = base;
    if (alignment == Alignment::high) {
      other.color = other_value(space, Attribute::color, base.color, rng);
    } else {
      for (std::size_t i = 0; i < 2; ++i)
        set_attribute(other, confounds[i],
                      other_value(space, confounds[i], attribute_value(base, confounds[i]), rng));
    }
    p.left = base;
    p.right = other;
    p.left_is_member = p.right_is_member = true;
    return p;
  }

  ObjectSpec outsider = base;
  set_attribute(outsider, target, other_value(space, target, rule.target_value, rng));
  if (alignment == Alignment::low) {
    outsider.color = other_value(space, Attribute::color, base.color, rng);
    set_attribute(outsider, confounds[0],
                  other_value(space, confounds[0], attribute_value(base, confounds[0]), rng));
  }
  const bool member_left = std::bernoulli_distribution(0.5)(rng);
  p.left = member_left ? base : outsider;
  p.right = member_left ? outsider : base;
  p.left_is_member = member_left;
  p.right_is_member = !member_left;
  return p;
}

std::vector<std::string> validate_pair(const AttributeSpace& space, const PairSpec& p) {
  std::vector<std::string> v;
  if (!is_valid(space, p.left)) v.push_back("left object outside the attribute space");
  if (!is_valid(space, p.right)) v.push_back("right object outside the attribute space");
  const Attribute target = rule_attribute(p.rule);
  if (p.rule.target_value < 0 || p.rule.target_value >= space.cardinality(target))
    v.push_back("rule target value outside the attribute space");
  if (!v.empty()) return v;

  if (p.left_is_member != member(p.rule, p.left) || p.right_is_member != member(p.rule, p.right))
    v.push_back("membership flag disagrees with the category rule");

  if (p.pair_kind == PairKind::compare && !(p.left_is_member && p.right_is_member))
    v.push_back("pair_kind/membership mismatch: compare pair must have two members");
  if (p.pair_kind == PairKind::contrast && p.left_is_member == p.right_is_member)
    v.push_back("pair_kind/membership mismatch: contrast pair must have exactly one member");

  const auto diff = differing(p.left, p.right);
  std::size_t structural_other = 0;
  for (Attribute a : diff)
    if (a != target && a != Attribute::color) ++structural_other;

  const std::string cell = std::string(to_string(p.alignment)) + "-alignment " +
                           std::string(to_string(p.pair_kind));
  if (p.alignment == Alignment::high) {
    const std::vector<Attribute> expected = {p.pair_kind == PairKind::contrast ? target
                                                                              : Attribute::color};
    if (diff != expected)
      v.push_back(cell + " must differ only on " + join_names(expected) + " (differs on " +
                  join_names(diff) + ")");
  } else if (p.pair_kind == PairKind::contrast) {
    if (!contains(diff, target)) v.push_back(cell + " must differ on the target feature");
    if (!contains(diff, Attribute::color)) v.push_back(cell + " must differ in color");
    if (structural_other < 1)
      v.push_back(cell + " must differ on at least one non-target structural attribute");
  } else {
    if (contains(diff, target)) v.push_back(cell + " must share the target feature");
    if (contains(diff, Attribute::color)) v.push_back(cell + " must share color");
    if (structural_other < 2)
      v.push_back(cell + " must differ on at least two non-target structural attributes");
  }
  return v;
}

std::vector<ObjectSpec> build_test_set(const AttributeSpace& space, const CategoryRule& rule,
                                       const std::vector<ObjectSpec>& seen, Rng& rng) {
  validate_rule(space, rule);
  const std::set<ObjectSpec> seen_set(seen.begin(), seen.end());
  std::vector<ObjectSpec> members, others;
  for (const auto& o : enumerate_objects(space)) {
    if (seen_set.contains(o)) continue;
    (member(rule, o) ? members : others).push_back(o);
  }
  if (members.size() < 6 || others.size() < 6)
    throw ConstraintInfeasible("test set exhaustion: only " + std::to_string(members.size()) +
                               " unseen members and " + std::to_string(others.size()) +
                               " unseen non-members available");

  std::shuffle(members.begin(), members.end(), rng);
  std::shuffle(others.begin(), others.end(), rng);
  std::vector<ObjectSpec> out(members.begin(), members.begin() + 6);
  out.insert(out.end(), others.begin(), others.begin() + 6);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<TestPair> pair_test_items(const CategoryRule& rule,
                                      const std::vector<ObjectSpec>& items, Rng& rng) {
  if (items.size() != 12)
    throw std::length_error("test pairing needs exactly 12 items, got " +
                            std::to_string(items.size()));
  std::vector<ObjectSpec> order = items;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<TestPair> pairs;
  for (std::size_t i = 0; i < order.size(); i += 2)
    pairs.push_back({order[i], order[i + 1], member(rule, order[i]), member(rule, order[i + 1])});
  return pairs;
}

}  // namespace pairlearn
