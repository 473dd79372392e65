#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "pairlearn/render.hpp"
#include "pairlearn/stimulus.hpp"
#include "test_util.hpp"

using namespace pairlearn;

namespace {

// Attributes on which two objects differ, computed field by field.
std::set<Attribute> differing(const ObjectSpec& a, const ObjectSpec& b) {
  std::set<Attribute> out;
  if (a.center_shape != b.center_shape) out.insert(Attribute::center_shape);
  if (a.appendage_shape != b.appendage_shape) out.insert(Attribute::appendage_shape);
  if (a.size != b.size) out.insert(Attribute::size);
  if (a.pattern != b.pattern) out.insert(Attribute::pattern);
  if (a.color != b.color) out.insert(Attribute::color);
  return out;
}

Attribute target_attribute(const CategoryRule& r) {
  switch (r.feature) {
    case Feature::size: return Attribute::size;
    case Feature::pattern: return Attribute::pattern;
    case Feature::shape:
      return r.shape_locus == ShapeLocus::center ? Attribute::center_shape
                                                 : Attribute::appendage_shape;
  }
  return Attribute::size;
}

// Independent restatement of the pair invariants.
bool pair_ok(const PairSpec& p) {
  const Attribute t = target_attribute(p.rule);
  const auto d = differing(p.left, p.right);
  if (p.pair_kind == PairKind::compare) {
    if (!p.left_is_member || !p.right_is_member) return false;
    if (d.count(t)) return false;
    if (p.alignment == Alignment::high) return d == std::set<Attribute>{Attribute::color};
    if (d.count(Attribute::color)) return false;
    return d.size() >= 2;
  }
  if (p.left_is_member == p.right_is_member) return false;
  if (!d.count(t)) return false;
  if (p.alignment == Alignment::high) return d.size() == 1;
  return d.count(Attribute::color) && d.size() >= 3;
}

}  // namespace

TEST_CASE("attribute space cardinality and enumeration") {
  const AttributeSpace space;
  CHECK(space.object_count() == 4u * 4 * 2 * 3 * 4);
  const auto all = enumerate_objects(space);
  CHECK(all.size() == space.object_count());
  CHECK(std::set<ObjectSpec>(all.begin(), all.end()).size() == all.size());
  for (const auto& o : all) CHECK(is_valid(space, o));
}

TEST_CASE("attribute space rejects duplicates and empty sets") {
  AttributeSpace s;
  s.colors = {"red", "red"};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.colors.clear();
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("membership partitions the space in the expected ratio") {
  const AttributeSpace space;
  const auto all = enumerate_objects(space);
  for (const auto& b : default_categories(space)) {
    const auto n = std::count_if(all.begin(), all.end(),
                                 [&](const ObjectSpec& o) { return member(b.rule, o); });
    int divisor = 0;
    switch (b.rule.feature) {
      case Feature::size: divisor = 2; break;
      case Feature::pattern: divisor = 3; break;
      case Feature::shape: divisor = static_cast<int>(space.center_shapes.size()); break;
    }
    CHECK(n * divisor == static_cast<long>(all.size()));
  }
}

TEST_CASE("member follows the rule's attribute") {
  CategoryRule r{"Adet", Feature::pattern, static_cast<int>(PatternValue::dotted)};
  ObjectSpec o;
  o.pattern = PatternValue::dotted;
  CHECK(member(r, o));
  o.pattern = PatternValue::striped;
  CHECK_FALSE(member(r, o));
  CategoryRule app{"Toma", Feature::shape, 2, ShapeLocus::appendage};
  o.appendage_shape = 2;
  o.center_shape = 0;
  CHECK(member(app, o));
  o.appendage_shape = 1;
  o.center_shape = 2;
  CHECK_FALSE(member(app, o));
}

TEST_CASE("default categories cover every feature and alignment once") {
  const AttributeSpace space;
  const auto cats = default_categories(space);
  REQUIRE(cats.size() == 6);
  std::set<std::pair<Feature, Alignment>> cells;
  for (const auto& c : cats) cells.insert({c.rule.feature, c.alignment});
  CHECK(cells.size() == 6);
  CHECK(find_category(cats, "Modi").rule.feature == Feature::shape);
  CHECK_THROWS(find_category(cats, "Blorp"));
}

TEST_CASE("generated pairs satisfy the pair invariants") {
  const AttributeSpace space;
  Rng rng(7);
  for (const auto& b : default_categories(space))
    for (Alignment a : kAllAlignments)
      for (PairKind k : {PairKind::compare, PairKind::contrast})
        for (int i = 0; i < 500; ++i) {
          const PairSpec p = make_pair(space, b.rule, a, k, rng);
          CHECK(validate_pair(space, p).empty());
          CHECK(pair_ok(p));
          CHECK(p.left_is_member == member(b.rule, p.left));
          CHECK(p.right_is_member == member(b.rule, p.right));
        }
}

TEST_CASE("size rule low contrast varies size, color and center shape") {
  const AttributeSpace space;
  const CategoryRule r{"Hux", Feature::size, static_cast<int>(SizeValue::small)};
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const PairSpec p = make_pair(space, r, Alignment::low, PairKind::contrast, rng);
    const auto d = differing(p.left, p.right);
    CHECK(d.count(Attribute::size));
    CHECK(d.count(Attribute::color));
    CHECK(d.count(Attribute::center_shape));
  }
}

TEST_CASE("contrast member side is roughly balanced") {
  const AttributeSpace space;
  const CategoryRule r{"Zorg", Feature::size, 0};
  Rng rng(3);
  int left = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i)
    left += make_pair(space, r, Alignment::high, PairKind::contrast, rng).left_is_member;
  CHECK(left > n * 0.45);
  CHECK(left < n * 0.55);
}

TEST_CASE("validator reports constructed violations") {
  const AttributeSpace space;
  const CategoryRule r{"Zorg", Feature::size, 0};
  Rng rng(5);
  PairSpec p = make_pair(space, r, Alignment::high, PairKind::contrast, rng);
  p.right.color = (p.left.color + 1) % 4;
  CHECK(validate_pair(space, p).size() == 1);

  PairSpec c = make_pair(space, r, Alignment::high, PairKind::compare, rng);
  c.right_is_member = false;
  CHECK_FALSE(validate_pair(space, c).empty());
}

TEST_CASE("infeasible space raises") {
  AttributeSpace space;
  space.colors = {"red"};
  const CategoryRule r{"Zorg", Feature::size, 0};
  Rng rng(1);
  CHECK_THROWS_AS(make_pair(space, r, Alignment::high, PairKind::compare, rng),
                  ConstraintInfeasible);
}

TEST_CASE("test set holds twelve unseen objects, half members") {
  const AttributeSpace space;
  Rng rng(9);
  for (const auto& b : default_categories(space)) {
    std::vector<ObjectSpec> seen;
    for (int i = 0; i < 6; ++i) {
      const auto p = make_pair(space, b.rule, b.alignment,
                               i % 2 ? PairKind::compare : PairKind::contrast, rng);
      seen.push_back(p.left);
      seen.push_back(p.right);
    }
    const auto items = build_test_set(space, b.rule, seen, rng);
    REQUIRE(items.size() == 12);
    CHECK(std::count_if(items.begin(), items.end(),
                        [&](const ObjectSpec& o) { return member(b.rule, o); }) == 6);
    CHECK(std::set<ObjectSpec>(items.begin(), items.end()).size() == 12);
    for (const auto& o : items) CHECK(std::find(seen.begin(), seen.end(), o) == seen.end());

    const auto pairs = pair_test_items(b.rule, items, rng);
    REQUIRE(pairs.size() == 6);
    std::multiset<ObjectSpec> used;
    for (const auto& tp : pairs) {
      CHECK(tp.left_is_member == member(b.rule, tp.left));
      CHECK(tp.right_is_member == member(b.rule, tp.right));
      used.insert(tp.left);
      used.insert(tp.right);
    }
    CHECK(used == std::multiset<ObjectSpec>(items.begin(), items.end()));
  }
}

TEST_CASE("halves are exact crops and rendering is deterministic") {
  const AttributeSpace space;
  Rng rng(21);
  for (const auto& b : default_categories(space)) {
    const auto p = make_pair(space, b.rule, b.alignment, PairKind::contrast, rng);
    const auto r1 = render_pair(space, p, 64, 64);
    const auto r2 = render_pair(space, p, 64, 64);
    CHECK(r1.paired_image == r2.paired_image);
    CHECK(r1.paired_image.width == 128);
    CHECK(r1.paired_image.height == 64);
    CHECK(r1.left_half == r1.paired_image.crop(0, 64));
    CHECK(r1.right_half == r1.paired_image.crop(64, 64));
    CHECK(concat_horizontal(r1.left_half, r1.right_half) == r1.paired_image);
  }
}

TEST_CASE("large objects are at least 1.6 times the extent of small ones") {
  const AttributeSpace space;
  for (int res : {32, 64, 112}) {
    for (int shape = 0; shape < 4; ++shape) {
      ObjectSpec o;
      o.center_shape = shape;
      o.size = SizeValue::large;
      const auto big = foreground_box(render_object(space, o, res, res));
      o.size = SizeValue::small;
      const auto small = foreground_box(render_object(space, o, res, res));
      REQUIRE_FALSE(small.empty());
      const double ratio = std::max(big.width(), big.height()) /
                           static_cast<double>(std::max(small.width(), small.height()));
      CHECK(ratio >= 1.6);
    }
  }
}

TEST_CASE("objects keep a ten percent margin") {
  const AttributeSpace space;
  for (const auto& o : enumerate_objects(space)) {
    if (o.size != SizeValue::large) continue;
    const auto box = foreground_box(render_object(space, o, 64, 64));
    CHECK(box.x0 >= 6);
    CHECK(box.y0 >= 6);
    CHECK(box.x1 <= 57);
    CHECK(box.y1 <= 57);
  }
}

TEST_CASE("patterns produce distinct rasters at the minimum resolution") {
  const AttributeSpace space;
  ObjectSpec o;
  std::vector<Image> imgs;
  for (auto pat : {PatternValue::dotted, PatternValue::striped, PatternValue::plain}) {
    o.pattern = pat;
    imgs.push_back(render_object(space, o, 32, 32));
  }
  CHECK(imgs[0] != imgs[1]);
  CHECK(imgs[1] != imgs[2]);
  CHECK(imgs[0] != imgs[2]);
}

TEST_CASE("too small a canvas is rejected") {
  const AttributeSpace space;
  CHECK_THROWS_AS(render_object(space, ObjectSpec{}, 31, 64), ResolutionTooSmall);
  CHECK_THROWS_AS(render_object(space, ObjectSpec{}, 64, 16), ResolutionTooSmall);
}

TEST_CASE("png round trip") {
  const AttributeSpace space;
  Rng rng(2);
  const auto p = make_pair(space, default_categories(space)[0].rule, Alignment::low,
                           PairKind::compare, rng);
  const auto r = render_pair(space, p, 48, 48);
  test_util::TempDir dir;
  write_png(r.paired_image, dir.path() / "x.png");
  CHECK(read_png(dir.path() / "x.png") == r.paired_image);
}
