#include "pairlearn/attributes.hpp"

#include <algorithm>
#include <set>

namespace pairlearn {

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::size: return "size";
    case Feature::shape: return "shape";
    case Feature::pattern: return "pattern";
  }
  return "?";
}

std::string_view to_string(Alignment a) { return a == Alignment::high ? "high" : "low"; }

std::string_view to_string(PairKind k) {
  return k == PairKind::compare ? "compare" : "contrast";
}

std::string_view to_string(SizeValue s) { return s == SizeValue::large ? "large" : "small"; }

std::string_view to_string(PatternValue p) {
  switch (p) {
    case PatternValue::dotted: return "dotted";
    case PatternValue::striped: return "striped";
    case PatternValue::plain: return "plain";
  }
  return "?";
}

std::string_view to_string(ShapeLocus l) {
  return l == ShapeLocus::center ? "center" : "appendage";
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::center_shape: return "center_shape";
    case Attribute::appendage_shape: return "appendage_shape";
    case Attribute::size: return "size";
    case Attribute::pattern: return "pattern";
    case Attribute::color: return "color";
  }
  return "?";
}

Feature parse_feature(std::string_view s) {
  if (s == "size") return Feature::size;
  if (s == "shape") return Feature::shape;
  if (s == "pattern") return Feature::pattern;
  throw std::invalid_argument("unknown feature '" + std::string(s) + "'");
}

Alignment parse_alignment(std::string_view s) {
  if (s == "high") return Alignment::high;
  if (s == "low") return Alignment::low;
  throw std::invalid_argument("unknown alignment '" + std::string(s) + "'");
}

PairKind parse_pair_kind(std::string_view s) {
  if (s == "compare") return PairKind::compare;
  if (s == "contrast") return PairKind::contrast;
  throw std::invalid_argument("unknown pair kind '" + std::string(s) + "'");
}

ShapeLocus parse_shape_locus(std::string_view s) {
  if (s == "center") return ShapeLocus::center;
  if (s == "appendage") return ShapeLocus::appendage;
  throw std::invalid_argument("unknown shape locus '" + std::string(s) + "'");
}

int AttributeSpace::cardinality(Attribute a) const {
  switch (a) {
    case Attribute::center_shape: return static_cast<int>(center_shapes.size());
    case Attribute::appendage_shape: return static_cast<int>(appendage_shapes.size());
    case Attribute::size: return 2;
    case Attribute::pattern: return 3;
    case Attribute::color: return static_cast<int>(colors.size());
  }
  return 0;
}

std::size_t AttributeSpace::object_count() const {
  std::size_t n = 1;
  for (Attribute a : kAllAttributes) n *= static_cast<std::size_t>(cardinality(a));
  return n;
}

namespace {

void check_ids(const std::vector<std::string>& ids, const char* what) {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + " must not be empty");
  std::set<std::string> uniq(ids.begin(), ids.end());
  if (uniq.size() != ids.size())
    throw std::invalid_argument(std::string(what) + " contains duplicate identifiers");
}

}  // namespace

void AttributeSpace::validate() const {
  check_ids(center_shapes, "center_shapes");
  check_ids(appendage_shapes, "appendage_shapes");
  check_ids(colors, "colors");
}

int attribute_value(const ObjectSpec& obj, Attribute a) {
  switch (a) {
    case Attribute::center_shape: return obj.center_shape;
    case Attribute::appendage_shape: return obj.appendage_shape;
    case Attribute::size: return static_cast<int>(obj.size);
    case Attribute::pattern: return static_cast<int>(obj.pattern);
    case Attribute::color: return obj.color;
  }
  return -1;
}

void set_attribute(ObjectSpec& obj, Attribute a, int value) {
  switch (a) {
    case Attribute::center_shape: obj.center_shape = value; break;
    case Attribute::appendage_shape: obj.appendage_shape = value; break;
    case Attribute::size: obj.size = static_cast<SizeValue>(value); break;
    case Attribute::pattern: obj.pattern = static_cast<PatternValue>(value); break;
    case Attribute::color: obj.color = value; break;
  }
}

bool is_valid(const AttributeSpace& space, const ObjectSpec& obj) {
  return std::all_of(kAllAttributes.begin(), kAllAttributes.end(), [&](Attribute a) {
    const int v = attribute_value(obj, a);
    return v >= 0 && v < space.cardinality(a);
  });
}

std::string value_name(const AttributeSpace& space, Attribute a, int value) {
  if (value < 0 || value >= space.cardinality(a))
    throw std::out_of_range("attribute value out of range for " + std::string(to_string(a)));
  switch (a) {
    case Attribute::center_shape: return space.center_shapes[value];
    case Attribute::appendage_shape: return space.appendage_shapes[value];
    case Attribute::size: return std::string(to_string(static_cast<SizeValue>(value)));
    case Attribute::pattern: return std::string(to_string(static_cast<PatternValue>(value)));
    case Attribute::color: return space.colors[value];
  }
  return {};
}

int value_index(const AttributeSpace& space, Attribute a, std::string_view name) {
  for (int v = 0; v < space.cardinality(a); ++v)
    if (value_name(space, a, v) == name) return v;
  throw std::invalid_argument("'" + std::string(name) + "' is not a value of " +
                              std::string(to_string(a)));
}

std::vector<ObjectSpec> enumerate_objects(const AttributeSpace& space) {
  std::vector<ObjectSpec> out;
  out.reserve(space.object_count());
  ObjectSpec o;
  for (int c = 0; c < space.cardinality(Attribute::center_shape); ++c)
    for (int a = 0; a < space.cardinality(Attribute::appendage_shape); ++a)
      for (int s = 0; s < 2; ++s)
        for (int p = 0; p < 3; ++p)
          for (int k = 0; k < space.cardinality(Attribute::color); ++k) {
            o.center_shape = c;
            o.appendage_shape = a;
            o.size = static_cast<SizeValue>(s);
            o.pattern = static_cast<PatternValue>(p);
            o.color = k;
            out.push_back(o);
          }
  return out;
}

Attribute rule_attribute(const CategoryRule& rule) {
  switch (rule.feature) {
    case Feature::size: return Attribute::size;
    case Feature::pattern: return Attribute::pattern;
    case Feature::shape:
      return rule.shape_locus == ShapeLocus::center ? Attribute::center_shape
                                                    : Attribute::appendage_shape;
  }
  return Attribute::size;
}

bool member(const CategoryRule& rule, const ObjectSpec& obj) {
  return attribute_value(obj, rule_attribute(rule)) == rule.target_value;
}

void validate_rule(const AttributeSpace& space, const CategoryRule& rule) {
  const Attribute a = rule_attribute(rule);
  if (rule.target_value < 0 || rule.target_value >= space.cardinality(a))
    throw std::invalid_argument("rule '" + rule.name + "': target value out of range for " +
                                std::string(to_string(a)));
}

std::vector<CategoryBinding> default_categories(const AttributeSpace& space) {
  auto shape = [&](std::string_view name) {
    return value_index(space, Attribute::center_shape, name);
  };
  std::vector<CategoryBinding> cats = {
      {{"Modi", Feature::shape, shape("circle"), ShapeLocus::center}, Alignment::high},
      {{"Toma", Feature::shape, shape("triangle"), ShapeLocus::center}, Alignment::low},
      {{"Zorg", Feature::size, static_cast<int>(SizeValue::large), ShapeLocus::center},
       Alignment::high},
      {{"Hux", Feature::size, static_cast<int>(SizeValue::small), ShapeLocus::center},
       Alignment::low},
      {{"Adet", Feature::pattern, static_cast<int>(PatternValue::dotted), ShapeLocus::center},
       Alignment::high},
      {{"Bem", Feature::pattern, static_cast<int>(PatternValue::striped), ShapeLocus::center},
       Alignment::low},
  };
  return cats;
}

const CategoryBinding& find_category(const std::vector<CategoryBinding>& cats,
                                     std::string_view name) {
  for (const auto& c : cats)
    if (c.rule.name == name) return c;
  throw std::invalid_argument("unknown category '" + std::string(name) + "'");
}

const CategoryBinding& find_category(const std::vector<CategoryBinding>& cats,
                                     Feature feature, Alignment alignment) {
  for (const auto& c : cats)
    if (c.rule.feature == feature && c.alignment == alignment) return c;
  throw std::invalid_argument("no category bound to (" + std::string(to_string(feature)) +
                              ", " + std::string(to_string(alignment)) + ")");
}

}  // namespace pairlearn
