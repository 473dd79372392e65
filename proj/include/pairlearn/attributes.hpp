#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pairlearn {

enum class Feature { size, shape, pattern };
enum class Alignment { high, low };
enum class PairKind { compare, contrast };
enum class SizeValue { large, small };
enum class PatternValue { dotted, striped, plain };
enum class ShapeLocus { center, appendage };

/// The five attribute dimensions of a stimulus object. All but `color` are
/// structural.
enum class Attribute { center_shape, appendage_shape, size, pattern, color };

inline constexpr std::array<Attribute, 5> kAllAttributes = {
    Attribute::center_shape, Attribute::appendage_shape, Attribute::size,
    Attribute::pattern, Attribute::color};

inline constexpr std::array<Feature, 3> kAllFeatures = {Feature::size, Feature::shape,
                                                        Feature::pattern};
inline constexpr std::array<Alignment, 2> kAllAlignments = {Alignment::high,
                                                            Alignment::low};

std::string_view to_string(Feature f);
std::string_view to_string(Alignment a);
std::string_view to_string(PairKind k);
std::string_view to_string(SizeValue s);
std::string_view to_string(PatternValue p);
std::string_view to_string(ShapeLocus l);
std::string_view to_string(Attribute a);

Feature parse_feature(std::string_view s);
Alignment parse_alignment(std::string_view s);
PairKind parse_pair_kind(std::string_view s);
ShapeLocus parse_shape_locus(std::string_view s);

/// Raised when a requested pair or test set cannot be built from the space.
class ConstraintInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered value sets for every attribute dimension. Shapes and colors are
/// free identifiers (the renderer must know them); sizes and patterns are
/// fixed by the enums.
struct AttributeSpace {
  std::vector<std::string> center_shapes{"circle", "square", "triangle", "hexagon"};
  std::vector<std::string> appendage_shapes{"spikes", "stubs", "loops", "nub"};
  std::vector<std::string> colors{"red", "blue", "green", "yellow"};

  int cardinality(Attribute a) const;
  /// Total number of distinct objects.
  std::size_t object_count() const;
  /// Throws std::invalid_argument on an empty or duplicated identifier set.
  void validate() const;

  bool operator==(const AttributeSpace&) const = default;
};

struct ObjectSpec {
  int center_shape = 0;
  int appendage_shape = 0;
  SizeValue size = SizeValue::large;
  PatternValue pattern = PatternValue::plain;
  int color = 0;

  auto operator<=>(const ObjectSpec&) const = default;
};

int attribute_value(const ObjectSpec& obj, Attribute a);
void set_attribute(ObjectSpec& obj, Attribute a, int value);
bool is_valid(const AttributeSpace& space, const ObjectSpec& obj);
/// Human-readable value name, e.g. "dotted" or "hexagon".
std::string value_name(const AttributeSpace& space, Attribute a, int value);
int value_index(const AttributeSpace& space, Attribute a, std::string_view name);

/// Every object in the space, in lexicographic attribute order.
std::vector<ObjectSpec> enumerate_objects(const AttributeSpace& space);

struct CategoryRule {
  std::string name;
  Feature feature = Feature::size;
  int target_value = 0;
  ShapeLocus shape_locus = ShapeLocus::center;

  bool operator==(const CategoryRule&) const = default;
};

/// The attribute a rule inspects (shape resolves through the locus).
Attribute rule_attribute(const CategoryRule& rule);
bool member(const CategoryRule& rule, const ObjectSpec& obj);
void validate_rule(const AttributeSpace& space, const CategoryRule& rule);

/// A named category bound to the alignment condition it is taught under.
struct CategoryBinding {
  CategoryRule rule;
  Alignment alignment = Alignment::high;

  bool operator==(const CategoryBinding&) const = default;
};

/// Modi..Bem, one per (feature, alignment) cell.
std::vector<CategoryBinding> default_categories(const AttributeSpace& space);
const CategoryBinding& find_category(const std::vector<CategoryBinding>& cats,
                                     std::string_view name);
const CategoryBinding& find_category(const std::vector<CategoryBinding>& cats,
                                     Feature feature, Alignment alignment);

}  // namespace pairlearn
