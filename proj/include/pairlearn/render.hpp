#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairlearn/stimulus.hpp"

namespace pairlearn {

/// Bumped whenever any rendering constant changes; stored in manifests.
inline constexpr int kRenderConfigVersion = 1;
inline constexpr int kMinRenderSize = 32;

class ResolutionTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 8-bit interleaved RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  Image crop(int x0, int w) const;
  bool operator==(const Image&) const = default;
};

/// Places `left` and `right` side by side into one image.
Image concat_horizontal(const Image& left, const Image& right);

struct RenderedPair {
  Image paired_image;
  Image left_half;
  Image right_half;
};

struct Rgb {
  std::uint8_t r, g, b;
};

/// Fill color for a palette identifier; throws on unknown names.
Rgb palette_color(const std::string& name);
/// Identifiers the renderer can draw.
bool known_center_shape(const std::string& name);
bool known_appendage_shape(const std::string& name);
bool known_color(const std::string& name);
void check_renderable(const AttributeSpace& space);

/// Renders one object centered on a W x H white canvas.
Image render_object(const AttributeSpace& space, const ObjectSpec& obj, int width, int height);

RenderedPair render_objects(const AttributeSpace& space, const ObjectSpec& left,
                            const ObjectSpec& right, int width, int height);
RenderedPair render_pair(const AttributeSpace& space, const PairSpec& p, int width, int height);
RenderedPair render_test_pair(const AttributeSpace& space, const TestPair& p, int width,
                              int height);

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool empty() const { return x1 < x0; }
};

/// Bounding box of all non-background pixels.
BoundingBox foreground_box(const Image& img);

void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

}  // namespace pairlearn
