#include "pairlearn/render.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>

namespace pairlearn {

namespace {

// Total object radius (body plus appendages) as a fraction of min(W, H).
constexpr double kLargeRadius = 0.38;
constexpr double kSmallRadius = 0.19;
// Body circumradius in units of the total radius.
constexpr double kBodyRadius = 0.6;

const std::map<std::string, Rgb>& palette() {
  static const std::map<std::string, Rgb> p = {
      {"red", {214, 48, 49}},     {"blue", {41, 98, 212}},   {"green", {46, 160, 67}},
      {"yellow", {232, 196, 30}}, {"purple", {136, 78, 186}}, {"orange", {238, 124, 24}},
      {"teal", {24, 150, 150}},   {"pink", {226, 98, 160}},
  };
  return p;
}

struct Polygon {
  int sides;
  double first_vertex;  // radians, image coordinates (y down)
};

const std::map<std::string, Polygon>& polygons() {
  constexpr double pi = std::numbers::pi;
  static const std::map<std::string, Polygon> p = {
      {"triangle", {3, -pi / 2}}, {"square", {4, pi / 4}},    {"diamond", {4, 0.0}},
      {"pentagon", {5, -pi / 2}}, {"hexagon", {6, 0.0}},
  };
  return p;
}

const std::array<std::string, 4> kAppendages = {"spikes", "stubs", "loops", "nub"};

bool inside_polygon(double u, double v, const Polygon& poly, double radius) {
  const double step = 2.0 * std::numbers::pi / poly.sides;
  const double apothem = radius * std::cos(step / 2.0);
  for (int k = 0; k < poly.sides; ++k) {
    const double normal = poly.first_vertex + step * (k + 0.5);
    if (u * std::cos(normal) + v * std::sin(normal) > apothem) return false;
  }
  return true;
}

struct Ray {
  double cos, sin;
};

Ray ray_at_degrees(double deg) {
  const double r = deg * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

bool inside_appendage(double u, double v, const std::string& kind) {
  if (kind == "spikes") {
    for (int k = 0; k < 6; ++k) {
      const Ray d = ray_at_degrees(30.0 + 60.0 * k);
      const double t = u * d.cos + v * d.sin;
      const double perp = -u * d.sin + v * d.cos;
      if (t >= 0.5 && t <= 1.0 && std::abs(perp) <= 0.28 * (1.0 - t)) return true;
    }
    return false;
  }
  if (kind == "stubs") {
    for (int k = 0; k < 4; ++k) {
      const Ray d = ray_at_degrees(45.0 + 90.0 * k);
      const double t = u * d.cos + v * d.sin;
      const double perp = -u * d.sin + v * d.cos;
      if (t >= 0.5 && t <= 0.84 && std::abs(perp) <= 0.1) return true;
    }
    return false;
  }
  if (kind == "loops") {
    for (int k = 0; k < 4; ++k) {
      const Ray d = ray_at_degrees(90.0 * k);
      const double du = u - 0.78 * d.cos;
      const double dv = v - 0.78 * d.sin;
      const double r2 = du * du + dv * dv;
      if (r2 >= 0.1 * 0.1 && r2 <= 0.2 * 0.2) return true;
    }
    return false;
  }
  if (kind == "nub") {
    const double dv = v + 0.62;
    return u * u + dv * dv <= 0.16 * 0.16;
  }
  throw std::invalid_argument("unknown appendage shape '" + kind + "'");
}

bool inside_body(double u, double v, const std::string& kind) {
  if (kind == "circle") return u * u + v * v <= kBodyRadius * kBodyRadius;
  const auto it = polygons().find(kind);
  if (it == polygons().end()) throw std::invalid_argument("unknown center shape '" + kind + "'");
  return inside_polygon(u, v, it->second, kBodyRadius);
}

// Pattern marks, in pixel offsets from the object center; frequencies are tied
// to the canvas height so they are identical for large and small objects.
bool pattern_mark(double px, double py, PatternValue pattern, int height) {
  switch (pattern) {
    case PatternValue::plain: return false;
    case PatternValue::dotted: {
      const double period = height / 8.0;
      const double radius = height / 32.0;
      const double dx = px - period * std::round(px / period);
      const double dy = py - period * std::round(py / period);
      return dx * dx + dy * dy <= radius * radius;
    }
    case PatternValue::striped: {
      const double period = height / 8.0;
      const double s = (px + py) / std::numbers::sqrt2;
      const double phase = s / period - std::floor(s / period);
      return phase < 0.5;
    }
  }
  return false;
}

void draw_object(Image& img, int x_offset, int width, int height, const AttributeSpace& space,
                 const ObjectSpec& obj) {
  const Rgb fill = palette_color(space.colors.at(obj.color));
  const Rgb accent{static_cast<std::uint8_t>(fill.r / 2), static_cast<std::uint8_t>(fill.g / 2),
                   static_cast<std::uint8_t>(fill.b / 2)};
  const std::string& body = space.center_shapes.at(obj.center_shape);
  const std::string& appendage = space.appendage_shapes.at(obj.appendage_shape);
  const double radius =
      (obj.size == SizeValue::large ? kLargeRadius : kSmallRadius) * std::min(width, height);
  const double cx = width / 2.0;
  const double cy = height / 2.0;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5 - cx;
      const double py = y + 0.5 - cy;
      const double u = px / radius;
      const double v = py / radius;
      const Rgb* c = nullptr;
      if (inside_body(u, v, body)) {
        c = pattern_mark(px, py, obj.pattern, height) ? &accent : &fill;
      } else if (inside_appendage(u, v, appendage)) {
        c = &fill;
      }
      if (c) {
        std::uint8_t* p = img.pixel(x_offset + x, y);
        p[0] = c->r;
        p[1] = c->g;
        p[2] = c->b;
      }
    }
  }
}

void check_size(int width, int height) {
  if (width < kMinRenderSize || height < kMinRenderSize)
    throw ResolutionTooSmall("render size " + std::to_string(width) + "x" +
                             std::to_string(height) + " is below the " +
                             std::to_string(kMinRenderSize) + "x" +
                             std::to_string(kMinRenderSize) + " minimum");
}

}  // namespace

Image Image::crop(int x0, int w) const {
  if (x0 < 0 || w < 0 || x0 + w > width) throw std::out_of_range("crop outside image");
  Image out(w, height);
  for (int y = 0; y < height; ++y)
    std::memcpy(out.pixel(0, y), pixel(x0, y), static_cast<std::size_t>(w) * 3);
  return out;
}

Image concat_horizontal(const Image& left, const Image& right) {
  if (left.height != right.height) throw std::invalid_argument("height mismatch in concat");
  Image out(left.width + right.width, left.height);
  for (int y = 0; y < left.height; ++y) {
    std::memcpy(out.pixel(0, y), left.pixel(0, y), static_cast<std::size_t>(left.width) * 3);
    std::memcpy(out.pixel(left.width, y), right.pixel(0, y),
                static_cast<std::size_t>(right.width) * 3);
  }
  return out;
}

Rgb palette_color(const std::string& name) {
  const auto it = palette().find(name);
  if (it == palette().end()) throw std::invalid_argument("unknown color '" + name + "'");
  return it->second;
}

bool known_center_shape(const std::string& name) {
  return name == "circle" || polygons().contains(name);
}

bool known_appendage_shape(const std::string& name) {
  return std::find(kAppendages.begin(), kAppendages.end(), name) != kAppendages.end();
}

bool known_color(const std::string& name) { return palette().contains(name); }

void check_renderable(const AttributeSpace& space) {
  for (const auto& s : space.center_shapes)
    if (!known_center_shape(s)) throw std::invalid_argument("cannot render center shape '" + s + "'");
  for (const auto& s : space.appendage_shapes)
    if (!known_appendage_shape(s))
      throw std::invalid_argument("cannot render appendage shape '" + s + "'");
  for (const auto& c : space.colors)
    if (!known_color(c)) throw std::invalid_argument("cannot render color '" + c + "'");
}

Image render_object(const AttributeSpace& space, const ObjectSpec& obj, int width, int height) {
  check_size(width, height);
  Image img(width, height);
  draw_object(img, 0, width, height, space, obj);
  return img;
}

RenderedPair render_objects(const AttributeSpace& space, const ObjectSpec& left,
                            const ObjectSpec& right, int width, int height) {
  check_size(width, height);
  RenderedPair rp;
  rp.paired_image = Image(2 * width, height);
  draw_object(rp.paired_image, 0, width, height, space, left);
  draw_object(rp.paired_image, width, width, height, space, right);
  rp.left_half = rp.paired_image.crop(0, width);
  rp.right_half = rp.paired_image.crop(width, width);
  return rp;
}

RenderedPair render_pair(const AttributeSpace& space, const PairSpec& p, int width, int height) {
  return render_objects(space, p.left, p.right, width, height);
}

RenderedPair render_test_pair(const AttributeSpace& space, const TestPair& p, int width,
                              int height) {
  return render_objects(space, p.left, p.right, width, height);
}

BoundingBox foreground_box(const Image& img) {
  BoundingBox b{img.width, img.height, -1, -1};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      if (p[0] == 255 && p[1] == 255 && p[2] == 255) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  if (b.x1 < 0) return BoundingBox{};
  return b;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw std::runtime_error("failed to write " + path.string() + ": " + pi.message);
}

Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str()))
    throw std::runtime_error("failed to read " + path.string() + ": " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr))
    throw std::runtime_error("failed to decode " + path.string() + ": " + pi.message);
  return img;
}

}  // namespace pairlearn
