#include "pairlearn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "pairlearn/io.hpp"

namespace pairlearn {

namespace k = kernels;
using nlohmann::json;

std::string_view to_string(Profile p) { return p == Profile::full ? "full" : "desk"; }

Profile parse_profile(std::string_view s) {
  if (s == "full") return Profile::full;
  if (s == "desk") return Profile::desk;
  throw std::invalid_argument("unknown profile '" + std::string(s) + "' (expected full or desk)");
}

void EncoderConfig::validate() const {
  if (embedding_dim <= 0) throw std::invalid_argument("embedding_dim must be > 0");
  if (projection_dim <= 0) throw std::invalid_argument("projection_dim must be > 0");
  if (base_width <= 0) throw std::invalid_argument("base_width must be > 0");
  if (input_width < kMinRenderSize || input_height < kMinRenderSize)
    throw std::invalid_argument("encoder input must be at least 32x32");
}

EncoderConfig desk_encoder(std::uint64_t seed) {
  EncoderConfig c;
  c.profile = Profile::desk;
  c.embedding_dim = 128;
  c.input_width = c.input_height = 64;
  c.base_width = 8;
  c.projection_dim = 128;
  c.seed = seed;
  return c;
}

EncoderConfig full_encoder(std::uint64_t seed) {
  EncoderConfig c;
  c.profile = Profile::full;
  c.embedding_dim = 512;
  c.input_width = c.input_height = 112;
  c.base_width = 64;
  c.projection_dim = 128;
  c.seed = seed;
  return c;
}

int Architecture::conv_layer_count() const {
  int n = 1;
  for (const auto& b : blocks) n += 1 + (b.conv2 ? 1 : 0) + (b.projection ? 1 : 0);
  return n;
}

namespace {

k::ConvShape conv(int in_c, int out_c, int h, int w, int kernel, int stride, int pad) {
  return {in_c, out_c, h, w, kernel, stride, pad};
}

void add_block(Architecture& a, int& c, int& h, int& w, int out_c, int stride, bool two_convs) {
  ResidualBlockSpec b;
  b.conv1 = conv(c, out_c, h, w, 3, stride, 1);
  const int oh = b.conv1.out_height(), ow = b.conv1.out_width();
  if (two_convs) b.conv2 = conv(out_c, out_c, oh, ow, 3, 1, 1);
  if (stride != 1 || c != out_c) b.projection = conv(c, out_c, h, w, 1, stride, 0);
  a.blocks.push_back(b);
  c = out_c;
  h = oh;
  w = ow;
}

}  // namespace

Architecture build_architecture(const EncoderConfig& cfg) {
  cfg.validate();
  Architecture a;
  const int bw = cfg.base_width;
  if (cfg.profile == Profile::desk) {
    a.stem = conv(3, bw, cfg.input_height, cfg.input_width, 3, 2, 1);
  } else {
    a.stem = conv(3, bw, cfg.input_height, cfg.input_width, 7, 2, 3);
  }
  a.pooled_height = a.stem.out_height() / 2;
  a.pooled_width = a.stem.out_width() / 2;
  int c = bw, h = a.pooled_height, w = a.pooled_width;
  if (cfg.profile == Profile::desk) {
    // Six single-convolution residual blocks over three stages.
    for (int stage = 0; stage < 3; ++stage) {
      add_block(a, c, h, w, bw << stage, stage == 0 ? 1 : 2, false);
      add_block(a, c, h, w, bw << stage, 1, false);
    }
  } else {
    // ResNet-18: four stages of two basic blocks.
    for (int stage = 0; stage < 4; ++stage) {
      add_block(a, c, h, w, bw << stage, stage == 0 ? 1 : 2, true);
      add_block(a, c, h, w, bw << stage, 1, true);
    }
  }
  a.feature_channels = c;
  a.feature_height = h;
  a.feature_width = w;
  a.embed_layer = c != cfg.embedding_dim;
  a.embedding_dim = cfg.embedding_dim;
  a.projection_dim = cfg.projection_dim;
  return a;
}

const TensorSlot& ModelParams::slot(std::string_view name) const {
  for (const auto& s : slots)
    if (s.name == name) return s;
  throw std::out_of_range("no parameter slot '" + std::string(name) + "'");
}

std::span<const double> ModelParams::view(std::string_view name) const {
  const auto& s = slot(name);
  return std::span<const double>(values).subspan(s.offset, s.size);
}

std::span<double> ModelParams::view(std::string_view name) {
  const auto& s = slot(name);
  return std::span<double>(values).subspan(s.offset, s.size);
}

std::span<const double> ModelParams::group(ParamGroup g) const {
  std::size_t lo = values.size(), hi = 0;
  for (const auto& s : slots)
    if (s.group == g) {
      lo = std::min(lo, s.offset);
      hi = std::max(hi, s.offset + s.size);
    }
  if (hi <= lo) return {};
  return std::span<const double>(values).subspan(lo, hi - lo);
}

ModelParams make_layout(const EncoderConfig& cfg) {
  const Architecture a = build_architecture(cfg);
  ModelParams p;
  p.config = cfg;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t size, ParamGroup g, int fan_in) {
    p.slots.push_back({std::move(name), offset, size, g, fan_in});
    offset += size;
  };
  auto add_conv = [&](const std::string& name, const k::ConvShape& s) {
    add(name + ".w", s.weight_size(), ParamGroup::encoder, s.in_channels * s.kernel * s.kernel);
    add(name + ".b", static_cast<std::size_t>(s.out_channels), ParamGroup::encoder, 0);
    add(name + ".norm.g", static_cast<std::size_t>(s.out_channels), ParamGroup::encoder, 0);
    add(name + ".norm.b", static_cast<std::size_t>(s.out_channels), ParamGroup::encoder, 0);
  };
  auto add_dense = [&](const std::string& name, int in, int out, ParamGroup g) {
    add(name + ".w", static_cast<std::size_t>(in) * out, g, in);
    add(name + ".b", static_cast<std::size_t>(out), g, 0);
  };
  add_conv("stem", a.stem);
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const std::string b = "block" + std::to_string(i);
    add_conv(b + ".conv1", a.blocks[i].conv1);
    if (a.blocks[i].conv2) add_conv(b + ".conv2", *a.blocks[i].conv2);
    if (a.blocks[i].projection) add_conv(b + ".proj", *a.blocks[i].projection);
  }
  if (a.embed_layer) add_dense("embed", a.feature_channels, a.embedding_dim, ParamGroup::encoder);
  add_dense("cls", a.embedding_dim, 1, ParamGroup::classifier);
  add_dense("proj1", a.embedding_dim, a.embedding_dim, ParamGroup::projection);
  add_dense("proj2", a.embedding_dim, a.projection_dim, ParamGroup::projection);
  p.values.assign(offset, 0.0);
  return p;
}

ModelParams init_params(const EncoderConfig& cfg) {
  ModelParams p = make_layout(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& s : p.slots) {
    if (s.name.ends_with(".norm.g")) {
      std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size, 1.0);
      continue;
    }
    if (s.fan_in == 0) continue;  // biases stay zero
    const bool is_conv = s.name.rfind("embed", 0) != 0 && s.name.rfind("cls", 0) != 0 &&
                         s.name.rfind("proj1", 0) != 0 && s.name.rfind("proj2", 0) != 0;
    // He scaling ahead of ReLUs, LeCun scaling for the linear outputs.
    const bool before_relu = is_conv || s.name == "proj1.w";
    const double std = std::sqrt((before_relu ? 2.0 : 1.0) / s.fan_in);
    for (std::size_t i = 0; i < s.size; ++i) p.values[s.offset + i] = std * normal(rng);
  }
  return p;
}

std::vector<double> image_to_tensor(const Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> t(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) t[c * plane + i] = img.rgb[i * 3 + c] / 255.0;
  return t;
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

SiameseNet::SiameseNet(const EncoderConfig& cfg) : cfg_(cfg), arch_(build_architecture(cfg)) {}

namespace {

void relu_into(const std::vector<double>& pre, std::vector<double>& out) {
  out.resize(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

void relu_mask(const std::vector<double>& pre, std::vector<double>& grad) {
  for (std::size_t i = 0; i < pre.size(); ++i)
    if (pre[i] <= 0.0) grad[i] = 0.0;
}

std::span<const double> cw(const ModelParams& p, const std::string& name) { return p.view(name); }

std::span<double> gw(const ModelParams& p, std::span<double> grad, const std::string& name) {
  const auto& s = p.slot(name);
  return grad.subspan(s.offset, s.size);
}

}  // namespace

namespace {

using ConvNorm = HalfCache::ConvNorm;

ConvNorm conv_norm_forward(const ModelParams& params, const k::ConvShape& shape, const std::string& name,
                           std::span<const double> x) {
  ConvNorm u;
  std::vector<double> z(shape.output_size());
  k::conv2d_forward(shape, x, cw(params, name + ".w"), cw(params, name + ".b"), z);
  u.x_hat.resize(z.size());
  u.y.resize(z.size());
  const int plane = shape.out_height() * shape.out_width();
  u.inv_std = k::map_norm_forward(shape.out_channels, plane, z, cw(params, name + ".norm.g"),
                                  cw(params, name + ".norm.b"), u.x_hat, u.y);
  return u;
}

// d_y is the gradient w.r.t. u.y; returns the gradient w.r.t. the conv input.
void conv_norm_backward(const ModelParams& params, const k::ConvShape& shape, const std::string& name,
                        std::span<const double> x, const ConvNorm& u, std::span<const double> d_y,
                        std::span<double> d_x, std::span<double> grad) {
  std::vector<double> d_z(u.x_hat.size());
  const int plane = shape.out_height() * shape.out_width();
  k::map_norm_backward(shape.out_channels, plane, u.x_hat, u.inv_std, cw(params, name + ".norm.g"), d_y,
                       d_z, gw(params, grad, name + ".norm.g"), gw(params, grad, name + ".norm.b"));
  k::conv2d_backward_params(shape, x, d_z, gw(params, grad, name + ".w"), gw(params, grad, name + ".b"));
  if (!d_x.empty()) k::conv2d_backward_input(shape, d_z, cw(params, name + ".w"), d_x);
}

}  // namespace

HalfCache SiameseNet::forward(const ModelParams& params, std::span<const double> input) const {
  if (input.size() != arch_.stem.input_size())
    throw ShapeMismatch("encoder input has " + std::to_string(input.size()) +
                        " values, expected " + std::to_string(arch_.stem.input_size()));
  HalfCache c;
  c.input.assign(input.begin(), input.end());
  c.stem = conv_norm_forward(params, arch_.stem, "stem", c.input);
  relu_into(c.stem.y, c.stem_act);
  c.pooled.resize(static_cast<std::size_t>(arch_.stem.out_channels) * arch_.pooled_height *
                  arch_.pooled_width);
  k::avg_pool2_forward(arch_.stem.out_channels, arch_.stem.out_height(), arch_.stem.out_width(),
                       c.stem_act, c.pooled);

  const std::vector<double>* x = &c.pooled;
  c.blocks.resize(arch_.blocks.size());
  for (std::size_t i = 0; i < arch_.blocks.size(); ++i) {
    const auto& spec = arch_.blocks[i];
    auto& b = c.blocks[i];
    const std::string name = "block" + std::to_string(i);
    b.in = *x;
    b.conv1 = conv_norm_forward(params, spec.conv1, name + ".conv1", b.in);
    if (spec.conv2) {
      relu_into(b.conv1.y, b.mid);
      b.conv2 = conv_norm_forward(params, *spec.conv2, name + ".conv2", b.mid);
      b.sum_pre = b.conv2.y;
    } else {
      b.sum_pre = b.conv1.y;
    }
    if (spec.projection) {
      b.proj = conv_norm_forward(params, *spec.projection, name + ".proj", b.in);
      for (std::size_t j = 0; j < b.sum_pre.size(); ++j) b.sum_pre[j] += b.proj.y[j];
    } else {
      for (std::size_t j = 0; j < b.in.size(); ++j) b.sum_pre[j] += b.in[j];
    }
    relu_into(b.sum_pre, b.out);
    x = &b.out;
  }

  c.features.resize(static_cast<std::size_t>(arch_.feature_channels));
  k::global_avg_pool_forward(arch_.feature_channels, arch_.feature_height, arch_.feature_width, *x,
                             c.features);
  if (arch_.embed_layer) {
    c.embedding.resize(static_cast<std::size_t>(arch_.embedding_dim));
    k::dense_forward(arch_.feature_channels, arch_.embedding_dim, c.features, cw(params, "embed.w"),
                     cw(params, "embed.b"), c.embedding);
  } else {
    c.embedding = c.features;
  }

  double logit = 0.0;
  k::dense_forward(arch_.embedding_dim, 1, c.embedding, cw(params, "cls.w"), cw(params, "cls.b"),
                   std::span<double>(&logit, 1));
  c.logit = logit;

  c.proj_hidden_pre.resize(static_cast<std::size_t>(arch_.embedding_dim));
  k::dense_forward(arch_.embedding_dim, arch_.embedding_dim, c.embedding, cw(params, "proj1.w"),
                   cw(params, "proj1.b"), c.proj_hidden_pre);
  relu_into(c.proj_hidden_pre, c.proj_hidden);
  c.latent_raw.resize(static_cast<std::size_t>(arch_.projection_dim));
  k::dense_forward(arch_.embedding_dim, arch_.projection_dim, c.proj_hidden, cw(params, "proj2.w"),
                   cw(params, "proj2.b"), c.latent_raw);
  double sq = 0.0;
  for (double v : c.latent_raw) sq += v * v;
  c.latent_norm = std::max(std::sqrt(sq), 1e-12);
  c.latent.resize(c.latent_raw.size());
  for (std::size_t j = 0; j < c.latent_raw.size(); ++j) c.latent[j] = c.latent_raw[j] / c.latent_norm;
  return c;
}

void SiameseNet::backward(const ModelParams& params, const HalfCache& c, double d_logit,
                          std::span<const double> d_latent, std::span<double> grad) const {
  const int E = arch_.embedding_dim;
  std::vector<double> d_emb(static_cast<std::size_t>(E), 0.0);

  // Classification head.
  {
    std::vector<double> d_from_cls(static_cast<std::size_t>(E));
    k::dense_backward(E, 1, c.embedding, cw(params, "cls.w"), std::span<const double>(&d_logit, 1),
                      d_from_cls, gw(params, grad, "cls.w"), gw(params, grad, "cls.b"));
    for (int j = 0; j < E; ++j) d_emb[j] += d_from_cls[j];
  }

  // Projection head through the L2 normalization.
  if (!d_latent.empty()) {
    double dot = 0.0;
    for (std::size_t j = 0; j < c.latent.size(); ++j) dot += c.latent[j] * d_latent[j];
    std::vector<double> d_raw(c.latent.size());
    for (std::size_t j = 0; j < c.latent.size(); ++j)
      d_raw[j] = (d_latent[j] - c.latent[j] * dot) / c.latent_norm;
    std::vector<double> d_hidden(static_cast<std::size_t>(E));
    k::dense_backward(E, arch_.projection_dim, c.proj_hidden, cw(params, "proj2.w"), d_raw,
                      d_hidden, gw(params, grad, "proj2.w"), gw(params, grad, "proj2.b"));
    relu_mask(c.proj_hidden_pre, d_hidden);
    std::vector<double> d_from_proj(static_cast<std::size_t>(E));
    k::dense_backward(E, E, c.embedding, cw(params, "proj1.w"), d_hidden, d_from_proj,
                      gw(params, grad, "proj1.w"), gw(params, grad, "proj1.b"));
    for (int j = 0; j < E; ++j) d_emb[j] += d_from_proj[j];
  }

  std::vector<double> d_feat;
  if (arch_.embed_layer) {
    d_feat.resize(static_cast<std::size_t>(arch_.feature_channels));
    k::dense_backward(arch_.feature_channels, E, c.features, cw(params, "embed.w"), d_emb, d_feat,
                      gw(params, grad, "embed.w"), gw(params, grad, "embed.b"));
  } else {
    d_feat = std::move(d_emb);
  }

  std::vector<double> d_x(static_cast<std::size_t>(arch_.feature_channels) * arch_.feature_height *
                          arch_.feature_width);
  k::global_avg_pool_backward(arch_.feature_channels, arch_.feature_height, arch_.feature_width,
                              d_feat, d_x);

  for (std::size_t bi = arch_.blocks.size(); bi-- > 0;) {
    const auto& spec = arch_.blocks[bi];
    const auto& b = c.blocks[bi];
    const std::string name = "block" + std::to_string(bi);
    relu_mask(b.sum_pre, d_x);  // d_x is now d(sum_pre)
    std::vector<double> d_in(b.in.size());
    if (spec.projection) {
      conv_norm_backward(params, *spec.projection, name + ".proj", b.in, b.proj, d_x, d_in, grad);
    } else {
      d_in = d_x;
    }
    std::vector<double> d_branch_in(b.in.size());
    if (spec.conv2) {
      std::vector<double> d_mid(b.mid.size());
      conv_norm_backward(params, *spec.conv2, name + ".conv2", b.mid, b.conv2, d_x, d_mid, grad);
      relu_mask(b.conv1.y, d_mid);
      conv_norm_backward(params, spec.conv1, name + ".conv1", b.in, b.conv1, d_mid, d_branch_in, grad);
    } else {
      conv_norm_backward(params, spec.conv1, name + ".conv1", b.in, b.conv1, d_x, d_branch_in, grad);
    }
    for (std::size_t j = 0; j < d_in.size(); ++j) d_in[j] += d_branch_in[j];
    d_x = std::move(d_in);
  }

  std::vector<double> d_stem(c.stem_act.size());
  k::avg_pool2_backward(arch_.stem.out_channels, arch_.stem.out_height(), arch_.stem.out_width(),
                        d_x, d_stem);
  relu_mask(c.stem.y, d_stem);
  conv_norm_backward(params, arch_.stem, "stem", c.input, c.stem, d_stem, {}, grad);
}

namespace {

std::vector<double> checked_tensor(const ModelParams& params, const Image& half) {
  if (half.width != params.config.input_width || half.height != params.config.input_height)
    throw ShapeMismatch("half image is " + std::to_string(half.width) + "x" +
                        std::to_string(half.height) + ", encoder expects " +
                        std::to_string(params.config.input_width) + "x" +
                        std::to_string(params.config.input_height));
  return image_to_tensor(half);
}

}  // namespace

PairForward forward_pair(const ModelParams& params, const RenderedPair& rp) {
  const SiameseNet net(params.config);
  const HalfCache l = net.forward(params, checked_tensor(params, rp.left_half));
  const HalfCache r = net.forward(params, checked_tensor(params, rp.right_half));
  PairForward pf;
  pf.logit_left = l.logit;
  pf.logit_right = r.logit;
  pf.prob_left = logistic(l.logit);
  pf.prob_right = logistic(r.logit);
  pf.latent_left = l.latent;
  pf.latent_right = r.latent;
  return pf;
}

double predict_image(const ModelParams& params, const Image& half) {
  const SiameseNet net(params.config);
  return logistic(net.forward(params, checked_tensor(params, half)).logit);
}

std::vector<double> embed_image(const ModelParams& params, const Image& half) {
  const SiameseNet net(params.config);
  return net.forward(params, checked_tensor(params, half)).embedding;
}

namespace {

json config_json(const EncoderConfig& c) {
  return {{"profile", to_string(c.profile)}, {"embedding_dim", c.embedding_dim},
          {"input_width", c.input_width},    {"input_height", c.input_height},
          {"base_width", c.base_width},      {"projection_dim", c.projection_dim}};
}

bool same_architecture(const EncoderConfig& a, const EncoderConfig& b) {
  EncoderConfig x = a, y = b;
  x.seed = y.seed = 0;
  return x == y;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const CheckpointInfo& info,
                     const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
  json j;
  j["format"] = "pairlearn-checkpoint";
  j["format_version"] = 1;
  j["config"] = config_json(params.config);
  j["seed"] = info.seed;
  j["epoch"] = info.epoch;
  json slots = json::array();
  for (const auto& s : params.slots) slots.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  j["slots"] = slots;
  std::vector<std::uint8_t> blob(params.values.size() * sizeof(double));
  std::memcpy(blob.data(), params.values.data(), blob.size());
  j["values"] = json::binary(std::move(blob));
  const auto bytes = json::to_cbor(j);
  io::write_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ModelParams load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected,
                            CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  const json j = json::from_cbor(bytes);
  if (j.value("format", "") != "pairlearn-checkpoint")
    throw std::runtime_error(path.string() + " is not a pairlearn checkpoint");
  EncoderConfig stored = expected;
  const json& c = j.at("config");
  stored.profile = parse_profile(c.at("profile").get<std::string>());
  stored.embedding_dim = c.at("embedding_dim");
  stored.input_width = c.at("input_width");
  stored.input_height = c.at("input_height");
  stored.base_width = c.at("base_width");
  stored.projection_dim = c.at("projection_dim");
  stored.seed = j.at("seed");
  if (!same_architecture(stored, expected))
    throw std::runtime_error("checkpoint config mismatch: stored " + c.dump() + ", expected " +
                             config_json(expected).dump());
  ModelParams p = make_layout(stored);
  const auto& blob = j.at("values").get_binary();
  if (blob.size() != p.values.size() * sizeof(double))
    throw std::runtime_error("checkpoint parameter blob has the wrong size");
  std::memcpy(p.values.data(), blob.data(), blob.size());
  if (info) {
    info->seed = stored.seed;
    info->epoch = j.at("epoch");
  }
  return p;
}

}  // namespace pairlearn
