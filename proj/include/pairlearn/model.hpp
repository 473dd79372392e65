#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pairlearn/kernels.hpp"
#include "pairlearn/render.hpp"

namespace pairlearn {

enum class Profile { full, desk };

std::string_view to_string(Profile p);
Profile parse_profile(std::string_view s);

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  Profile profile = Profile::desk;
  int embedding_dim = 128;
  int input_width = 64;
  int input_height = 64;
  /// Channels of the first residual stage; later stages double it.
  int base_width = 8;
  int projection_dim = 128;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// 6-block residual encoder on 64x64 halves, 128-d embedding.
EncoderConfig desk_encoder(std::uint64_t seed = 0);
/// ResNet-18 layout on 112x112 halves, 512-d embedding.
EncoderConfig full_encoder(std::uint64_t seed = 0);

struct ResidualBlockSpec {
  kernels::ConvShape conv1;
  std::optional<kernels::ConvShape> conv2;
  std::optional<kernels::ConvShape> projection;  // 1x1 skip when shape changes
};

/// Layer shapes derived from an EncoderConfig.
struct Architecture {
  kernels::ConvShape stem;
  int pooled_height = 0, pooled_width = 0;
  std::vector<ResidualBlockSpec> blocks;
  int feature_channels = 0, feature_height = 0, feature_width = 0;
  bool embed_layer = false;
  int embedding_dim = 0;
  int projection_dim = 0;

  int conv_layer_count() const;
};

Architecture build_architecture(const EncoderConfig& cfg);

enum class ParamGroup { encoder, classifier, projection };

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  ParamGroup group = ParamGroup::encoder;
  int fan_in = 0;
};

/// All trainable parameters in one flat buffer. Slots are laid out with the
/// encoder (theta) first, then the classification head (eta), then the
/// projection head (phi), so each group is a contiguous range.
class ModelParams {
 public:
  EncoderConfig config;
  std::vector<TensorSlot> slots;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  const TensorSlot& slot(std::string_view name) const;
  std::span<const double> view(std::string_view name) const;
  std::span<double> view(std::string_view name);

  std::span<const double> theta() const { return group(ParamGroup::encoder); }
  std::span<const double> eta() const { return group(ParamGroup::classifier); }
  std::span<const double> phi() const { return group(ParamGroup::projection); }
  std::span<const double> group(ParamGroup g) const;

  bool operator==(const ModelParams&) const = default;
};

/// Empty (zero) parameter layout for cfg.
ModelParams make_layout(const EncoderConfig& cfg);
/// He-normal convolutions, fan-in scaled dense layers, zero biases, unit
/// normalization gains; seeded by cfg.seed.
ModelParams init_params(const EncoderConfig& cfg);

/// Image pixels scaled to [0,1], CHW.
std::vector<double> image_to_tensor(const Image& img);

/// Intermediate activations for one half, kept for backpropagation.
struct HalfCache {
  /// A convolution followed by map normalization.
  struct ConvNorm {
    std::vector<double> x_hat;  // normalized conv output
    std::vector<double> y;      // after the affine
    double inv_std = 0.0;
  };
  struct Block {
    std::vector<double> in;
    ConvNorm conv1, conv2, proj;
    std::vector<double> mid;  // relu(conv1) when the block has two convolutions
    std::vector<double> sum_pre, out;
  };
  std::vector<double> input;
  ConvNorm stem;
  std::vector<double> stem_act, pooled;
  std::vector<Block> blocks;
  std::vector<double> features, embedding;
  std::vector<double> proj_hidden_pre, proj_hidden, latent_raw, latent;
  double latent_norm = 0.0;
  double logit = 0.0;
};

/// The shared encoder f, classification head g and projection head h.
class SiameseNet {
 public:
  explicit SiameseNet(const EncoderConfig& cfg);

  const Architecture& architecture() const { return arch_; }
  const EncoderConfig& config() const { return cfg_; }

  /// Encodes one half. The input must be 3 x input_height x input_width.
  HalfCache forward(const ModelParams& params, std::span<const double> input) const;
  /// Accumulates into `grad` (same layout as params.values) the gradient of a
  /// loss whose partials w.r.t. the logit and the normalized latent are given.
  void backward(const ModelParams& params, const HalfCache& cache, double d_logit,
                std::span<const double> d_latent, std::span<double> grad) const;

 private:
  EncoderConfig cfg_;
  Architecture arch_;
};

struct PairForward {
  double logit_left = 0.0, logit_right = 0.0;
  double prob_left = 0.5, prob_right = 0.5;
  std::vector<double> latent_left, latent_right;
};

double logistic(double z);

PairForward forward_pair(const ModelParams& params, const RenderedPair& rp);
/// Membership probability for a single half image.
double predict_image(const ModelParams& params, const Image& half);
/// Raw embedding (classifier input) for a single half image.
std::vector<double> embed_image(const ModelParams& params, const Image& half);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epoch = 0;
};

/// Self-describing CBOR: config echo, seed, epoch, slot table and a raw
/// little-endian double blob.
void save_checkpoint(const ModelParams& params, const CheckpointInfo& info,
                     const std::filesystem::path& path);
/// Throws std::runtime_error when the stored config differs from `expected`.
ModelParams load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected,
                            CheckpointInfo* info = nullptr);

}  // namespace pairlearn
