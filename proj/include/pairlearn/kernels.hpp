#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels for the encoder. Tensors are CHW, row-major, double.
//
// Each kernel exists twice: the optimized version in `pairlearn::kernels` used
// by the model, and a naive loop nest in `pairlearn::kernels::serial` kept as
// the reference for tests and the benchmark. Convolutions are lowered to
// im2col plus an Eigen matrix product; the lowering, pooling and normalization
// loops are OpenMP-parallel. Work is split over output elements only, so each
// sum runs in a fixed order and results do not depend on the thread count.
namespace pairlearn::kernels {

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const {
    return static_cast<std::size_t>(in_channels) * in_height * in_width;
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(out_channels) * out_height() * out_width();
  }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

/// out = conv(in, weight) + bias. Weight layout [out][in][ky][kx].
void conv2d_forward(const ConvShape& s, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
/// d_in = conv^T(d_out, weight). Overwrites d_in.
void conv2d_backward_input(const ConvShape& s, std::span<const double> d_out,
                           std::span<const double> weight, std::span<double> d_in);
/// Accumulates weight and bias gradients.
void conv2d_backward_params(const ConvShape& s, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_weight,
                            std::span<double> d_bias);

/// y = W x + b with W [out][in].
void dense_forward(int in_dim, int out_dim, std::span<const double> x,
                   std::span<const double> weight, std::span<const double> bias,
                   std::span<double> y);
/// Overwrites d_x (if non-empty) and accumulates d_weight / d_bias.
void dense_backward(int in_dim, int out_dim, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> d_y,
                    std::span<double> d_x, std::span<double> d_weight, std::span<double> d_bias);

void avg_pool2_forward(int channels, int height, int width, std::span<const double> in,
                       std::span<double> out);
void avg_pool2_backward(int channels, int height, int width, std::span<const double> d_out,
                        std::span<double> d_in);

void global_avg_pool_forward(int channels, int height, int width, std::span<const double> in,
                             std::span<double> out);
void global_avg_pool_backward(int channels, int height, int width,
                              std::span<const double> d_out, std::span<double> d_in);

inline constexpr double kNormEpsilon = 1e-5;

/// Per-sample normalization over all C*H*W values with a per-channel affine:
/// y = gamma[c] * (x - mean) / sqrt(var + eps) + beta[c]. Stores the
/// normalized values in x_hat and returns 1/sqrt(var + eps).
double map_norm_forward(int channels, int plane, std::span<const double> x,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> x_hat, std::span<double> y);
/// Overwrites d_x and accumulates d_gamma / d_beta.
void map_norm_backward(int channels, int plane, std::span<const double> x_hat, double inv_std,
                       std::span<const double> gamma, std::span<const double> d_y,
                       std::span<double> d_x, std::span<double> d_gamma, std::span<double> d_beta);

namespace serial {

void conv2d_forward(const ConvShape& s, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out);
void conv2d_backward_input(const ConvShape& s, std::span<const double> d_out,
                           std::span<const double> weight, std::span<double> d_in);
void conv2d_backward_params(const ConvShape& s, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_weight,
                            std::span<double> d_bias);
void dense_forward(int in_dim, int out_dim, std::span<const double> x,
                   std::span<const double> weight, std::span<const double> bias,
                   std::span<double> y);
void dense_backward(int in_dim, int out_dim, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> d_y,
                    std::span<double> d_x, std::span<double> d_weight, std::span<double> d_bias);

double map_norm_forward(int channels, int plane, std::span<const double> x,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> x_hat, std::span<double> y);
void map_norm_backward(int channels, int plane, std::span<const double> x_hat, double inv_std,
                       std::span<const double> gamma, std::span<const double> d_y,
                       std::span<double> d_x, std::span<double> d_gamma, std::span<double> d_beta);

}  // namespace serial

}  // namespace pairlearn::kernels
