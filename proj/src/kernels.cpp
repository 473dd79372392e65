#include "pairlearn/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <vector>

// Eigen's own threading picks block sizes from the thread count.
#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

namespace pairlearn::kernels {

namespace {

// Output columns ox with 0 <= ox*stride + kx - pad < in_width.
struct Range {
  int lo, hi;  // [lo, hi)
};

Range valid_range(int out_extent, int in_extent, int k, int stride, int pad) {
  // ox*stride >= pad - k  and  ox*stride <= in_extent - 1 + pad - k
  int lo = 0;
  const int need = pad - k;
  if (need > 0) lo = (need + stride - 1) / stride;
  const int top = in_extent - 1 + pad - k;
  int hi = top < 0 ? 0 : top / stride + 1;
  hi = std::min(hi, out_extent);
  return {lo, std::max(lo, hi)};
}

}  // namespace

namespace {

// Column matrix [ic*k*k][oh*ow], zero where the tap falls in padding.
void im2col(const ConvShape& s, const double* in, double* col) {
  const int oh = s.out_height(), ow = s.out_width();
  const int ih = s.in_height, iw = s.in_width, k = s.kernel, st = s.stride, pad = s.pad;
  const std::size_t plane_out = static_cast<std::size_t>(oh) * ow;
  const int rows = s.in_channels * k * k;
#pragma omp parallel for schedule(static) if (rows * plane_out > 32768)
  for (int r = 0; r < rows; ++r) {
    const int ic = r / (k * k), ky = (r / k) % k, kx = r % k;
    const double* x = in + static_cast<std::size_t>(ic) * ih * iw;
    double* c = col + r * plane_out;
    const Range ry = valid_range(oh, ih, ky, st, pad);
    const Range rx = valid_range(ow, iw, kx, st, pad);
    std::fill(c, c + plane_out, 0.0);
    for (int oy = ry.lo; oy < ry.hi; ++oy) {
      const double* xr = x + static_cast<std::size_t>(oy * st + ky - pad) * iw + (kx - pad);
      double* cr = c + static_cast<std::size_t>(oy) * ow;
      for (int ox = rx.lo; ox < rx.hi; ++ox) cr[ox] = xr[ox * st];
    }
  }
}

// Scatter-add of a column matrix back onto an image. Overwrites d_in.
void col2im(const ConvShape& s, const double* col, double* d_in) {
  const int oh = s.out_height(), ow = s.out_width();
  const int ih = s.in_height, iw = s.in_width, k = s.kernel, st = s.stride, pad = s.pad;
  const std::size_t plane_out = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for schedule(static) if (s.input_size() * k * k > 32768)
  for (int ic = 0; ic < s.in_channels; ++ic) {
    double* x = d_in + static_cast<std::size_t>(ic) * ih * iw;
    std::fill(x, x + static_cast<std::size_t>(ih) * iw, 0.0);
    for (int ky = 0; ky < k; ++ky) {
      const Range ry = valid_range(oh, ih, ky, st, pad);
      for (int kx = 0; kx < k; ++kx) {
        const Range rx = valid_range(ow, iw, kx, st, pad);
        const double* c = col + (static_cast<std::size_t>(ic) * k * k + ky * k + kx) * plane_out;
        for (int oy = ry.lo; oy < ry.hi; ++oy) {
          double* xr = x + static_cast<std::size_t>(oy * st + ky - pad) * iw + (kx - pad);
          const double* cr = c + static_cast<std::size_t>(oy) * ow;
          for (int ox = rx.lo; ox < rx.hi; ++ox) xr[ox * st] += cr[ox];
        }
      }
    }
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::vector<double>& scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
  assert(in.size() == s.input_size() && out.size() == s.output_size());
  const Eigen::Index n = static_cast<Eigen::Index>(s.out_height()) * s.out_width();
  const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  auto& col = scratch(static_cast<std::size_t>(kk * n));
  im2col(s, in.data(), col.data());
  MutMap o(out.data(), s.out_channels, n);
  o.noalias() = ConstMap(weight.data(), s.out_channels, kk) * ConstMap(col.data(), kk, n);
  for (int oc = 0; oc < s.out_channels; ++oc) o.row(oc).array() += bias[oc];
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> d_out,
                           std::span<const double> weight, std::span<double> d_in) {
  const Eigen::Index n = static_cast<Eigen::Index>(s.out_height()) * s.out_width();
  const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  auto& col = scratch(static_cast<std::size_t>(kk * n));
  MutMap c(col.data(), kk, n);
  c.noalias() = ConstMap(weight.data(), s.out_channels, kk).transpose() *
                ConstMap(d_out.data(), s.out_channels, n);
  col2im(s, col.data(), d_in.data());
}

void conv2d_backward_params(const ConvShape& s, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_weight,
                            std::span<double> d_bias) {
  const Eigen::Index n = static_cast<Eigen::Index>(s.out_height()) * s.out_width();
  const Eigen::Index kk = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
  auto& col = scratch(static_cast<std::size_t>(kk * n));
  im2col(s, in.data(), col.data());
  const ConstMap g(d_out.data(), s.out_channels, n);
  MutMap(d_weight.data(), s.out_channels, kk).noalias() += g * ConstMap(col.data(), kk, n).transpose();
  for (int oc = 0; oc < s.out_channels; ++oc) d_bias[oc] += g.row(oc).sum();
}

void dense_forward(int in_dim, int out_dim, std::span<const double> x,
                   std::span<const double> weight, std::span<const double> bias,
                   std::span<double> y) {
  Eigen::Map<Eigen::VectorXd> out(y.data(), out_dim);
  out.noalias() = ConstMap(weight.data(), out_dim, in_dim) * Eigen::Map<const Eigen::VectorXd>(x.data(), in_dim);
  out += Eigen::Map<const Eigen::VectorXd>(bias.data(), out_dim);
}

void dense_backward(int in_dim, int out_dim, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> d_y,
                    std::span<double> d_x, std::span<double> d_weight, std::span<double> d_bias) {
  const Eigen::Map<const Eigen::VectorXd> g(d_y.data(), out_dim), xin(x.data(), in_dim);
  MutMap(d_weight.data(), out_dim, in_dim).noalias() += g * xin.transpose();
  Eigen::Map<Eigen::VectorXd>(d_bias.data(), out_dim) += g;
  if (d_x.empty()) return;
  Eigen::Map<Eigen::VectorXd>(d_x.data(), in_dim).noalias() =
      ConstMap(weight.data(), out_dim, in_dim).transpose() * g;
}

void avg_pool2_forward(int channels, int height, int width, std::span<const double> in,
                       std::span<double> out) {
  const int oh = height / 2, ow = width / 2;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double* p = in.data() + (static_cast<std::size_t>(c) * height + 2 * y) * width + 2 * x;
        out[(static_cast<std::size_t>(c) * oh + y) * ow + x] =
            0.25 * (p[0] + p[1] + p[width] + p[width + 1]);
      }
}

void avg_pool2_backward(int channels, int height, int width, std::span<const double> d_out,
                        std::span<double> d_in) {
  const int oh = height / 2, ow = width / 2;
  std::fill(d_in.begin(), d_in.end(), 0.0);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double g = 0.25 * d_out[(static_cast<std::size_t>(c) * oh + y) * ow + x];
        double* p = d_in.data() + (static_cast<std::size_t>(c) * height + 2 * y) * width + 2 * x;
        p[0] += g;
        p[1] += g;
        p[width] += g;
        p[width + 1] += g;
      }
}

void global_avg_pool_forward(int channels, int height, int width, std::span<const double> in,
                             std::span<double> out) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += in[c * plane + i];
    out[c] = acc / static_cast<double>(plane);
  }
}

void global_avg_pool_backward(int channels, int height, int width,
                              std::span<const double> d_out, std::span<double> d_in) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const double g = d_out[c] / static_cast<double>(plane);
    std::fill(d_in.begin() + c * plane, d_in.begin() + (c + 1) * plane, g);
  }
}

double map_norm_forward(int channels, int plane, std::span<const double> x,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> x_hat, std::span<double> y) {
  assert(x.size() == static_cast<std::size_t>(channels) * plane);
  std::vector<double> part(static_cast<std::size_t>(channels));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double s = 0.0;
    for (int i = 0; i < plane; ++i) s += x[static_cast<std::size_t>(c) * plane + i];
    part[c] = s;
  }
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : part) mean += v;
  mean /= n;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double s = 0.0;
    for (int i = 0; i < plane; ++i) {
      const double d = x[static_cast<std::size_t>(c) * plane + i] - mean;
      s += d * d;
    }
    part[c] = s;
  }
  double var = 0.0;
  for (double v : part) var += v;
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < plane; ++i) {
      const std::size_t j = static_cast<std::size_t>(c) * plane + i;
      x_hat[j] = (x[j] - mean) * inv_std;
      y[j] = gamma[c] * x_hat[j] + beta[c];
    }
  return inv_std;
}

void map_norm_backward(int channels, int plane, std::span<const double> x_hat, double inv_std,
                       std::span<const double> gamma, std::span<const double> d_y,
                       std::span<double> d_x, std::span<double> d_gamma, std::span<double> d_beta) {
  std::vector<double> s1(static_cast<std::size_t>(channels)), s2(static_cast<std::size_t>(channels));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    double a = 0.0, b = 0.0, g = 0.0, bb = 0.0;
    for (int i = 0; i < plane; ++i) {
      const std::size_t j = static_cast<std::size_t>(c) * plane + i;
      const double dxh = d_y[j] * gamma[c];
      a += dxh;
      b += dxh * x_hat[j];
      g += d_y[j] * x_hat[j];
      bb += d_y[j];
    }
    s1[c] = a;
    s2[c] = b;
    d_gamma[c] += g;
    d_beta[c] += bb;
  }
  const double n = static_cast<double>(x_hat.size());
  double m1 = 0.0, m2 = 0.0;
  for (int c = 0; c < channels; ++c) {
    m1 += s1[c];
    m2 += s2[c];
  }
  m1 /= n;
  m2 /= n;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < plane; ++i) {
      const std::size_t j = static_cast<std::size_t>(c) * plane + i;
      d_x[j] = inv_std * (d_y[j] * gamma[c] - m1 - x_hat[j] * m2);
    }
}

namespace serial {

void conv2d_forward(const ConvShape& s, std::span<const double> in,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> out) {
  const int oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  for (int oc = 0; oc < s.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias[oc];
        for (int ic = 0; ic < s.in_channels; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * s.stride + ky - s.pad;
              const int ix = ox * s.stride + kx - s.pad;
              if (iy < 0 || iy >= s.in_height || ix < 0 || ix >= s.in_width) continue;
              acc += weight[((oc * s.in_channels + ic) * k + ky) * k + kx] *
                     in[(static_cast<std::size_t>(ic) * s.in_height + iy) * s.in_width + ix];
            }
        out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
      }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> d_out,
                           std::span<const double> weight, std::span<double> d_in) {
  const int oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  std::fill(d_in.begin(), d_in.end(), 0.0);
  for (int oc = 0; oc < s.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double g = d_out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
        for (int ic = 0; ic < s.in_channels; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * s.stride + ky - s.pad;
              const int ix = ox * s.stride + kx - s.pad;
              if (iy < 0 || iy >= s.in_height || ix < 0 || ix >= s.in_width) continue;
              d_in[(static_cast<std::size_t>(ic) * s.in_height + iy) * s.in_width + ix] +=
                  g * weight[((oc * s.in_channels + ic) * k + ky) * k + kx];
            }
      }
}

void conv2d_backward_params(const ConvShape& s, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_weight,
                            std::span<double> d_bias) {
  const int oh = s.out_height(), ow = s.out_width(), k = s.kernel;
  for (int oc = 0; oc < s.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double g = d_out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
        d_bias[oc] += g;
        for (int ic = 0; ic < s.in_channels; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * s.stride + ky - s.pad;
              const int ix = ox * s.stride + kx - s.pad;
              if (iy < 0 || iy >= s.in_height || ix < 0 || ix >= s.in_width) continue;
              d_weight[((oc * s.in_channels + ic) * k + ky) * k + kx] +=
                  g * in[(static_cast<std::size_t>(ic) * s.in_height + iy) * s.in_width + ix];
            }
      }
}

void dense_forward(int in_dim, int out_dim, std::span<const double> x,
                   std::span<const double> weight, std::span<const double> bias,
                   std::span<double> y) {
  for (int o = 0; o < out_dim; ++o) {
    double acc = bias[o];
    for (int i = 0; i < in_dim; ++i) acc += weight[static_cast<std::size_t>(o) * in_dim + i] * x[i];
    y[o] = acc;
  }
}

void dense_backward(int in_dim, int out_dim, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> d_y,
                    std::span<double> d_x, std::span<double> d_weight, std::span<double> d_bias) {
  if (!d_x.empty()) std::fill(d_x.begin(), d_x.end(), 0.0);
  for (int o = 0; o < out_dim; ++o) {
    d_bias[o] += d_y[o];
    for (int i = 0; i < in_dim; ++i) {
      d_weight[static_cast<std::size_t>(o) * in_dim + i] += d_y[o] * x[i];
      if (!d_x.empty()) d_x[i] += weight[static_cast<std::size_t>(o) * in_dim + i] * d_y[o];
    }
  }
}

double map_norm_forward(int channels, int plane, std::span<const double> x,
                        std::span<const double> gamma, std::span<const double> beta,
                        std::span<double> x_hat, std::span<double> y) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
  for (std::size_t j = 0; j < n; ++j) {
    const int c = static_cast<int>(j / static_cast<std::size_t>(plane));
    x_hat[j] = (x[j] - mean) * inv_std;
    y[j] = gamma[c] * x_hat[j] + beta[c];
  }
  (void)channels;
  return inv_std;
}

void map_norm_backward(int channels, int plane, std::span<const double> x_hat, double inv_std,
                       std::span<const double> gamma, std::span<const double> d_y,
                       std::span<double> d_x, std::span<double> d_gamma, std::span<double> d_beta) {
  const std::size_t n = x_hat.size();
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const int c = static_cast<int>(j / static_cast<std::size_t>(plane));
    m1 += d_y[j] * gamma[c];
    m2 += d_y[j] * gamma[c] * x_hat[j];
    d_gamma[c] += d_y[j] * x_hat[j];
    d_beta[c] += d_y[j];
  }
  m1 /= static_cast<double>(n);
  m2 /= static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int c = static_cast<int>(j / static_cast<std::size_t>(plane));
    d_x[j] = inv_std * (d_y[j] * gamma[c] - m1 - x_hat[j] * m2);
  }
  (void)channels;
}

}  // namespace serial

}  // namespace pairlearn::kernels
