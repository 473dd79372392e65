#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "pairlearn/kernels.hpp"
#include "test_util.hpp"

namespace k = pairlearn::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& g) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Plain definition of a strided, zero-padded convolution.
double conv_at(const k::ConvShape& s, const std::vector<double>& x, const std::vector<double>& w,
               int oc, int oy, int ox) {
  double acc = 0;
  for (int ic = 0; ic < s.in_channels; ++ic)
    for (int ky = 0; ky < s.kernel; ++ky)
      for (int kx = 0; kx < s.kernel; ++kx) {
        const int iy = oy * s.stride + ky - s.pad, ix = ox * s.stride + kx - s.pad;
        if (iy < 0 || ix < 0 || iy >= s.in_height || ix >= s.in_width) continue;
        acc += w[((oc * s.in_channels + ic) * s.kernel + ky) * s.kernel + kx] *
               x[(ic * s.in_height + iy) * s.in_width + ix];
      }
  return acc;
}

const k::ConvShape kShapes[] = {
    {3, 8, 64, 64, 3, 2, 1}, {8, 8, 16, 16, 3, 1, 1}, {8, 16, 16, 16, 1, 2, 0},
    {16, 32, 8, 8, 3, 2, 1}, {3, 5, 13, 9, 7, 2, 3}, {2, 3, 5, 5, 3, 1, 0},
};

}  // namespace

TEST_CASE("convolution forward matches the definition") {
  std::mt19937_64 g(1);
  for (const auto& s : kShapes) {
    const auto x = randn(s.input_size(), g), w = randn(s.weight_size(), g);
    const auto b = randn(s.out_channels, g);
    std::vector<double> y(s.output_size()), ys(y.size());
    k::conv2d_forward(s, x, w, b, y);
    k::serial::conv2d_forward(s, x, w, b, ys);
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int oy = 0; oy < s.out_height(); ++oy)
        for (int ox = 0; ox < s.out_width(); ++ox) {
          const double expect = conv_at(s, x, w, oc, oy, ox) + b[oc];
          const std::size_t i = (oc * s.out_height() + oy) * s.out_width() + ox;
          CHECK(std::abs(y[i] - expect) < 1e-10);
          CHECK(std::abs(ys[i] - expect) < 1e-10);
        }
  }
}

TEST_CASE("parallel and serial convolution backward agree") {
  std::mt19937_64 g(2);
  for (const auto& s : kShapes) {
    const auto x = randn(s.input_size(), g), w = randn(s.weight_size(), g);
    const auto go = randn(s.output_size(), g);
    std::vector<double> dx(x.size()), dxs(x.size());
    k::conv2d_backward_input(s, go, w, dx);
    k::serial::conv2d_backward_input(s, go, w, dxs);
    CHECK(max_abs_diff(dx, dxs) < 1e-10);
    std::vector<double> dw(w.size(), 0.5), dws(w.size(), 0.5), db(s.out_channels, 0.5),
        dbs(s.out_channels, 0.5);
    k::conv2d_backward_params(s, x, go, dw, db);
    k::serial::conv2d_backward_params(s, x, go, dws, dbs);
    CHECK(max_abs_diff(dw, dws) < 1e-10);
    CHECK(max_abs_diff(db, dbs) < 1e-10);
  }
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937_64 g(7);
  const k::ConvShape s{8, 16, 32, 32, 3, 1, 1};
  const auto x = randn(s.input_size(), g), w = randn(s.weight_size(), g), b = randn(16, g);
  const auto go = randn(s.output_size(), g);
  auto run = [&](int threads) {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(threads);
    std::vector<double> y(s.output_size()), dx(x.size()), dw(w.size(), 0.0), db(16, 0.0), xh(y.size()), ny(y.size());
    k::conv2d_forward(s, x, w, b, y);
    k::conv2d_backward_input(s, go, w, dx);
    k::conv2d_backward_params(s, x, go, dw, db);
    k::map_norm_forward(16, 32 * 32, y, b, b, xh, ny);
    omp_set_num_threads(saved);
    std::vector<double> all;
    for (const auto* v : {&y, &dx, &dw, &db, &ny}) all.insert(all.end(), v->begin(), v->end());
    return all;
  };
  const auto one = run(1);
  for (int t : {2, 3, 8}) {
    const auto many = run(t);
    CHECK(std::memcmp(one.data(), many.data(), one.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("convolution backward is the adjoint of forward") {
  // <conv(x), y> == <x, conv^T(y)> and == <w, dW(x, y)>
  std::mt19937_64 g(3);
  for (const auto& s : kShapes) {
    const auto x = randn(s.input_size(), g), w = randn(s.weight_size(), g);
    const auto y = randn(s.output_size(), g);
    const std::vector<double> zero_b(s.out_channels, 0.0);
    std::vector<double> cx(s.output_size()), ty(x.size()), dw(w.size(), 0.0), db(s.out_channels, 0.0);
    k::serial::conv2d_forward(s, x, w, zero_b, cx);
    k::conv2d_backward_input(s, y, w, ty);
    k::conv2d_backward_params(s, x, y, dw, db);
    double lhs = 0, rhs = 0, rw = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
    for (std::size_t i = 0; i < w.size(); ++i) rw += w[i] * dw[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    CHECK(lhs == doctest::Approx(rw).epsilon(1e-10));
  }
}

TEST_CASE("dense kernels agree with serial and accumulate") {
  std::mt19937_64 g(4);
  for (auto [in, out] : {std::pair{7, 3}, std::pair{128, 128}, std::pair{512, 1}}) {
    const auto x = randn(in, g), w = randn(static_cast<std::size_t>(in) * out, g), b = randn(out, g);
    std::vector<double> y(out), ys(out);
    k::dense_forward(in, out, x, w, b, y);
    k::serial::dense_forward(in, out, x, w, b, ys);
    CHECK(max_abs_diff(y, ys) < 1e-12);
    double y0 = b[0];
    for (int i = 0; i < in; ++i) y0 += w[i] * x[i];
    CHECK(y[0] == doctest::Approx(y0));

    const auto dy = randn(out, g);
    std::vector<double> dx(in), dxs(in), dw(w.size(), 1.0), dws(w.size(), 1.0), db(out, 1.0),
        dbs(out, 1.0);
    k::dense_backward(in, out, x, w, dy, dx, dw, db);
    k::serial::dense_backward(in, out, x, w, dy, dxs, dws, dbs);
    CHECK(max_abs_diff(dx, dxs) < 1e-12);
    CHECK(max_abs_diff(dw, dws) < 1e-12);
    CHECK(max_abs_diff(db, dbs) < 1e-12);
    CHECK(dw[0] == doctest::Approx(1.0 + dy[0] * x[0]));
  }
}

TEST_CASE("pooling forward and backward") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::vector<double> y(4);
  k::avg_pool2_forward(1, 4, 4, x, y);
  CHECK(y == std::vector<double>{3.5, 5.5, 11.5, 13.5});
  std::vector<double> dx(16);
  k::avg_pool2_backward(1, 4, 4, std::vector<double>{4, 8, 12, 16}, dx);
  CHECK(dx[0] == 1.0);
  CHECK(dx[5] == 1.0);
  CHECK(dx[15] == 4.0);
  std::vector<double> gp(1);
  k::global_avg_pool_forward(1, 4, 4, x, gp);
  CHECK(gp[0] == 8.5);
  k::global_avg_pool_backward(1, 4, 4, std::vector<double>{16}, dx);
  for (double v : dx) CHECK(v == 1.0);
}

TEST_CASE("map normalization matches its definition") {
  std::mt19937_64 g(5);
  const int c = 4, plane = 25;
  auto x = randn(c * plane, g);
  for (auto& v : x) v = 3.0 * v + 2.0;
  const auto gamma = randn(c, g), beta = randn(c, g);
  std::vector<double> xh(x.size()), y(x.size()), xhs(x.size()), ys(x.size());
  const double inv = k::map_norm_forward(c, plane, x, gamma, beta, xh, y);
  const double invs = k::serial::map_norm_forward(c, plane, x, gamma, beta, xhs, ys);
  double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= x.size();
  CHECK(inv == doctest::Approx(1.0 / std::sqrt(var + k::kNormEpsilon)).epsilon(1e-12));
  CHECK(invs == doctest::Approx(inv).epsilon(1e-12));
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < plane; ++i) {
      const std::size_t j = ch * plane + i;
      CHECK(y[j] == doctest::Approx(gamma[ch] * (x[j] - mean) * inv + beta[ch]).epsilon(1e-12));
    }
  CHECK(max_abs_diff(y, ys) < 1e-12);
}

TEST_CASE("map normalization backward matches central differences") {
  std::mt19937_64 g(6);
  const int c = 3, plane = 16;
  const auto x = randn(c * plane, g), gamma = randn(c, g), beta = randn(c, g), r = randn(c * plane, g);
  auto objective = [&](const std::vector<double>& xx, const std::vector<double>& gg,
                       const std::vector<double>& bb) {
    std::vector<double> xh(xx.size()), y(xx.size());
    k::serial::map_norm_forward(c, plane, xx, gg, bb, xh, y);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  std::vector<double> xh(x.size()), y(x.size());
  const double inv = k::map_norm_forward(c, plane, x, gamma, beta, xh, y);
  std::vector<double> dx(x.size()), dg(c, 0.0), dbeta(c, 0.0), dxs(x.size()), dgs(c, 0.0), dbs(c, 0.0);
  k::map_norm_backward(c, plane, xh, inv, gamma, r, dx, dg, dbeta);
  k::serial::map_norm_backward(c, plane, xh, inv, gamma, r, dxs, dgs, dbs);
  CHECK(max_abs_diff(dx, dxs) < 1e-12);
  CHECK(max_abs_diff(dg, dgs) < 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto p = x, m = x;
    p[i] += h;
    m[i] -= h;
    const double num = (objective(p, gamma, beta) - objective(m, gamma, beta)) / (2 * h);
    CHECK(test_util::rel_error(dx[i], num, 1e-7) < 1e-5);
  }
  for (int ch = 0; ch < c; ++ch) {
    auto p = gamma, m = gamma;
    p[ch] += h;
    m[ch] -= h;
    CHECK(test_util::rel_error(dg[ch], (objective(x, p, beta) - objective(x, m, beta)) / (2 * h)) < 1e-5);
    auto pb = beta, mb = beta;
    pb[ch] += h;
    mb[ch] -= h;
    CHECK(test_util::rel_error(dbeta[ch], (objective(x, gamma, pb) - objective(x, gamma, mb)) / (2 * h)) <
          1e-5);
  }
}
