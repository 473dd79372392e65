#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pairlearn/factorial.hpp"

// Reference formulas shared by the unit tests and the acceptance binary.
namespace oracles {

using pairlearn::Factor;
using pairlearn::FactorialData;

// Direct formulas written from probabilities, independent of the library.
inline double oracle_bce(double p, int y) { return -(y * std::log(p) + (1 - y) * std::log(1 - p)); }

inline double oracle_consistency(double pl, double pr, bool same) {
  double a = pl * pr + (1 - pl) * (1 - pr);
  a = std::min(std::max(a, 1e-7), 1 - 1e-7);
  return same ? -std::log(a) : -std::log(1 - a);
}

inline double oracle_contrastive(const std::vector<double>& a, const std::vector<double>& b, bool same,
                                 double margin) {
  double c = 0;
  for (std::size_t i = 0; i < a.size(); ++i) c += a[i] * b[i];
  return same ? 1 - c : (c > margin ? c - margin : 0.0);
}

inline FactorialData random_design(std::mt19937_64& g, bool balanced, int& cells) {
  std::uniform_int_distribution<int> nf(2, 3), nl(2, 3), reps(2, 4);
  std::normal_distribution<double> noise;
  FactorialData d;
  const int factors = nf(g);
  for (int f = 0; f < factors; ++f) {
    Factor fac{"f" + std::to_string(f), {}};
    const int levels = nl(g);
    for (int l = 0; l < levels; ++l) fac.levels.push_back("l" + std::to_string(l));
    d.factors.push_back(fac);
  }
  std::vector<int> lv(factors, 0);
  const int r = reps(g);
  cells = 0;
  while (true) {
    ++cells;
    const double cell_effect = 2.0 * noise(g);
    const int n = balanced ? r : reps(g);
    for (int k = 0; k < n; ++k) d.rows.push_back({lv, cell_effect + noise(g)});
    int f = factors - 1;
    while (f >= 0 && ++lv[f] >= static_cast<int>(d.factors[f].levels.size())) lv[f--] = 0;
    if (f < 0) break;
  }
  return d;
}

// Two-sided p from Student's t via Simpson integration of the density.
inline double t_two_sided(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 200000;
  const double a = 0, b = std::abs(t), h = (b - a) / n;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * (s * h / 3);
}

// Brute-force least squares through (X'X)^-1.
struct NormalEquations {
  Eigen::VectorXd beta;
  Eigen::VectorXd std_error;
  double sigma2 = 0.0;
};

inline NormalEquations normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  NormalEquations ne;
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  ne.beta = xtx_inv * x.transpose() * y;
  ne.sigma2 = (y - x * ne.beta).squaredNorm() / static_cast<double>(x.rows() - x.cols());
  ne.std_error = (ne.sigma2 * xtx_inv.diagonal().array()).sqrt();
  return ne;
}

}  // namespace oracles
