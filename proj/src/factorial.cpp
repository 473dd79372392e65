#include "pairlearn/factorial.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

namespace pairlearn {

namespace {

double two_sided_p(double t, int df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double t_quantile(double confidence, int df) {
  const boost::math::students_t dist(df);
  return boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
}

// t statistic with the zero-variance corner cases made explicit.
double t_stat(double estimate, double se) {
  if (se > 0) return estimate / se;
  if (estimate == 0.0) return 0.0;
  return estimate > 0 ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
}

}  // namespace

FactorialData accuracy_design(const std::vector<ConditionResult>& records) {
  FactorialData d;
  d.factors = {{"trait", {"shape", "size", "pattern"}},
               {"alignment", {"high", "low"}},
               {"supervision", {"1", "3", "6"}}};
  for (const auto& r : records) {
    Observation o;
    const int trait = r.cell.feature == Feature::shape ? 0 : r.cell.feature == Feature::size ? 1 : 2;
    const int align = r.cell.alignment == Alignment::high ? 0 : 1;
    const int sup = r.cell.supervision == 1 ? 0 : r.cell.supervision == 3 ? 1 : 2;
    o.levels = {trait, align, sup};
    o.response = r.accuracy;
    d.rows.push_back(o);
  }
  return d;
}

std::string term_name(const std::vector<Factor>& factors, const Term& t) {
  if (t.factors.empty()) return "(Intercept)";
  std::string s;
  for (std::size_t i = 0; i < t.factors.size(); ++i) {
    if (i) s += ":";
    const Factor& f = factors[t.factors[i]];
    s += f.name + "[" + f.levels[t.levels[i]] + "]";
  }
  return s;
}

std::vector<Term> full_factorial_terms(const std::vector<Factor>& factors) {
  const int m = static_cast<int>(factors.size());
  std::vector<Term> terms{Term{}};
  // Subsets by increasing order, then lexicographic, like R's model.matrix.
  for (int order = 1; order <= m; ++order) {
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
      if (std::popcount(mask) != order) continue;
      std::vector<int> fs;
      for (int i = 0; i < m; ++i)
        if (mask & (1u << i)) fs.push_back(i);
      // Every combination of non-reference levels, last factor fastest.
      std::vector<int> lv(fs.size(), 1);
      for (;;) {
        terms.push_back({fs, lv});
        int k = static_cast<int>(fs.size()) - 1;
        while (k >= 0 && ++lv[k] >= static_cast<int>(factors[fs[k]].levels.size())) lv[k--] = 1;
        if (k < 0) break;
      }
    }
  }
  return terms;
}

namespace {

double term_value(const Term& t, const std::vector<int>& levels) {
  for (std::size_t i = 0; i < t.factors.size(); ++i)
    if (levels[t.factors[i]] != t.levels[i]) return 0.0;
  return 1.0;
}

}  // namespace

Eigen::MatrixXd design_matrix(const FactorialData& data, const std::vector<Term>& terms) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.rows.size()), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t r = 0; r < data.rows.size(); ++r)
    for (std::size_t c = 0; c < terms.size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          term_value(terms[c], data.rows[r].levels);
  return x;
}

Eigen::RowVectorXd FactorialFit::design_row(const std::vector<int>& levels) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t c = 0; c < terms.size(); ++c)
    row(static_cast<Eigen::Index>(c)) = term_value(terms[c], levels);
  return row;
}

double FactorialFit::predict(const std::vector<int>& levels) const {
  return design_row(levels).dot(beta);
}

int FactorialFit::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (factors[i].name == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown factor '" + name + "'");
}

const Coefficient& FactorialFit::coefficient(const std::string& term) const {
  for (const auto& c : coefficients)
    if (c.term == term) return c;
  throw std::out_of_range("no coefficient named '" + term + "'");
}

FactorialFit fit_factorial(const FactorialData& data) {
  for (const auto& f : data.factors)
    if (f.levels.size() < 2)
      throw std::invalid_argument("factor '" + f.name + "' needs at least two levels");
  for (const auto& o : data.rows) {
    if (o.levels.size() != data.factors.size())
      throw std::invalid_argument("observation has the wrong number of factor levels");
    for (std::size_t i = 0; i < o.levels.size(); ++i)
      if (o.levels[i] < 0 || o.levels[i] >= static_cast<int>(data.factors[i].levels.size()))
        throw std::invalid_argument("observation level out of range for factor '" +
                                    data.factors[i].name + "'");
  }

  FactorialFit fit;
  fit.factors = data.factors;
  fit.terms = full_factorial_terms(data.factors);
  const Eigen::MatrixXd x = design_matrix(data, fit.terms);
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.rows.size()));
  for (std::size_t r = 0; r < data.rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = data.rows[r].response;

  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    std::vector<std::string> cols;
    const auto perm = qr.colsPermutation().indices();
    for (int i = static_cast<int>(qr.rank()); i < p; ++i)
      cols.push_back(term_name(fit.factors, fit.terms[perm(i)]));
    std::string msg = "design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                      " of " + std::to_string(p) + "); aliased columns:";
    for (const auto& c : cols) msg += " " + c;
    throw RankDeficient(msg, cols);
  }
  if (n <= p)
    throw RankDeficient("no residual degrees of freedom: " + std::to_string(n) +
                            " observations for " + std::to_string(p) + " coefficients",
                        {});

  fit.beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * fit.beta;
  fit.observations = n;
  fit.df_residual = n - p;
  fit.sigma2 = resid.squaredNorm() / fit.df_residual;
  const double ybar = y.mean();
  const double tss = (y.array() - ybar).square().sum();
  fit.r_squared = tss > 0 ? 1.0 - resid.squaredNorm() / tss : 1.0;

  // (X'X)^-1 = P R^-1 R^-T P^T from the pivoted QR.
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd xtx_inv_perm = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * xtx_inv_perm * perm.transpose();
  fit.covariance = fit.sigma2 * xtx_inv;

  for (int c = 0; c < p; ++c) {
    Coefficient co;
    co.term = term_name(fit.factors, fit.terms[c]);
    co.estimate = fit.beta(c);
    co.std_error = std::sqrt(std::max(0.0, fit.covariance(c, c)));
    co.t_value = t_stat(co.estimate, co.std_error);
    co.p_value = two_sided_p(co.t_value, fit.df_residual);
    fit.coefficients.push_back(co);
  }

  std::string ref;
  for (const auto& f : fit.factors) ref += (ref.empty() ? "" : ", ") + f.name + "=" + f.levels[0];
  fit.reference_cell = ref;
  return fit;
}

MarginalMeans marginal_means(const FactorialFit& fit, const std::vector<std::string>& by,
                             double confidence) {
  if (!(confidence > 0 && confidence < 1)) throw std::invalid_argument("confidence must be in (0,1)");
  std::vector<int> by_idx;
  for (const auto& name : by) by_idx.push_back(fit.factor_index(name));
  std::vector<int> other_idx;
  for (int i = 0; i < static_cast<int>(fit.factors.size()); ++i)
    if (std::find(by_idx.begin(), by_idx.end(), i) == by_idx.end()) other_idx.push_back(i);

  auto for_each_combo = [&](const std::vector<int>& idx, auto&& fn) {
    std::vector<int> lv(idx.size(), 0);
    for (;;) {
      fn(lv);
      int k = static_cast<int>(idx.size()) - 1;
      while (k >= 0 && ++lv[k] >= static_cast<int>(fit.factors[idx[k]].levels.size())) lv[k--] = 0;
      if (k < 0) break;
    }
  };

  MarginalMeans mm;
  mm.by = by;
  mm.confidence = confidence;
  const double tq = t_quantile(confidence, fit.df_residual);
  std::vector<Eigen::RowVectorXd> rows;

  for_each_combo(by_idx, [&](const std::vector<int>& by_levels) {
    Eigen::RowVectorXd l = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(fit.terms.size()));
    int count = 0;
    for_each_combo(other_idx, [&](const std::vector<int>& other_levels) {
      std::vector<int> full(fit.factors.size(), 0);
      for (std::size_t i = 0; i < by_idx.size(); ++i) full[by_idx[i]] = by_levels[i];
      for (std::size_t i = 0; i < other_idx.size(); ++i) full[other_idx[i]] = other_levels[i];
      l += fit.design_row(full);
      ++count;
    });
    l /= count;
    MarginalMean m;
    m.levels = by_levels;
    for (std::size_t i = 0; i < by_idx.size(); ++i)
      m.label += (i ? ", " : "") + fit.factors[by_idx[i]].name + "=" +
                 fit.factors[by_idx[i]].levels[by_levels[i]];
    if (m.label.empty()) m.label = "(grand mean)";
    m.mean = l.dot(fit.beta);
    m.std_error = std::sqrt(std::max(0.0, (l * fit.covariance * l.transpose())(0, 0)));
    m.lower = m.mean - tq * m.std_error;
    m.upper = m.mean + tq * m.std_error;
    mm.means.push_back(m);
    rows.push_back(l);
  });

  const std::size_t k = mm.means.size();
  const double n_pairs = static_cast<double>(k * (k - 1) / 2);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const Eigen::RowVectorXd d = rows[i] - rows[j];
      PairwiseContrast c;
      c.first = mm.means[i].label;
      c.second = mm.means[j].label;
      c.estimate = d.dot(fit.beta);
      c.std_error = std::sqrt(std::max(0.0, (d * fit.covariance * d.transpose())(0, 0)));
      c.t_value = t_stat(c.estimate, c.std_error);
      c.p_value = two_sided_p(c.t_value, fit.df_residual);
      c.p_bonferroni = std::min(1.0, c.p_value * n_pairs);
      mm.contrasts.push_back(c);
    }
  return mm;
}

}  // namespace pairlearn
