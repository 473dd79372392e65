#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pairlearn/evaluation.hpp"

namespace pairlearn {

/// A categorical factor; levels[0] is the treatment-coding reference.
struct Factor {
  std::string name;
  std::vector<std::string> levels;
};

struct Observation {
  std::vector<int> levels;  // one level index per factor
  double response = 0.0;
};

struct FactorialData {
  std::vector<Factor> factors;
  std::vector<Observation> rows;
};

/// Trait (reference shape), Alignment (reference high) and Supervision
/// (reference 1) from per-run accuracies.
FactorialData accuracy_design(const std::vector<ConditionResult>& records);

struct Coefficient {
  std::string term;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_value = 0.0;
  double p_value = 1.0;
};

/// A model term: a set of factors and one non-reference level for each.
struct Term {
  std::vector<int> factors;
  std::vector<int> levels;
};

class RankDeficient : public std::runtime_error {
 public:
  RankDeficient(const std::string& what, std::vector<std::string> cols)
      : std::runtime_error(what), columns(std::move(cols)) {}
  std::vector<std::string> columns;
};

/// OLS fit of the full factorial model (all main effects and interactions)
/// under treatment coding.
struct FactorialFit {
  std::vector<Factor> factors;
  std::vector<Term> terms;  // terms[0] is the intercept
  std::vector<Coefficient> coefficients;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // sigma^2 (X'X)^-1
  double sigma2 = 0.0;
  double r_squared = 0.0;
  int observations = 0;
  int df_residual = 0;
  std::string reference_cell;

  /// Design-matrix row for one factor-level combination.
  Eigen::RowVectorXd design_row(const std::vector<int>& levels) const;
  double predict(const std::vector<int>& levels) const;
  int factor_index(const std::string& name) const;
  const Coefficient& coefficient(const std::string& term) const;
};

std::string term_name(const std::vector<Factor>& factors, const Term& t);
/// Column names of the full factorial design in fitting order.
std::vector<Term> full_factorial_terms(const std::vector<Factor>& factors);
Eigen::MatrixXd design_matrix(const FactorialData& data, const std::vector<Term>& terms);

FactorialFit fit_factorial(const FactorialData& data);

struct MarginalMean {
  std::vector<int> levels;  // one per `by` factor
  std::string label;
  double mean = 0.0;
  double std_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PairwiseContrast {
  std::string first;
  std::string second;
  double estimate = 0.0;  // first - second
  double std_error = 0.0;
  double t_value = 0.0;
  double p_value = 1.0;
  double p_bonferroni = 1.0;
};

struct MarginalMeans {
  std::vector<std::string> by;
  double confidence = 0.95;
  std::vector<MarginalMean> means;
  std::vector<PairwiseContrast> contrasts;
};

/// Model-implied means for every level combination of `by`, averaged with
/// equal weights over the levels of all other factors, with t-based
/// delta-method intervals and all pairwise contrasts.
MarginalMeans marginal_means(const FactorialFit& fit, const std::vector<std::string>& by,
                             double confidence = 0.95);

}  // namespace pairlearn
