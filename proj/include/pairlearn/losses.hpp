#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "pairlearn/model.hpp"
#include "pairlearn/schedule.hpp"

namespace pairlearn {

/// A caller broke a loss precondition (missing labels, non-unit latents).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct LossWeights {
  double bce = 1.0;
  double consistency = 1.0;
  double contrastive = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Clamp applied to the pair-agreement probability.
inline constexpr double kAgreementEpsilon = 1e-7;
inline constexpr double kUnitNormTolerance = 1e-6;

/// Mean of the two per-half binary cross-entropies, from logits.
double bce_per_half(const PairForward& pf, HalfLabels labels);
/// Throws ContractViolation for an unsupervised trial.
double bce_per_half(const PairForward& pf, const TrainingTrial& trial);

/// BCE of the agreement a = pL*pR + (1-pL)(1-pR) against same (1) / different (0).
double pair_consistency_loss(const PairForward& pf, bool same);

/// same: 1 - cos;  different: max(0, cos - margin). Latents must be unit norm.
double contrastive_loss(std::span<const double> latent_left, std::span<const double> latent_right,
                        bool same, double margin);

/// Weighted sum of the applicable terms. Unsupervised trials never read labels.
double total_loss(const TrainingTrial& trial, const PairForward& pf, const LossWeights& w,
                  double margin);

/// A loss value with its partials w.r.t. both logits and both latents.
struct LossGradient {
  double value = 0.0;
  double d_logit_left = 0.0;
  double d_logit_right = 0.0;
  std::vector<double> d_latent_left;
  std::vector<double> d_latent_right;
};

LossGradient bce_per_half_grad(const PairForward& pf, HalfLabels labels);
LossGradient pair_consistency_grad(const PairForward& pf, bool same);
LossGradient contrastive_grad(const PairForward& pf, bool same, double margin);
LossGradient total_loss_grad(const TrainingTrial& trial, const PairForward& pf,
                             const LossWeights& w, double margin);

}  // namespace pairlearn
