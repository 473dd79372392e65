#include "pairlearn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace pairlearn {

void LossWeights::validate() const {
  if (bce < 0 || consistency < 0 || contrastive < 0)
    throw std::invalid_argument("loss weights must be non-negative");
  if (bce == 0 && consistency == 0 && contrastive == 0)
    throw std::invalid_argument("at least one loss weight must be positive");
}

namespace {

// -[y log s(z) + (1-y) log(1 - s(z))] without forming s(z).
double bce_from_logit(double z, int y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_unit(std::span<const double> v, const char* side) {
  const double n = std::sqrt(dot(v, v));
  if (std::abs(n - 1.0) > kUnitNormTolerance)
    throw ContractViolation(std::string("contrastive loss needs an L2-normalized ") + side +
                            " latent (norm " + std::to_string(n) + ")");
}

void accumulate(LossGradient& into, const LossGradient& term, double weight) {
  if (weight == 0.0) return;
  into.value += weight * term.value;
  into.d_logit_left += weight * term.d_logit_left;
  into.d_logit_right += weight * term.d_logit_right;
  auto add = [weight](std::vector<double>& dst, const std::vector<double>& src) {
    if (src.empty()) return;
    if (dst.empty()) dst.assign(src.size(), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += weight * src[i];
  };
  add(into.d_latent_left, term.d_latent_left);
  add(into.d_latent_right, term.d_latent_right);
}

}  // namespace

double bce_per_half(const PairForward& pf, HalfLabels labels) {
  return bce_per_half_grad(pf, labels).value;
}

double bce_per_half(const PairForward& pf, const TrainingTrial& trial) {
  if (!trial.supervised || !trial.labels)
    throw ContractViolation("per-half BCE requires a supervised trial with labels");
  return bce_per_half(pf, *trial.labels);
}

LossGradient bce_per_half_grad(const PairForward& pf, HalfLabels labels) {
  LossGradient g;
  g.value = 0.5 * (bce_from_logit(pf.logit_left, labels.left) +
                   bce_from_logit(pf.logit_right, labels.right));
  g.d_logit_left = 0.5 * (logistic(pf.logit_left) - labels.left);
  g.d_logit_right = 0.5 * (logistic(pf.logit_right) - labels.right);
  return g;
}

double pair_consistency_loss(const PairForward& pf, bool same) {
  return pair_consistency_grad(pf, same).value;
}

LossGradient pair_consistency_grad(const PairForward& pf, bool same) {
  const double pl = pf.prob_left, pr = pf.prob_right;
  const double raw = pl * pr + (1.0 - pl) * (1.0 - pr);
  const double a = std::clamp(raw, kAgreementEpsilon, 1.0 - kAgreementEpsilon);
  LossGradient g;
  g.value = same ? -std::log(a) : -std::log(1.0 - a);
  if (raw != a) return g;  // flat inside the clamp
  const double d_a = same ? -1.0 / a : 1.0 / (1.0 - a);
  g.d_logit_left = d_a * (2.0 * pr - 1.0) * pl * (1.0 - pl);
  g.d_logit_right = d_a * (2.0 * pl - 1.0) * pr * (1.0 - pr);
  return g;
}

double contrastive_loss(std::span<const double> latent_left, std::span<const double> latent_right,
                        bool same, double margin) {
  if (latent_left.size() != latent_right.size())
    throw ContractViolation("latent dimensions differ");
  require_unit(latent_left, "left");
  require_unit(latent_right, "right");
  const double c = dot(latent_left, latent_right);
  return same ? 1.0 - c : std::max(0.0, c - margin);
}

LossGradient contrastive_grad(const PairForward& pf, bool same, double margin) {
  LossGradient g;
  g.value = contrastive_loss(pf.latent_left, pf.latent_right, same, margin);
  const double c = dot(pf.latent_left, pf.latent_right);
  double scale = 0.0;
  if (same) scale = -1.0;
  else if (c > margin) scale = 1.0;
  g.d_latent_left.resize(pf.latent_left.size());
  g.d_latent_right.resize(pf.latent_right.size());
  for (std::size_t i = 0; i < pf.latent_left.size(); ++i) {
    g.d_latent_left[i] = scale * pf.latent_right[i];
    g.d_latent_right[i] = scale * pf.latent_left[i];
  }
  return g;
}

LossGradient total_loss_grad(const TrainingTrial& trial, const PairForward& pf,
                             const LossWeights& w, double margin) {
  LossGradient g;
  if (trial.supervised) {
    if (!trial.labels) throw ContractViolation("supervised trial " + trial.pair_id + " has no labels");
    accumulate(g, bce_per_half_grad(pf, *trial.labels), w.bce);
  }
  accumulate(g, pair_consistency_grad(pf, trial.same), w.consistency);
  accumulate(g, contrastive_grad(pf, trial.same, margin), w.contrastive);
  return g;
}

double total_loss(const TrainingTrial& trial, const PairForward& pf, const LossWeights& w,
                  double margin) {
  return total_loss_grad(trial, pf, w, margin).value;
}

}  // namespace pairlearn
