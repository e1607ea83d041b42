#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "cia/network.hpp"
#include "cia/tensor.hpp"

namespace cia {

/// Componentwise perturbation budget delta >= 0 plus the valid value range
/// [alpha, beta] shared by all components. delta_i = 0 freezes component i.
struct PerturbationBudget {
  Tensor delta;
  float alpha = 0.0f;
  float beta = 1.0f;

  static PerturbationBudget uniform(const std::vector<int>& shape, float delta,
                                    float alpha = 0.0f, float beta = 1.0f);
  void validate() const;
};

/// The feasible box around x, stored as center and half-width:
///   lo = max(alpha, x - delta), hi = min(beta, x + delta)
///   center = (lo + hi) / 2,     halfwidth = (hi - lo) / 2
/// Every point center + halfwidth*s with |s| <= 1 satisfies both the value
/// range and the max-perturbation constraint, so anything produced from this
/// domain is feasible by construction rather than by clipping.
struct CenteredDomain {
  Tensor center;
  Tensor halfwidth;
};

CenteredDomain center_domain(const Tensor& x, const PerturbationBudget& budget);

/// Odd squashing maps g with g(0) = 0 and |g| <= 1 everywhere.
enum class Squash { Tanh, Sigmoid2, Sin };

double squash_value(Squash kind, double r);
double squash_deriv(Squash kind, double r);

/// x_hat = center + halfwidth * g(r), evaluated in double and rounded once
/// to float32, so the feasible-box guarantee holds to within one 32-bit ulp
/// (and exactly for the value range in practice).
Tensor reparameterize(const CenteredDomain& dom, const Tensor& r, Squash squash);

/// Optimizer state for the attack: the free variable r plus Adam moments.
struct AdamState {
  Tensor r, m, v;
  int t = 0;
  static AdamState zeros(const std::vector<int>& shape);
};

/// Attack-tuned Adam step (these defaults are deliberately aggressive for a
/// 20-iteration budget):  r <- r - lr * m_hat / (sqrt(v_hat) + eps).
struct AdamParams {
  float lr = 0.2f;
  float beta1 = 0.1f;
  float beta2 = 0.6f;
  float eps = 1e-8f;
};

AdamState adam_step(const AdamState& state, const Tensor& grad, const AdamParams& params);

/// What the attack optimizes: a weighted sum of cross-entropy terms, one per
/// classifier. A term's network may already contain a prepended defense
/// front (`defense_fronted` records that). Compositions:
///   Single          one term
///   Ensemble        one term per classifier, summed
///   Hybrid          one classifier, plain term (weight a) + fronted (weight b)
///   EnsembleHybrid  plain + fronted pair per classifier
enum class Composition { Single, Ensemble, Hybrid, EnsembleHybrid };

struct ObjectiveTerm {
  const Network* net = nullptr;
  bool defense_fronted = false;
  float weight = 1.0f;
};

struct ObjectiveSpec {
  Composition composition = Composition::Single;
  std::vector<ObjectiveTerm> terms;
  void validate() const;
};

/// Targeted: minimize cross-entropy toward `target_class`.
/// Untargeted: minimize the negated cross-entropy of the true class.
struct AttackMode {
  bool targeted = true;
  int target_class = 0;
  int true_class = 0;
};

/// Loss and d(loss)/dr at the current r. The chain rule through the
/// reparameterization contributes the factor halfwidth * g'(r).
std::pair<double, Tensor> attack_loss_and_grad(const ObjectiveSpec& objective,
                                               const CenteredDomain& dom, const Tensor& r,
                                               Squash squash, const AttackMode& mode);

struct AttackConfig {
  AttackMode mode;
  int iterations = 20;
  AdamParams adam;
  Squash squash = Squash::Tanh;
  PerturbationBudget budget;
};

struct AttackResult {
  Tensor adversarial;               // float image, not yet quantized
  Tensor r_final;
  std::vector<double> loss_trace;   // objective value at each iteration
  std::vector<int> predicted_before;  // per objective term, on x
  std::vector<int> predicted_after;   // per objective term, on adversarial
  double bound_violation = 0.0;     // worst feasibility excess, ulp-scale at most

  // Only set by baseline_clipped_attack: probability of the attacked class
  // before and after the final projection back into the feasible box.
  struct ClipReport {
    double conf_before_clip = 0.0;
    double conf_after_clip = 0.0;
  };
  std::optional<ClipReport> clip;
};

/// The centered attack: optimize r from 0 with Adam for the configured
/// iterations, return the endpoint. The adversarial is feasible by
/// construction and is never clipped.
AttackResult craft(const Tensor& x, const AttackConfig& config, const ObjectiveSpec& objective);

/// Comparison baseline: identical optimizer and loss, but run directly on
/// the unconstrained image, then clipped into the feasible box at the end.
/// The clip report captures how much confidence the projection destroys.
AttackResult baseline_clipped_attack(const Tensor& x, const AttackConfig& config,
                                     const Network& model);

}  // namespace cia
