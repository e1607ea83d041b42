#include "cia/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cia {

namespace {

double feasibility_tolerance(const PerturbationBudget& budget) {
  // one float32 ulp at the scale of the value range
  const double scale = std::max({1.0, std::fabs(static_cast<double>(budget.alpha)),
                                 std::fabs(static_cast<double>(budget.beta))});
  return std::ldexp(scale, -23);
}

/// Worst excess of x_hat over the feasible box, in exact double arithmetic.
double measure_violation(const Tensor& x, const Tensor& x_hat, const PerturbationBudget& budget) {
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double xi = x[i], xh = x_hat[i], d = budget.delta[i];
    worst = std::max(worst, std::fabs(xh - xi) - d);
    worst = std::max(worst, static_cast<double>(budget.alpha) - xh);
    worst = std::max(worst, xh - static_cast<double>(budget.beta));
  }
  return std::max(worst, 0.0);
}

void check_mode(const AttackMode& mode, int num_classes) {
  if (mode.true_class < 0 || mode.true_class >= num_classes) {
    throw std::invalid_argument("attack: true class out of range");
  }
  if (mode.targeted) {
    if (mode.target_class < 0 || mode.target_class >= num_classes) {
      throw std::invalid_argument("attack: target class out of range");
    }
    if (mode.target_class == mode.true_class) {
      throw std::invalid_argument("attack: target class must differ from the true class");
    }
  }
}

}  // namespace

PerturbationBudget PerturbationBudget::uniform(const std::vector<int>& shape, float delta,
                                               float alpha, float beta) {
  PerturbationBudget b;
  b.delta = Tensor(shape, delta);
  b.alpha = alpha;
  b.beta = beta;
  b.validate();
  return b;
}

void PerturbationBudget::validate() const {
  if (!(alpha < beta)) throw std::invalid_argument("budget: requires alpha < beta");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::invalid_argument("budget: bounds must be finite");
  }
  for (int i = 0; i < delta.size(); ++i) {
    if (!(delta[i] >= 0.0f) || !std::isfinite(delta[i])) {
      throw std::invalid_argument("budget: delta must be componentwise finite and >= 0");
    }
  }
}

CenteredDomain center_domain(const Tensor& x, const PerturbationBudget& budget) {
  budget.validate();
  if (!x.same_shape(budget.delta)) {
    throw std::invalid_argument("center_domain: x and delta shapes differ");
  }
  CenteredDomain dom{Tensor(x.shape()), Tensor(x.shape())};
  for (int i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    if (xi < budget.alpha || xi > budget.beta) {
      throw std::invalid_argument("center_domain: x must lie inside [alpha, beta]");
    }
    // double math keeps the midpoint exact; a float midpoint can land a
    // half-ulp off-center and waste feasible room on one side
    const double lo = std::max(static_cast<double>(budget.alpha),
                               static_cast<double>(xi) - static_cast<double>(budget.delta[i]));
    const double hi = std::min(static_cast<double>(budget.beta),
                               static_cast<double>(xi) + static_cast<double>(budget.delta[i]));
    dom.center[i] = static_cast<float>((lo + hi) * 0.5);
    dom.halfwidth[i] = static_cast<float>((hi - lo) * 0.5);
  }
  return dom;
}

double squash_value(Squash kind, double r) {
  switch (kind) {
    case Squash::Tanh: return std::tanh(r);
    case Squash::Sigmoid2: return 2.0 * (1.0 / (1.0 + std::exp(-r)) - 0.5);
    case Squash::Sin: return std::sin(r);
  }
  throw std::invalid_argument("unknown squash kind");
}

double squash_deriv(Squash kind, double r) {
  switch (kind) {
    case Squash::Tanh: {
      const double t = std::tanh(r);
      return 1.0 - t * t;
    }
    case Squash::Sigmoid2: {
      const double s = 1.0 / (1.0 + std::exp(-r));
      return 2.0 * s * (1.0 - s);
    }
    case Squash::Sin: return std::cos(r);
  }
  throw std::invalid_argument("unknown squash kind");
}

Tensor reparameterize(const CenteredDomain& dom, const Tensor& r, Squash squash) {
  if (!dom.center.same_shape(dom.halfwidth) || !dom.center.same_shape(r)) {
    throw std::invalid_argument("reparameterize: shape mismatch");
  }
  Tensor out(dom.center.shape());
  for (int i = 0; i < out.size(); ++i) {
    const double g = squash_value(squash, static_cast<double>(r[i]));
    out[i] = static_cast<float>(static_cast<double>(dom.center[i]) +
                                static_cast<double>(dom.halfwidth[i]) * g);
  }
  return out;
}

AdamState AdamState::zeros(const std::vector<int>& shape) {
  AdamState s;
  s.r = Tensor(shape);
  s.m = Tensor(shape);
  s.v = Tensor(shape);
  s.t = 0;
  return s;
}

AdamState adam_step(const AdamState& state, const Tensor& grad, const AdamParams& params) {
  if (!state.r.same_shape(grad)) throw std::invalid_argument("adam_step: gradient shape mismatch");
  AdamState next = state;
  next.t = state.t + 1;
  const double b1 = params.beta1, b2 = params.beta2;
  const double c1 = 1.0 - std::pow(b1, next.t);
  const double c2 = 1.0 - std::pow(b2, next.t);
  for (int i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    next.m[i] = static_cast<float>(m);
    next.v[i] = static_cast<float>(v);
    next.r[i] = static_cast<float>(
        static_cast<double>(state.r[i]) -
        static_cast<double>(params.lr) * (m / c1) / (std::sqrt(v / c2) + static_cast<double>(params.eps)));
  }
  return next;
}

void ObjectiveSpec::validate() const {
  if (terms.empty()) throw std::invalid_argument("objective: needs at least one term");
  for (const auto& t : terms) {
    if (t.net == nullptr) throw std::invalid_argument("objective: null network");
    if (!(t.weight > 0.0f) || !std::isfinite(t.weight)) {
      throw std::invalid_argument("objective: weights must be positive and finite");
    }
    if (t.net->input_shape() != terms[0].net->input_shape() ||
        t.net->num_classes() != terms[0].net->num_classes()) {
      throw std::invalid_argument("objective: all classifiers must share input shape and classes");
    }
  }
  switch (composition) {
    case Composition::Single:
      if (terms.size() != 1) throw std::invalid_argument("objective: single composition takes one term");
      break;
    case Composition::Ensemble:
      break;
    case Composition::Hybrid:
      if (terms.size() != 2 || terms[0].defense_fronted || !terms[1].defense_fronted) {
        throw std::invalid_argument(
            "objective: hybrid takes a plain term then a defense-fronted term");
      }
      break;
    case Composition::EnsembleHybrid:
      if (terms.size() < 2 || terms.size() % 2 != 0) {
        throw std::invalid_argument("objective: ensemble-hybrid takes plain/fronted pairs");
      }
      for (size_t i = 0; i < terms.size(); i += 2) {
        if (terms[i].defense_fronted || !terms[i + 1].defense_fronted) {
          throw std::invalid_argument(
              "objective: ensemble-hybrid takes a plain term then a fronted term per classifier");
        }
      }
      break;
    default:
      throw std::invalid_argument("objective: unknown composition");
  }
}

std::pair<double, Tensor> attack_loss_and_grad(const ObjectiveSpec& objective,
                                               const CenteredDomain& dom, const Tensor& r,
                                               Squash squash, const AttackMode& mode) {
  objective.validate();
  check_mode(mode, objective.terms[0].net->num_classes());
  const Tensor x_hat = reparameterize(dom, r, squash);

  const int cls = mode.targeted ? mode.target_class : mode.true_class;
  const double sign = mode.targeted ? 1.0 : -1.0;

  double total = 0.0;
  Tensor grad_x(x_hat.shape());
  for (const auto& term : objective.terms) {
    ClassifierOutput out = term.net->forward(x_hat);
    auto [loss, grad_logits] = cross_entropy(out.logits, cls);
    total += sign * static_cast<double>(term.weight) * loss;
    const float s = static_cast<float>(sign * term.weight);
    for (int i = 0; i < grad_logits.size(); ++i) grad_logits[i] *= s;
    Tensor gx = term.net->backward_input(x_hat, grad_logits);
    for (int i = 0; i < grad_x.size(); ++i) grad_x[i] += gx[i];
  }

  Tensor grad_r(r.shape());
  for (int i = 0; i < r.size(); ++i) {
    grad_r[i] = static_cast<float>(static_cast<double>(grad_x[i]) *
                                   static_cast<double>(dom.halfwidth[i]) *
                                   squash_deriv(squash, static_cast<double>(r[i])));
  }
  return {total, grad_r};
}

AttackResult craft(const Tensor& x, const AttackConfig& config, const ObjectiveSpec& objective) {
  objective.validate();
  if (config.iterations < 1) throw std::invalid_argument("craft: iterations must be >= 1");
  if (x.shape() != objective.terms[0].net->input_shape()) {
    throw std::invalid_argument("craft: input shape does not match the classifiers");
  }
  check_mode(config.mode, objective.terms[0].net->num_classes());

  const CenteredDomain dom = center_domain(x, config.budget);

  AttackResult res;
  res.predicted_before.reserve(objective.terms.size());
  for (const auto& term : objective.terms) {
    res.predicted_before.push_back(term.net->forward(x).predicted_class);
  }

  AdamState state = AdamState::zeros(x.shape());
  res.loss_trace.reserve(static_cast<size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    auto [loss, grad] = attack_loss_and_grad(objective, dom, state.r, config.squash, config.mode);
    res.loss_trace.push_back(loss);
    state = adam_step(state, grad, config.adam);
  }

  res.r_final = state.r;
  res.adversarial = reparameterize(dom, state.r, config.squash);
  res.bound_violation = measure_violation(x, res.adversarial, config.budget);
  if (res.bound_violation > feasibility_tolerance(config.budget)) {
    // the whole point of the construction; if this fires something is broken
    throw std::logic_error("craft: feasibility guarantee violated");
  }
  for (const auto& term : objective.terms) {
    res.predicted_after.push_back(term.net->forward(res.adversarial).predicted_class);
  }
  return res;
}

AttackResult baseline_clipped_attack(const Tensor& x, const AttackConfig& config,
                                     const Network& model) {
  if (config.iterations < 1) throw std::invalid_argument("baseline: iterations must be >= 1");
  if (x.shape() != model.input_shape()) {
    throw std::invalid_argument("baseline: input shape does not match the classifier");
  }
  check_mode(config.mode, model.num_classes());
  config.budget.validate();
  if (!x.same_shape(config.budget.delta)) {
    throw std::invalid_argument("baseline: x and delta shapes differ");
  }

  const int cls = config.mode.targeted ? config.mode.target_class : config.mode.true_class;
  const double sign = config.mode.targeted ? 1.0 : -1.0;

  AttackResult res;
  res.predicted_before.push_back(model.forward(x).predicted_class);

  // Adam directly on the image, no constraint during optimization
  AdamState state = AdamState::zeros(x.shape());
  state.r = x;
  res.loss_trace.reserve(static_cast<size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    ClassifierOutput out = model.forward(state.r);
    auto [loss, grad_logits] = cross_entropy(out.logits, cls);
    res.loss_trace.push_back(sign * loss);
    const float s = static_cast<float>(sign);
    for (int i = 0; i < grad_logits.size(); ++i) grad_logits[i] *= s;
    Tensor grad = model.backward_input(state.r, grad_logits);
    state = adam_step(state, grad, config.adam);
  }

  // r_final holds the unconstrained endpoint; adversarial is the projection
  res.r_final = state.r;
  Tensor clipped(x.shape());
  for (int i = 0; i < x.size(); ++i) {
    const float lo = std::max(config.budget.alpha, x[i] - config.budget.delta[i]);
    const float hi = std::min(config.budget.beta, x[i] + config.budget.delta[i]);
    clipped[i] = std::clamp(state.r[i], lo, hi);
  }

  AttackResult::ClipReport report;
  report.conf_before_clip = model.forward(state.r).probs[cls];
  report.conf_after_clip = model.forward(clipped).probs[cls];
  res.clip = report;

  res.adversarial = std::move(clipped);
  res.bound_violation = measure_violation(x, res.adversarial, config.budget);
  res.predicted_after.push_back(model.forward(res.adversarial).predicted_class);
  return res;
}

}  // namespace cia
