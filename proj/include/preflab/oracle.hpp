#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/losses.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"

namespace preflab {

// mu entries at or below this threshold are treated as unsupported: the
// expected loss never touches pairs involving them, so the loss leaves the
// corresponding policy coordinates unconstrained.
inline constexpr double kSupportThreshold = 1e-15;

// Expected-loss instance: behavior policy mu per prompt, golden labels,
// prompt weights. Capacity-capped exact enumeration.
struct ExpectedLossSpec {
  LossKind kind = LossKind::kIpoRoot;
  double beta = 0.1;
  Matrix mu;  // [P x R] behavior policy rows
  std::vector<double> prompt_dist;
  const GoldenPreferenceModel* gm = nullptr;

  static constexpr long kEnumerationCap = 1000000;

  void validate() const {
    if (gm == nullptr) throw InputError("ExpectedLossSpec: missing golden model");
    if (mu.rows != gm->n_prompts() || mu.cols != gm->n_responses())
      throw InputError("ExpectedLossSpec: mu shape mismatch");
    if (static_cast<int>(prompt_dist.size()) != mu.rows)
      throw InputError("ExpectedLossSpec: prompt_dist size mismatch");
    if (static_cast<long>(mu.rows) * mu.cols * mu.cols > kEnumerationCap)
      throw CapacityError("ExpectedLossSpec: instance exceeds enumeration cap");
    if (beta <= 0.0) throw InputError("ExpectedLossSpec: beta must be positive");
  }

  bool supported(int x, int y) const { return mu(x, y) > kSupportThreshold; }
};

// Mean win probability of y against a draw from mu, under the golden model:
//   p(y > mu | x) = sum_y' mu(y'|x) pref(x, y, y').
// The y' = y term enters at probability one half.
inline double win_prob_vs_mu(const GoldenPreferenceModel& gm, const Matrix& mu, int x, int y) {
  double total = 0.0;
  for (int yp = 0; yp < mu.cols; ++yp) total += mu(x, yp) * gm.pref(x, y, yp);
  return total;
}

// Closed-form global minimizer of the offline loss in the root
// parameterization ((beta*h - 0.5)^2) under a full-support behavior policy:
//   pi*(y|x) proportional to ref(y|x) * exp(p(y > mu|x) / beta).
// The Eq.-1 parameterization ((h - beta/2)^2) has the same form with 1/beta
// replaced by beta; callers pass the matching exponent scale via beta.
inline TabularPolicy optimal_policy(const ReferencePolicy& ref, const GoldenPreferenceModel& gm,
                                    const Matrix& mu, double beta) {
  if (beta <= 0.0) throw InputError("optimal_policy: beta must be positive");
  if (mu.rows != ref.n_prompts() || mu.cols != ref.n_responses())
    throw InputError("optimal_policy: mu shape mismatch");
  Matrix logits(ref.n_prompts(), ref.n_responses());
  for (int x = 0; x < ref.n_prompts(); ++x) {
    for (int y = 0; y < ref.n_responses(); ++y)
      logits(x, y) = std::log(ref.prob(x, y)) + win_prob_vs_mu(gm, mu, x, y) / beta;
    // Max-subtraction: softmax is shift invariant and this keeps exp finite.
    double m = logits(x, 0);
    for (int y = 1; y < ref.n_responses(); ++y) m = std::max(m, logits(x, y));
    for (int y = 0; y < ref.n_responses(); ++y) logits(x, y) -= m;
  }
  return TabularPolicy::full(std::move(logits));
}

namespace detail {

// Per-example loss and d(loss)/dh for contrastive kinds at margin h.
inline double contrastive_value(LossKind kind, double beta, double h, double* dvalue_dh) {
  switch (kind) {
    case LossKind::kIpoEq1: {
      double r = h - 0.5 * beta;
      if (dvalue_dh) *dvalue_dh = 2.0 * r;
      return r * r;
    }
    case LossKind::kIpoRoot: {
      double r = beta * h - 0.5;
      if (dvalue_dh) *dvalue_dh = 2.0 * r * beta;
      return r * r;
    }
    case LossKind::kDpo: {
      if (dvalue_dh) *dvalue_dh = -beta * sigmoid(-beta * h);
      return softplus(-beta * h);
    }
    default:
      throw InputError("contrastive_value: not a contrastive kind");
  }
}

}  // namespace detail

// Exact expectation of the batch loss under the sampling pipeline: prompts
// from prompt_dist, ordered response pairs from mu with identical pairs
// dropped (per-prompt renormalization by 1 - sum mu^2), labels from the
// golden model in bernoulli semantics. The value is normalized by the total
// enumerated weight. grad_out, when non-null, receives d(value)/d(logits) for
// a full-mode logits table.
inline double expected_loss(const Matrix& logits, const ReferencePolicy& ref,
                            const ExpectedLossSpec& spec, Matrix* grad_out = nullptr) {
  spec.validate();
  const GoldenPreferenceModel& gm = *spec.gm;
  if (logits.rows != spec.mu.rows || logits.cols != spec.mu.cols)
    throw InputError("expected_loss: logits shape mismatch");
  if (grad_out != nullptr) *grad_out = Matrix(logits.rows, logits.cols);

  double num = 0.0, den = 0.0;
  std::vector<double> log_pi(static_cast<std::size_t>(logits.cols));
  std::vector<double> probs(static_cast<std::size_t>(logits.cols));
  for (int x = 0; x < logits.rows; ++x) {
    double px = spec.prompt_dist[static_cast<std::size_t>(x)];
    if (px == 0.0) continue;
    double z_distinct = 1.0;
    for (int y = 0; y < spec.mu.cols; ++y) z_distinct -= spec.mu(x, y) * spec.mu(x, y);
    if (!(z_distinct > 0.0))
      throw ConstructionError("expected_loss: behavior policy is a point mass at prompt " +
                              std::to_string(x));
    auto row = logits.row(x);
    double log_z = log_sum_exp(row);
    for (int y = 0; y < logits.cols; ++y)
      log_pi[static_cast<std::size_t>(y)] = row[static_cast<std::size_t>(y)] - log_z;
    if (spec.kind == LossKind::kBo2) softmax_into(row, probs);

    for (int a = 0; a < spec.mu.cols; ++a) {
      double mu_a = spec.mu(x, a);
      if (mu_a <= kSupportThreshold) continue;
      for (int b = 0; b < spec.mu.cols; ++b) {
        if (b == a) continue;
        double mu_b = spec.mu(x, b);
        if (mu_b <= kSupportThreshold) continue;
        // Ordered draw (a, b); the label keeps it or flips it.
        double w_pair = px * mu_a * mu_b / z_distinct;
        double p_keep = gm.pref(x, a, b);
        double p_flip = 1.0 - p_keep;
        for (int lab = 0; lab < 2; ++lab) {
          int y_w = lab == 0 ? a : b;
          int y_l = lab == 0 ? b : a;
          double w = w_pair * (lab == 0 ? p_keep : p_flip);
          if (w == 0.0) continue;
          if (spec.kind == LossKind::kBo2) {
            num += w * -log_pi[static_cast<std::size_t>(y_w)];
            if (grad_out != nullptr) {
              for (int j = 0; j < logits.cols; ++j)
                (*grad_out)(x, j) += w * probs[static_cast<std::size_t>(j)];
              (*grad_out)(x, y_w) -= w;
            }
          } else {
            double h = (log_pi[static_cast<std::size_t>(y_w)] -
                        log_pi[static_cast<std::size_t>(y_l)]) -
                       (ref.log_prob(x, y_w) - ref.log_prob(x, y_l));
            double dvalue_dh = 0.0;
            num += w * detail::contrastive_value(spec.kind, spec.beta, h, &dvalue_dh);
            if (grad_out != nullptr) {
              (*grad_out)(x, y_w) += w * dvalue_dh;
              (*grad_out)(x, y_l) -= w * dvalue_dh;
            }
          }
        }
        den += w_pair;
      }
    }
  }
  if (den <= 0.0) throw InputError("expected_loss: no supported pairs");
  if (grad_out != nullptr)
    for (double& g : grad_out->data) g /= den;
  return num / den;
}

inline double expected_loss(const TabularPolicy& policy, const ReferencePolicy& ref,
                            const ExpectedLossSpec& spec) {
  Matrix logits(policy.n_prompts(), policy.n_responses());
  for (int x = 0; x < policy.n_prompts(); ++x) policy.logits_row(x, logits.row(x));
  return expected_loss(logits, ref, spec);
}

struct MinimizeResult {
  TabularPolicy policy = TabularPolicy::full(Matrix(1, 2));
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double final_value = 0.0;
};

// High-precision convergence oracle: full-batch gradient descent with Armijo
// backtracking on expected_loss, run until the gradient inf-norm drops below
// tol. The expected losses are convex in the logits, so this converges to the
// global minimizer; a capped iteration count is reported, never silently
// swallowed.
inline MinimizeResult minimize_expected_loss(const ExpectedLossSpec& spec,
                                             const ReferencePolicy& ref,
                                             const TabularPolicy& init, double tol,
                                             int max_iterations = 200000) {
  if (tol <= 0.0) throw InputError("minimize_expected_loss: tol must be positive");
  spec.validate();
  Matrix logits(init.n_prompts(), init.n_responses());
  for (int x = 0; x < init.n_prompts(); ++x) init.logits_row(x, logits.row(x));

  MinimizeResult result;
  Matrix grad;
  double value = expected_loss(logits, ref, spec, &grad);
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  for (int iter = 0; iter < max_iterations; ++iter) {
    double grad_norm = 0.0, grad_sq = 0.0;
    for (double g : grad.data) {
      grad_norm = std::max(grad_norm, std::abs(g));
      grad_sq += g * g;
    }
    result.iterations = iter;
    result.final_grad_norm = grad_norm;
    result.final_value = value;
    if (grad_norm < tol) {
      result.converged = true;
      break;
    }
    Matrix trial(logits.rows, logits.cols);
    double trial_value = 0.0;
    while (true) {
      for (std::size_t i = 0; i < logits.data.size(); ++i)
        trial.data[i] = logits.data[i] - step * grad.data[i];
      trial_value = expected_loss(trial, ref, spec);
      if (trial_value <= value - kArmijo * step * grad_sq) break;
      step *= 0.5;
      if (step < 1e-18)
        throw std::runtime_error("minimize_expected_loss: line search underflow");
    }
    logits = trial;
    value = expected_loss(logits, ref, spec, &grad);
    step = std::min(step * 2.0, 1e6);
  }
  result.policy = TabularPolicy::full(std::move(logits));
  return result;
}

// Central finite differences, the test oracle for every analytic gradient:
//   g_i = (L(p + eps e_i) - L(p - eps e_i)) / (2 eps).
inline std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& loss, std::vector<double> params,
    double eps) {
  if (eps <= 0.0) throw InputError("finite_diff_grad: eps must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double saved = params[i];
    params[i] = saved + eps;
    double up = loss(params);
    params[i] = saved - eps;
    double down = loss(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

// Exact minimizer of the expected Bo2 loss: the winner-marginal distribution
// over distinct pairs, pi*(y|x) = 2 mu(y|x) G(y|x) / Z(x) with
// G(y|x) = sum_{y' != y} mu(y'|x) pref(x, y, y').
inline Matrix bo2_winner_marginal(const GoldenPreferenceModel& gm, const Matrix& mu) {
  Matrix out(mu.rows, mu.cols);
  for (int x = 0; x < mu.rows; ++x) {
    double total = 0.0;
    for (int y = 0; y < mu.cols; ++y) {
      double g = 0.0;
      for (int yp = 0; yp < mu.cols; ++yp)
        if (yp != y) g += mu(x, yp) * gm.pref(x, y, yp);
      out(x, y) = 2.0 * mu(x, y) * g;
      total += out(x, y);
    }
    for (int y = 0; y < mu.cols; ++y) out(x, y) /= total;
  }
  return out;
}

// Per-prompt total variation distance between two probability tables.
inline std::vector<double> total_variation_per_prompt(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw InputError("total_variation_per_prompt: shape mismatch");
  std::vector<double> tv(static_cast<std::size_t>(a.rows));
  for (int x = 0; x < a.rows; ++x) {
    double acc = 0.0;
    for (int y = 0; y < a.cols; ++y) acc += std::abs(a(x, y) - b(x, y));
    tv[static_cast<std::size_t>(x)] = 0.5 * acc;
  }
  return tv;
}

}  // namespace preflab
