#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/policy.hpp"

namespace preflab {

// One labeled comparison: prompt, winning response, losing response, and the
// score margin recorded by whichever judge produced the label.
struct LabeledExample {
  int prompt = 0;
  int winner = 0;
  int loser = 0;
  double margin = 0.0;
};

enum class BatchSource { kOnline, kDataset };

// Training batch. Identical pairs are dropped before a batch is formed, so
// winner != loser for every example.
struct Batch {
  std::vector<LabeledExample> examples;
  BatchSource source = BatchSource::kDataset;
};

enum class LossKind { kIpoEq1, kIpoRoot, kDpo, kBo2 };

inline std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kIpoEq1: return "ipo-eq1";
    case LossKind::kIpoRoot: return "ipo-appB";
    case LossKind::kDpo: return "dpo";
    case LossKind::kBo2: return "bo2";
  }
  throw InputError("unknown loss kind");
}

inline LossKind loss_kind_from_name(const std::string& name) {
  if (name == "ipo-eq1") return LossKind::kIpoEq1;
  if (name == "ipo-appB") return LossKind::kIpoRoot;
  if (name == "dpo") return LossKind::kDpo;
  if (name == "bo2") return LossKind::kBo2;
  throw InputError("unknown loss kind: " + name);
}

// Batch loss value plus the exact analytic gradient, laid out like the
// policy's parameter vector. aux fields feed the run metrics.
struct LossReport {
  double value = 0.0;
  std::vector<double> gradient;
  double mean_margin = 0.0;           // mean h over the batch
  double mean_winner_logprob_delta = 0.0;  // mean log pi(y_w) - log ref(y_w)
};

// Reference-relative log-ratio margin
//   h = [log pi(y_w|x) - log ref(y_w|x)] - [log pi(y_l|x) - log ref(y_l|x)].
// The policy's normalizer cancels, so h reduces to a logits difference.
inline double logratio_margin(const TabularPolicy& policy, const ReferencePolicy& ref, int x,
                              int y_w, int y_l) {
  std::vector<double> row = policy.logits_row(x);
  double policy_diff = row[static_cast<std::size_t>(y_w)] - row[static_cast<std::size_t>(y_l)];
  double ref_diff = ref.log_prob(x, y_w) - ref.log_prob(x, y_l);
  return policy_diff - ref_diff;
}

namespace detail {

// Accumulates dL/d(effective logits) into a P x R table, then maps it onto
// the flat parameter layout (identity for full mode, chain rule through the
// factors for low-rank).
class GradAccumulator {
 public:
  explicit GradAccumulator(const TabularPolicy& policy)
      : policy_(policy), table_(policy.n_prompts(), policy.n_responses()) {}

  Matrix& table() { return table_; }

  std::vector<double> to_params(double scale) {
    std::vector<double> grad(policy_.params().size(), 0.0);
    if (policy_.mode() == PolicyMode::kFull) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = table_.data[i] * scale;
      return grad;
    }
    int n_prompts = policy_.n_prompts();
    int n_responses = policy_.n_responses();
    int rank = policy_.rank();
    auto a = policy_.factor_a();
    auto b = policy_.factor_b();
    std::size_t a_size = static_cast<std::size_t>(n_prompts) * rank;
    // dL/dA = G * B^T, dL/dB = A^T * G
    for (int x = 0; x < n_prompts; ++x) {
      for (int k = 0; k < rank; ++k) {
        double acc = 0.0;
        const double* brow = b.data() + static_cast<std::size_t>(k) * n_responses;
        const double* grow = table_.data.data() + static_cast<std::size_t>(x) * n_responses;
        for (int j = 0; j < n_responses; ++j) acc += grow[j] * brow[j];
        grad[static_cast<std::size_t>(x) * rank + k] = acc * scale;
      }
    }
    for (int k = 0; k < rank; ++k) {
      for (int j = 0; j < n_responses; ++j) {
        double acc = 0.0;
        for (int x = 0; x < n_prompts; ++x)
          acc += a[static_cast<std::size_t>(x) * rank + k] *
                 table_(x, j);
        grad[a_size + static_cast<std::size_t>(k) * n_responses + j] = acc * scale;
      }
    }
    return grad;
  }

 private:
  const TabularPolicy& policy_;
  Matrix table_;
};

}  // namespace detail

// Contrastive losses on the margin h. Per example:
//   ipo-eq1: (h - beta/2)^2
//   ipo-appB: (beta*h - 0.5)^2
//   dpo:      log(1 + exp(-beta*h))
// The value is the batch mean; the gradient is exact (h is linear in the
// effective logits, so no softmax Jacobian enters).
inline LossReport contrastive_loss_and_grad(const TabularPolicy& policy,
                                            const ReferencePolicy& ref, const Batch& batch,
                                            double beta, LossKind kind) {
  if (beta <= 0.0) throw InputError("contrastive loss: beta must be positive");
  if (batch.examples.empty()) throw InputError("contrastive loss: empty batch");
  if (kind == LossKind::kBo2) throw InputError("contrastive loss: bo2 is not contrastive");
  detail::GradAccumulator acc(policy);
  Matrix& table = acc.table();
  LossReport report;
  double value = 0.0, margin_sum = 0.0, delta_sum = 0.0;
  for (const LabeledExample& ex : batch.examples) {
    if (ex.winner == ex.loser) throw InputError("contrastive loss: degenerate pair in batch");
    std::vector<double> row = policy.logits_row(ex.prompt);
    double log_z = log_sum_exp(row);
    double h = (row[static_cast<std::size_t>(ex.winner)] - row[static_cast<std::size_t>(ex.loser)]) -
               (ref.log_prob(ex.prompt, ex.winner) - ref.log_prob(ex.prompt, ex.loser));
    double dvalue_dh = 0.0;
    switch (kind) {
      case LossKind::kIpoEq1: {
        double r = h - 0.5 * beta;
        value += r * r;
        dvalue_dh = 2.0 * r;
        break;
      }
      case LossKind::kIpoRoot: {
        double r = beta * h - 0.5;
        value += r * r;
        dvalue_dh = 2.0 * r * beta;
        break;
      }
      case LossKind::kDpo: {
        value += softplus(-beta * h);
        dvalue_dh = -beta * sigmoid(-beta * h);
        break;
      }
      default:
        throw InputError("unknown contrastive kind");
    }
    table(ex.prompt, ex.winner) += dvalue_dh;
    table(ex.prompt, ex.loser) -= dvalue_dh;
    margin_sum += h;
    delta_sum += (row[static_cast<std::size_t>(ex.winner)] - log_z) - ref.log_prob(ex.prompt, ex.winner);
  }
  double n = static_cast<double>(batch.examples.size());
  report.value = value / n;
  report.gradient = acc.to_params(1.0 / n);
  report.mean_margin = margin_sum / n;
  report.mean_winner_logprob_delta = delta_sum / n;
  return report;
}

inline LossReport ipo_loss_and_grad(const TabularPolicy& policy, const ReferencePolicy& ref,
                                    const Batch& batch, double beta) {
  return contrastive_loss_and_grad(policy, ref, batch, beta, LossKind::kIpoEq1);
}

// Best-of-2: mean of -log pi(y_w|x). No reference policy involved; this is
// SFT on the winning side of each pair.
inline LossReport bo2_loss_and_grad(const TabularPolicy& policy, const Batch& batch) {
  if (batch.examples.empty()) throw InputError("bo2 loss: empty batch");
  detail::GradAccumulator acc(policy);
  Matrix& table = acc.table();
  LossReport report;
  double value = 0.0, margin_sum = 0.0;
  int n_responses = policy.n_responses();
  for (const LabeledExample& ex : batch.examples) {
    std::vector<double> row = policy.logits_row(ex.prompt);
    double log_z = log_sum_exp(row);
    value -= row[static_cast<std::size_t>(ex.winner)] - log_z;
    // d(-log pi(y_w))/dz_j = pi_j - [j == y_w]
    std::vector<double> p(row.size());
    softmax_into(row, p);
    for (int j = 0; j < n_responses; ++j) table(ex.prompt, j) += p[static_cast<std::size_t>(j)];
    table(ex.prompt, ex.winner) -= 1.0;
    margin_sum += (row[static_cast<std::size_t>(ex.winner)] - log_z);
  }
  double n = static_cast<double>(batch.examples.size());
  report.value = value / n;
  report.gradient = acc.to_params(1.0 / n);
  report.mean_margin = 0.0;  // no contrastive margin for bo2
  report.mean_winner_logprob_delta = margin_sum / n;  // raw mean winner log-prob
  return report;
}

// Dispatch by kind; bo2 ignores beta and uses ref only for the reported
// winner log-prob delta.
inline LossReport loss_and_grad(const TabularPolicy& policy, const ReferencePolicy& ref,
                                const Batch& batch, double beta, LossKind kind) {
  if (kind == LossKind::kBo2) {
    LossReport report = bo2_loss_and_grad(policy, batch);
    double ref_sum = 0.0;
    for (const LabeledExample& ex : batch.examples)
      ref_sum += ref.log_prob(ex.prompt, ex.winner);
    report.mean_winner_logprob_delta -= ref_sum / static_cast<double>(batch.examples.size());
    return report;
  }
  return contrastive_loss_and_grad(policy, ref, batch, beta, kind);
}

}  // namespace preflab
