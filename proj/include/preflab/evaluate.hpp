#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/world.hpp"

namespace preflab {

enum class WinMode { kSoft, kHard };
enum class WinSampling { kExhaustive, kSampled };
enum class KlMode { kExact, kSampled };

struct EvalConfig {
  int n_eval_prompts = 64;
  WinMode win_mode = WinMode::kSoft;
  WinSampling win_sampling = WinSampling::kExhaustive;
  KlMode kl_mode = KlMode::kExact;
  std::uint64_t seed = 0;
  int cls_subsample = 256;  // 0 = evaluate every example

  void validate() const {
    if (n_eval_prompts < 1) throw InputError("EvalConfig: n_eval_prompts must be >= 1");
  }
};

// One (KL, win rate) measurement of a checkpoint; the axes of the trade-off
// curves.
struct TradeoffPoint {
  std::string run_id;
  std::string tag;
  int step = 0;
  double kl = 0.0;
  double win_rate = 0.0;
};

// KL(pi || ref) summed exactly over the world, weighted by the prompt
// distribution. Terms with pi(y|x) = 0 contribute zero.
inline double exact_kl(const TabularPolicy& policy, const ReferencePolicy& ref,
                       std::span<const double> prompt_dist) {
  double total = 0.0;
  for (int x = 0; x < policy.n_prompts(); ++x) {
    if (prompt_dist[static_cast<std::size_t>(x)] == 0.0) continue;
    std::vector<double> row = policy.logits_row(x);
    double log_z = log_sum_exp(row);
    double per_prompt = 0.0;
    for (int y = 0; y < policy.n_responses(); ++y) {
      double log_p = row[static_cast<std::size_t>(y)] - log_z;
      double p = std::exp(log_p);
      if (p == 0.0) continue;
      per_prompt += p * (log_p - ref.log_prob(x, y));
    }
    total += prompt_dist[static_cast<std::size_t>(x)] * per_prompt;
  }
  return total;
}

// Sampled KL estimator: sample prompts, draw one response trajectory per
// prompt, and add the analytic per-step KL between the next-step
// distributions. Responses are atomic, so a trajectory is one step and the
// per-step KL is the full per-prompt KL term. Stratified mode visits prompts
// round-robin with importance weight p(x) * P, which makes the estimate equal
// exact_kl when n_prompts == P.
inline double sampled_kl(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const World& world, int n_prompts, Rng& rng, bool stratified = false) {
  if (n_prompts < 1) throw InputError("sampled_kl: n_prompts must be >= 1");
  double total = 0.0;
  for (int i = 0; i < n_prompts; ++i) {
    int x = stratified ? (i % world.n_prompts) : world.sample_prompt(rng);
    (void)policy.sample(x, rng);  // the drawn trajectory; per-step KL is analytic
    std::vector<double> row = policy.logits_row(x);
    double log_z = log_sum_exp(row);
    double per_prompt = 0.0;
    for (int y = 0; y < policy.n_responses(); ++y) {
      double log_p = row[static_cast<std::size_t>(y)] - log_z;
      double p = std::exp(log_p);
      if (p == 0.0) continue;
      per_prompt += p * (log_p - ref.log_prob(x, y));
    }
    double weight = stratified
                        ? world.prompt_dist[static_cast<std::size_t>(x)] * world.n_prompts
                        : 1.0;
    total += weight * per_prompt;
  }
  return total / static_cast<double>(n_prompts);
}

// Exhaustive win rate of A against B over the whole world. Soft mode is
//   0.5 + sum_x p(x) sum_{y<y'} (A_y B_y' - A_y' B_y) * (pref(x,y,y') - 0.5);
// the centered antisymmetric form makes win_rate(A, A) exactly 0.5. Hard
// mode enumerates the golden-argmax indicator with ties worth 0.5.
inline double win_rate_exhaustive(const Matrix& probs_a, const Matrix& probs_b,
                                  const GoldenPreferenceModel& gm,
                                  std::span<const double> prompt_dist,
                                  WinMode mode = WinMode::kSoft) {
  if (!probs_a.same_shape(probs_b)) throw InputError("win_rate_exhaustive: shape mismatch");
  double total = 0.0;
  for (int x = 0; x < probs_a.rows; ++x) {
    double px = prompt_dist[static_cast<std::size_t>(x)];
    if (px == 0.0) continue;
    double per_prompt = 0.0;
    for (int y = 0; y < probs_a.cols; ++y) {
      for (int yp = y + 1; yp < probs_a.cols; ++yp) {
        double c = gm.pref_centered(x, y, yp);
        double w_fwd = probs_a(x, y) * probs_b(x, yp);
        double w_rev = probs_a(x, yp) * probs_b(x, y);
        if (mode == WinMode::kSoft) {
          double w_diff = w_fwd - w_rev;
          if (w_diff == 0.0) continue;
          per_prompt += w_diff * c;
        } else {
          if (c > 0.0)
            per_prompt += w_fwd - 0.5 * (w_fwd + w_rev);
          else if (c < 0.0)
            per_prompt += w_rev - 0.5 * (w_fwd + w_rev);
          // golden tie: both orderings worth 0.5, centered contribution 0
        }
      }
    }
    total += px * per_prompt;
  }
  return 0.5 + total;
}

// Sampled win rate: draw y from the policy and y' from the baseline on eval
// prompts. Soft mode averages the golden preference probability; hard mode
// averages the golden-argmax indicator with ties worth 0.5.
inline double win_rate_sampled(const TabularPolicy& policy, const Matrix& baseline_probs,
                               const GoldenPreferenceModel& gm, const World& world,
                               int n_eval_prompts, WinMode mode, Rng& rng) {
  if (n_eval_prompts < 1) throw InputError("win_rate_sampled: need at least one prompt");
  double total = 0.0;
  for (int i = 0; i < n_eval_prompts; ++i) {
    int x = world.sample_prompt(rng);
    int y = policy.sample(x, rng);
    int yp = rng.categorical(baseline_probs.row(x));
    if (mode == WinMode::kSoft) {
      total += gm.pref(x, y, yp);
    } else {
      double c = gm.pref_centered(x, y, yp);
      total += c > 0.0 ? 1.0 : (c == 0.0 ? 0.5 : 0.0);
    }
  }
  return total / static_cast<double>(n_eval_prompts);
}

// Policy-as-classifier score
//   f = log(pi(y1|x)/pi(y2|x)) - log(ref(y1|x)/ref(y2|x));
// antisymmetric in (y1, y2) and identically zero when the policy sits at the
// reference. Same formula as logratio_margin with (y_w,y_l) = (y1,y2).
inline double classifier_score(const TabularPolicy& policy, const ReferencePolicy& ref, int x,
                               int y1, int y2) {
  std::vector<double> row = policy.logits_row(x);
  double policy_diff = row[static_cast<std::size_t>(y1)] - row[static_cast<std::size_t>(y2)];
  double ref_diff = ref.log_prob(x, y1) - ref.log_prob(x, y2);
  return policy_diff - ref_diff;
}

namespace detail {

// Shared scoring for classification accuracies: sign(f) against the golden
// argmax, f == 0 worth half, golden ties skipped.
inline bool score_pair(const TabularPolicy& policy, const ReferencePolicy& ref,
                       const GoldenPreferenceModel& gm, int x, int y1, int y2, double& score_out) {
  double c = gm.pref_centered(x, y1, y2);
  if (c == 0.0) return false;
  double f = classifier_score(policy, ref, x, y1, y2);
  if (f == 0.0)
    score_out = 0.5;
  else
    score_out = ((f > 0.0) == (c > 0.0)) ? 1.0 : 0.0;
  return true;
}

}  // namespace detail

// Accuracy of sign(classifier_score) against the golden argmax over dataset
// pairs. subsample > 0 evaluates a deterministic seeded subsample of that
// size; golden ties are excluded from the denominator.
inline double classification_accuracy(const TabularPolicy& policy, const ReferencePolicy& ref,
                                      const PreferenceDataset& ds,
                                      const GoldenPreferenceModel& gm, int subsample = 0,
                                      std::uint64_t seed = 0) {
  if (ds.examples.empty()) throw InputError("classification_accuracy: empty dataset");
  std::vector<std::size_t> indices;
  if (subsample > 0 && static_cast<std::size_t>(subsample) < ds.examples.size()) {
    Rng rng(seed);
    for (int i = 0; i < subsample; ++i)
      indices.push_back(
          static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ds.examples.size()))));
  } else {
    indices.resize(ds.examples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  }
  double score_sum = 0.0;
  long judged = 0;
  for (std::size_t i : indices) {
    const LabeledExample& ex = ds.examples[i];
    double s = 0.0;
    if (!detail::score_pair(policy, ref, gm, ex.prompt, ex.winner, ex.loser, s)) continue;
    score_sum += s;
    ++judged;
  }
  if (judged == 0)
    throw UndefinedStatisticError("classification_accuracy: all pairs tied under golden model");
  return score_sum / static_cast<double>(judged);
}

// Same accuracy on explicit (x, y1, y2) pairs; used for exhaustive checks.
inline double classification_accuracy_pairs(const TabularPolicy& policy,
                                            const ReferencePolicy& ref,
                                            const std::vector<std::tuple<int, int, int>>& pairs,
                                            const GoldenPreferenceModel& gm) {
  if (pairs.empty()) throw InputError("classification_accuracy: empty pair sequence");
  double score_sum = 0.0;
  long judged = 0;
  for (const auto& [x, y1, y2] : pairs) {
    double s = 0.0;
    if (!detail::score_pair(policy, ref, gm, x, y1, y2, s)) continue;
    score_sum += s;
    ++judged;
  }
  if (judged == 0)
    throw UndefinedStatisticError("classification_accuracy: all pairs tied under golden model");
  return score_sum / static_cast<double>(judged);
}

// Classification accuracy on pairs the policy samples from itself.
// Degenerate pairs are resampled up to the shared cap.
inline double self_classification_accuracy(const TabularPolicy& policy,
                                           const ReferencePolicy& ref,
                                           const GoldenPreferenceModel& gm, const World& world,
                                           int n_pairs, Rng& rng) {
  if (n_pairs < 1) throw InputError("self_classification_accuracy: need at least one pair");
  double score_sum = 0.0;
  long judged = 0;
  for (int i = 0; i < n_pairs; ++i) {
    int x = world.sample_prompt(rng);
    int y1 = -1, y2 = -1;
    bool ok = false;
    for (int attempt = 0; attempt < kPairResampleCap; ++attempt) {
      y1 = policy.sample(x, rng);
      y2 = policy.sample(x, rng);
      if (y1 != y2) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw ConstructionError("pair resampling cap exceeded at prompt " + std::to_string(x));
    double s = 0.0;
    if (!detail::score_pair(policy, ref, gm, x, y1, y2, s)) continue;
    score_sum += s;
    ++judged;
  }
  if (judged == 0)
    throw UndefinedStatisticError("self_classification_accuracy: all sampled pairs golden-tied");
  return score_sum / static_cast<double>(judged);
}

// A pairwise judge: positive score prefers y1, negative prefers y2, zero is
// a tie (worth half). Adapters below wrap the judge kinds the battery
// compares.
using PairJudge = std::function<double(int x, int y1, int y2)>;

inline PairJudge judge_from_proxy(const ProxyPreferenceModel& pm) {
  return [&pm](int x, int y1, int y2) { return pm.predict(x, y1, y2) - pm.predict(x, y2, y1); };
}

inline PairJudge judge_from_policy(const TabularPolicy& policy, const ReferencePolicy& ref) {
  return [&policy, &ref](int x, int y1, int y2) {
    return classifier_score(policy, ref, x, y1, y2);
  };
}

inline PairJudge judge_from_golden(const GoldenPreferenceModel& gm) {
  return [&gm](int x, int y1, int y2) { return gm.pref_centered(x, y1, y2); };
}

struct StreamAccuracyPoint {
  int step = 0;        // training step of the batch at the window center
  double accuracy = 0.0;
  long n_pairs = 0;
  bool truncated = false;  // window clipped at a stream boundary
};

// Judge accuracy against the golden argmax on windows of stream examples
// around n_checkpoints evenly spaced positions.
inline std::vector<StreamAccuracyPoint> stream_accuracy(const PairJudge& judge,
                                                        const std::vector<RecordedBatch>& stream,
                                                        const GoldenPreferenceModel& gm,
                                                        int n_checkpoints, int window) {
  if (stream.empty()) throw InputError("stream_accuracy: empty stream");
  if (n_checkpoints < 1 || window < 1)
    throw InputError("stream_accuracy: checkpoints and window must be positive");
  std::vector<LabeledExample> flat;
  std::vector<int> step_of;
  for (const RecordedBatch& b : stream)
    for (const LabeledExample& ex : b.examples) {
      flat.push_back(ex);
      step_of.push_back(b.step);
    }
  if (flat.empty()) throw InputError("stream_accuracy: stream has no examples");
  long n = static_cast<long>(flat.size());
  std::vector<StreamAccuracyPoint> out;
  for (int c = 0; c < n_checkpoints; ++c) {
    long center = static_cast<long>((static_cast<double>(c) + 0.5) * static_cast<double>(n) /
                                    static_cast<double>(n_checkpoints));
    if (center >= n) center = n - 1;
    long lo = center - window / 2;
    long hi = lo + window;
    StreamAccuracyPoint point;
    if (lo < 0) {
      lo = 0;
      point.truncated = true;
    }
    if (hi > n) {
      hi = n;
      point.truncated = true;
    }
    double score_sum = 0.0;
    long judged = 0;
    for (long i = lo; i < hi; ++i) {
      const LabeledExample& ex = flat[static_cast<std::size_t>(i)];
      double c_gold = gm.pref_centered(ex.prompt, ex.winner, ex.loser);
      if (c_gold == 0.0) continue;
      double f = judge(ex.prompt, ex.winner, ex.loser);
      double s = f == 0.0 ? 0.5 : (((f > 0.0) == (c_gold > 0.0)) ? 1.0 : 0.0);
      score_sum += s;
      ++judged;
    }
    point.step = step_of[static_cast<std::size_t>(center)];
    point.accuracy = judged > 0 ? score_sum / static_cast<double>(judged) : 0.5;
    point.n_pairs = judged;
    out.push_back(point);
  }
  return out;
}

// Mean of log pi(y_w|x) - log ref(y_w|x) over the dataset.
inline double winning_logprob_delta(const TabularPolicy& policy, const ReferencePolicy& ref,
                                    const PreferenceDataset& ds) {
  if (ds.examples.empty()) throw InputError("winning_logprob_delta: empty dataset");
  double total = 0.0;
  for (const LabeledExample& ex : ds.examples)
    total += policy.log_prob(ex.prompt, ex.winner) - ref.log_prob(ex.prompt, ex.winner);
  return total / static_cast<double>(ds.examples.size());
}

}  // namespace preflab
