#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/matrix.hpp"
#include "preflab/rng.hpp"
#include "preflab/world.hpp"

namespace preflab {

enum class LabelMode { kBernoulli, kArgmax };

// Outcome of judging one ordered pair. `margin` is oriented winner-minus-
// loser: the score difference that backed the decision (negative for a
// bernoulli upset). `tie_broken` marks judgments decided by the seeded coin.
struct PreferenceJudgment {
  int winner = 0;
  int loser = 0;
  double margin = 0.0;
  bool tie_broken = false;
};

// Bradley-Terry ground truth: latent utilities u[P x R], logistic link.
// pref(x,y1,y2) + pref(x,y2,y1) == 1 holds exactly by construction.
class GoldenPreferenceModel {
 public:
  explicit GoldenPreferenceModel(Matrix utilities) : u_(std::move(utilities)) {
    if (u_.rows < 1 || u_.cols < 2) throw InputError("GoldenPreferenceModel: bad shape");
  }

  static GoldenPreferenceModel seeded(int n_prompts, int n_responses, double utility_scale,
                                      std::uint64_t seed) {
    Rng rng(seed);
    Matrix u(n_prompts, n_responses);
    for (double& v : u.data) v = rng.normal() * utility_scale;
    return GoldenPreferenceModel(std::move(u));
  }

  int n_prompts() const { return u_.rows; }
  int n_responses() const { return u_.cols; }
  const Matrix& utilities() const { return u_; }
  double utility(int x, int y) const {
    check(x, y);
    return u_(x, y);
  }

  // P(y1 preferred over y2 | x) = sigmoid(u(x,y1) - u(x,y2)).
  double pref(int x, int y1, int y2) const {
    check(x, y1);
    check(x, y2);
    if (y1 == y2) return 0.5;
    return sigmoid(u_(x, y1) - u_(x, y2));
  }

  // pref - 0.5 with exact antisymmetry; the sign is the golden argmax.
  double pref_centered(int x, int y1, int y2) const {
    check(x, y1);
    check(x, y2);
    if (y1 == y2) return 0.0;
    return sigmoid_centered(u_(x, y1) - u_(x, y2));
  }

  // Draws a winner for the ordered pair (y1, y2). Bernoulli mode samples the
  // winner from the preference probability; argmax mode takes the higher-
  // utility side, with exact ties settled by the seeded coin and flagged.
  PreferenceJudgment sample_label(int x, int y1, int y2, Rng& rng, LabelMode mode) const {
    double p = pref(x, y1, y2);
    PreferenceJudgment j;
    if (mode == LabelMode::kBernoulli) {
      bool first_wins = rng.bernoulli(p);
      j.winner = first_wins ? y1 : y2;
      j.loser = first_wins ? y2 : y1;
      j.tie_broken = false;
    } else {
      double c = pref_centered(x, y1, y2);
      if (c == 0.0) {
        bool first_wins = rng.bernoulli(0.5);
        j.winner = first_wins ? y1 : y2;
        j.loser = first_wins ? y2 : y1;
        j.tie_broken = true;
      } else {
        bool first_wins = c > 0.0;
        j.winner = first_wins ? y1 : y2;
        j.loser = first_wins ? y2 : y1;
      }
    }
    j.margin = pref(x, j.winner, j.loser) - pref(x, j.loser, j.winner);
    return j;
  }

 private:
  void check(int x, int y) const {
    if (x < 0 || x >= u_.rows) throw InputError("prompt id out of range");
    if (y < 0 || y >= u_.cols) throw InputError("response id out of range");
  }
  Matrix u_;
};

enum class ProxyMode { kPointwiseUtility, kPairwiseTable };

// Learned preference model. Pointwise mode scores r(x,y1,y2) =
// sigmoid(u_hat(x,y1) - u_hat(x,y2) + b); pairwise-table mode scores
// sigmoid(t[x,y1,y2] + b). b is the explicit positional-bias parameter
// (applied to the first-listed response).
class ProxyPreferenceModel {
 public:
  ProxyPreferenceModel(ProxyMode mode, int n_prompts, int n_responses)
      : mode_(mode), n_prompts_(n_prompts), n_responses_(n_responses) {
    if (n_prompts < 1 || n_responses < 2) throw InputError("ProxyPreferenceModel: bad shape");
    std::size_t n = mode == ProxyMode::kPointwiseUtility
                        ? static_cast<std::size_t>(n_prompts) * n_responses
                        : static_cast<std::size_t>(n_prompts) * n_responses * n_responses;
    table_.assign(n, 0.0);
  }

  ProxyMode mode() const { return mode_; }
  int n_prompts() const { return n_prompts_; }
  int n_responses() const { return n_responses_; }

  double position_bias() const { return bias_; }
  void set_position_bias(double b) { bias_ = b; }

  std::span<double> table() { return table_; }
  std::span<const double> table() const { return table_; }

  double& pointwise_utility(int x, int y) {
    return table_[static_cast<std::size_t>(x) * n_responses_ + y];
  }
  double pointwise_utility(int x, int y) const {
    return table_[static_cast<std::size_t>(x) * n_responses_ + y];
  }
  double& pair_score(int x, int y1, int y2) {
    return table_[(static_cast<std::size_t>(x) * n_responses_ + y1) * n_responses_ + y2];
  }
  double pair_score(int x, int y1, int y2) const {
    return table_[(static_cast<std::size_t>(x) * n_responses_ + y1) * n_responses_ + y2];
  }

  // Pre-link score without the positional bias.
  double raw_score(int x, int y1, int y2) const {
    check(x, y1);
    check(x, y2);
    if (mode_ == ProxyMode::kPointwiseUtility)
      return pointwise_utility(x, y1) - pointwise_utility(x, y2);
    return pair_score(x, y1, y2);
  }

  // Raw positional prediction in (0,1).
  double predict(int x, int y1, int y2) const {
    return sigmoid(raw_score(x, y1, y2) + bias_);
  }

  // Sign-difference inference: the raw prediction is position-sensitive, so
  // the decision uses r(x,y1,y2) - r(x,y2,y1). In pointwise mode the bias
  // shifts both terms equally and cancels.
  PreferenceJudgment judge(int x, int y1, int y2, Rng& rng) const {
    double margin = predict(x, y1, y2) - predict(x, y2, y1);
    PreferenceJudgment j;
    if (margin == 0.0) {
      bool first_wins = rng.bernoulli(0.5);
      j.winner = first_wins ? y1 : y2;
      j.loser = first_wins ? y2 : y1;
      j.margin = 0.0;
      j.tie_broken = true;
    } else {
      bool first_wins = margin > 0.0;
      j.winner = first_wins ? y1 : y2;
      j.loser = first_wins ? y2 : y1;
      j.margin = first_wins ? margin : -margin;
    }
    return j;
  }

 private:
  void check(int x, int y) const {
    if (x < 0 || x >= n_prompts_) throw InputError("prompt id out of range");
    if (y < 0 || y >= n_responses_) throw InputError("response id out of range");
  }

  ProxyMode mode_;
  int n_prompts_;
  int n_responses_;
  double bias_ = 0.0;
  std::vector<double> table_;
};

// Fraction of judged pairs on which the proxy agrees with the golden argmax.
// Golden ties are excluded from the denominator; pairs the proxy ties on fall
// to the seeded coin.
inline double proxy_accuracy(const ProxyPreferenceModel& pm,
                             const std::vector<std::tuple<int, int, int>>& pairs,
                             const GoldenPreferenceModel& gm, Rng& rng) {
  if (pairs.empty()) throw InputError("proxy_accuracy: empty pair sequence");
  long correct = 0, judged = 0;
  for (const auto& [x, y1, y2] : pairs) {
    double c = gm.pref_centered(x, y1, y2);
    if (c == 0.0) continue;  // golden tie
    PreferenceJudgment j = pm.judge(x, y1, y2, rng);
    int golden_winner = c > 0.0 ? y1 : y2;
    if (j.winner == golden_winner) ++correct;
    ++judged;
  }
  if (judged == 0)
    throw UndefinedStatisticError("proxy_accuracy: all pairs tied under golden model");
  return static_cast<double>(correct) / static_cast<double>(judged);
}

}  // namespace preflab
