#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/matrix.hpp"
#include "preflab/rng.hpp"
#include "preflab/world.hpp"

namespace preflab {

enum class PolicyMode { kFull, kLowRank };

// Softmax policy over responses, one logits row per prompt. Full mode stores
// the P x R logits table directly; low-rank mode stores factors A (P x k) and
// B (k x R) so effective logits are A*B. The rank k acts as the policy
// capacity knob. Parameters live in one flat vector (A then B in low-rank
// mode) so optimizers and gradient checks can treat any policy as a plain
// coordinate vector.
class TabularPolicy {
 public:
  static TabularPolicy full(Matrix logits) {
    TabularPolicy p;
    p.mode_ = PolicyMode::kFull;
    p.n_prompts_ = logits.rows;
    p.n_responses_ = logits.cols;
    p.rank_ = 0;
    p.params_ = std::move(logits.data);
    p.check_shape();
    return p;
  }

  static TabularPolicy low_rank(Matrix a, Matrix b) {
    if (a.cols != b.rows) throw InputError("TabularPolicy: factor shape mismatch");
    TabularPolicy p;
    p.mode_ = PolicyMode::kLowRank;
    p.n_prompts_ = a.rows;
    p.n_responses_ = b.cols;
    p.rank_ = a.cols;
    p.params_ = std::move(a.data);
    p.params_.insert(p.params_.end(), b.data.begin(), b.data.end());
    p.check_shape();
    return p;
  }

  // Seeded near-uniform start: factors are standard normal scaled by
  // 1/sqrt(k).
  static TabularPolicy low_rank_init(int n_prompts, int n_responses, int rank,
                                     std::uint64_t seed) {
    if (rank < 1) throw InputError("TabularPolicy: rank must be positive");
    Rng rng(seed);
    double scale = 1.0 / std::sqrt(static_cast<double>(rank));
    Matrix a(n_prompts, rank);
    Matrix b(rank, n_responses);
    for (double& v : a.data) v = rng.normal() * scale;
    for (double& v : b.data) v = rng.normal() * scale;
    return low_rank(std::move(a), std::move(b));
  }

  PolicyMode mode() const { return mode_; }
  int n_prompts() const { return n_prompts_; }
  int n_responses() const { return n_responses_; }
  int rank() const { return rank_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Factor views (low-rank mode only).
  std::span<const double> factor_a() const {
    return {params_.data(), static_cast<std::size_t>(n_prompts_) * rank_};
  }
  std::span<const double> factor_b() const {
    return {params_.data() + static_cast<std::size_t>(n_prompts_) * rank_,
            static_cast<std::size_t>(rank_) * n_responses_};
  }

  // Effective logits row for prompt x.
  void logits_row(int x, std::span<double> out) const {
    check_prompt(x);
    if (mode_ == PolicyMode::kFull) {
      const double* row = params_.data() + static_cast<std::size_t>(x) * n_responses_;
      for (int j = 0; j < n_responses_; ++j) out[j] = row[j];
      return;
    }
    auto a = factor_a();
    auto b = factor_b();
    for (int j = 0; j < n_responses_; ++j) out[j] = 0.0;
    for (int k = 0; k < rank_; ++k) {
      double axk = a[static_cast<std::size_t>(x) * rank_ + k];
      const double* brow = b.data() + static_cast<std::size_t>(k) * n_responses_;
      for (int j = 0; j < n_responses_; ++j) out[j] += axk * brow[j];
    }
  }

  std::vector<double> logits_row(int x) const {
    std::vector<double> out(static_cast<std::size_t>(n_responses_));
    logits_row(x, out);
    return out;
  }

  // softmax(logits[x,.]); max-subtraction keeps huge logits finite.
  std::vector<double> probs(int x) const {
    std::vector<double> row = logits_row(x);
    std::vector<double> p(row.size());
    softmax_into(row, p);
    return p;
  }

  Matrix prob_table() const {
    Matrix t(n_prompts_, n_responses_);
    for (int x = 0; x < n_prompts_; ++x) {
      std::vector<double> p = probs(x);
      for (int j = 0; j < n_responses_; ++j) t(x, j) = p[j];
    }
    return t;
  }

  double log_prob(int x, int y) const {
    check_prompt(x);
    check_response(y);
    std::vector<double> row = logits_row(x);
    return row[static_cast<std::size_t>(y)] - log_sum_exp(row);
  }

  int sample(int x, Rng& rng) const {
    std::vector<double> p = probs(x);
    return rng.categorical(p);
  }

 private:
  void check_shape() const {
    if (n_prompts_ < 1 || n_responses_ < 2) throw InputError("TabularPolicy: bad shape");
  }
  void check_prompt(int x) const {
    if (x < 0 || x >= n_prompts_) throw InputError("prompt id out of range");
  }
  void check_response(int y) const {
    if (y < 0 || y >= n_responses_) throw InputError("response id out of range");
  }

  PolicyMode mode_ = PolicyMode::kFull;
  int n_prompts_ = 0;
  int n_responses_ = 0;
  int rank_ = 0;
  std::vector<double> params_;
};

// Fixed full-support reference distribution (the SFT policy). Rows are
// probabilities, every entry at least kSupportFloor.
class ReferencePolicy {
 public:
  static constexpr double kSupportFloor = 1e-9;

  explicit ReferencePolicy(Matrix probs) : probs_(std::move(probs)) {
    for (int x = 0; x < probs_.rows; ++x) {
      double total = 0.0;
      for (int j = 0; j < probs_.cols; ++j) {
        double p = probs_(x, j);
        if (p < kSupportFloor)
          throw ConstructionError("ReferencePolicy: entry below support floor at prompt " +
                                  std::to_string(x));
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw ConstructionError("ReferencePolicy: row does not sum to 1 at prompt " +
                                std::to_string(x));
    }
  }

  static ReferencePolicy uniform(int n_prompts, int n_responses) {
    Matrix m(n_prompts, n_responses, 1.0 / n_responses);
    return ReferencePolicy(std::move(m));
  }

  // Softmax of seeded gaussian logits; `scale` controls how far from uniform.
  static ReferencePolicy seeded_gaussian(int n_prompts, int n_responses, double scale,
                                         std::uint64_t seed) {
    Rng rng(seed);
    Matrix logits(n_prompts, n_responses);
    for (double& v : logits.data) v = rng.normal() * scale;
    Matrix probs(n_prompts, n_responses);
    for (int x = 0; x < n_prompts; ++x) softmax_into(logits.row(x), probs.row(x));
    return ReferencePolicy(std::move(probs));
  }

  int n_prompts() const { return probs_.rows; }
  int n_responses() const { return probs_.cols; }
  const Matrix& probs() const { return probs_; }
  double prob(int x, int y) const { return probs_(x, y); }
  double log_prob(int x, int y) const { return std::log(probs_(x, y)); }

  int sample(int x, Rng& rng) const { return rng.categorical(probs_.row(x)); }

 private:
  Matrix probs_;
};

// Policy whose logits reproduce the reference exactly; the canonical training
// start so that all reference-relative margins begin at zero.
inline TabularPolicy policy_at_reference(const ReferencePolicy& ref) {
  Matrix logits(ref.n_prompts(), ref.n_responses());
  for (int x = 0; x < ref.n_prompts(); ++x)
    for (int j = 0; j < ref.n_responses(); ++j) logits(x, j) = std::log(ref.prob(x, j));
  return TabularPolicy::full(std::move(logits));
}

}  // namespace preflab
