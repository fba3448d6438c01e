#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/preference.hpp"

namespace preflab {

struct ProxyTrainConfig {
  ProxyMode mode = ProxyMode::kPointwiseUtility;
  double learning_rate = 0.5;
  int steps = 300;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  int minibatch_size = 0;  // 0 = full batch (deterministic default)
  double param_cap = 50.0;  // divergence guard on the parameter inf-norm
  int trace_cadence = 1;
};

struct ProxyTrainResult {
  ProxyPreferenceModel model;
  std::vector<std::pair<int, double>> accuracy_trace;  // (step, training accuracy)
  bool diverged = false;
  int steps_run = 0;
};

// Order-randomized log-likelihood, averaged over the dataset, minus the L2
// penalty: mean[ 0.5 log r(x,y_w,y_l) + 0.5 log(1 - r(x,y_l,y_w)) ]
// - l2 * ||params||^2. This is the training objective (maximized).
inline double proxy_objective(const ProxyPreferenceModel& pm, const PreferenceDataset& dataset,
                              double l2) {
  if (dataset.examples.empty()) throw InputError("proxy_objective: empty dataset");
  double ll = 0.0;
  for (const LabeledExample& ex : dataset.examples) {
    double r_fwd = pm.predict(ex.prompt, ex.winner, ex.loser);
    double r_rev = pm.predict(ex.prompt, ex.loser, ex.winner);
    ll += 0.5 * std::log(r_fwd) + 0.5 * std::log1p(-r_rev);
  }
  ll /= static_cast<double>(dataset.examples.size());
  double sq = 0.0;
  for (double v : pm.table()) sq += v * v;
  sq += pm.position_bias() * pm.position_bias();
  return ll - l2 * sq;
}

// Training accuracy under the sign-difference decision, with proxy ties
// counted as half correct (no coin flips, so the trace is deterministic).
inline double proxy_training_accuracy(const ProxyPreferenceModel& pm,
                                      const PreferenceDataset& dataset) {
  double score = 0.0;
  for (const LabeledExample& ex : dataset.examples) {
    double margin = pm.predict(ex.prompt, ex.winner, ex.loser) -
                    pm.predict(ex.prompt, ex.loser, ex.winner);
    if (margin > 0.0)
      score += 1.0;
    else if (margin == 0.0)
      score += 0.5;
  }
  return score / static_cast<double>(dataset.examples.size());
}

// Full-batch (or minibatch) gradient ascent on proxy_objective. Bias and
// table parameters both train and both feel the L2 penalty. Deterministic
// given the config seed.
inline ProxyTrainResult train_proxy(const PreferenceDataset& dataset, const World& world,
                                    const ProxyTrainConfig& config) {
  if (dataset.examples.empty()) throw InputError("train_proxy: empty dataset");
  if (config.learning_rate <= 0.0) throw InputError("train_proxy: learning rate must be positive");
  if (config.steps < 0) throw InputError("train_proxy: negative step count");
  for (const LabeledExample& ex : dataset.examples) {
    world.check_prompt(ex.prompt);
    world.check_response(ex.winner);
    world.check_response(ex.loser);
  }

  ProxyTrainResult result{ProxyPreferenceModel(config.mode, world.n_prompts, world.n_responses)};
  ProxyPreferenceModel& pm = result.model;
  Rng rng(config.seed);

  std::vector<double> grad(pm.table().size(), 0.0);
  std::vector<std::size_t> batch_indices;
  for (int step = 0; step < config.steps; ++step) {
    if ((step % std::max(1, config.trace_cadence)) == 0)
      result.accuracy_trace.emplace_back(step, proxy_training_accuracy(pm, dataset));

    batch_indices.clear();
    if (config.minibatch_size > 0) {
      for (int i = 0; i < config.minibatch_size; ++i)
        batch_indices.push_back(static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(dataset.examples.size()))));
    } else {
      for (std::size_t i = 0; i < dataset.examples.size(); ++i) batch_indices.push_back(i);
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    double bias_grad = 0.0;
    for (std::size_t idx : batch_indices) {
      const LabeledExample& ex = dataset.examples[idx];
      double s_fwd = pm.raw_score(ex.prompt, ex.winner, ex.loser) + pm.position_bias();
      double s_rev = pm.raw_score(ex.prompt, ex.loser, ex.winner) + pm.position_bias();
      double g_fwd = 0.5 * sigmoid(-s_fwd);  // d/ds of 0.5 log sigmoid(s)
      double g_rev = -0.5 * sigmoid(s_rev);  // d/ds of 0.5 log(1 - sigmoid(s))
      if (pm.mode() == ProxyMode::kPointwiseUtility) {
        std::size_t iw = static_cast<std::size_t>(ex.prompt) * world.n_responses + ex.winner;
        std::size_t il = static_cast<std::size_t>(ex.prompt) * world.n_responses + ex.loser;
        grad[iw] += g_fwd - g_rev;
        grad[il] += g_rev - g_fwd;
      } else {
        std::size_t base = static_cast<std::size_t>(ex.prompt) * world.n_responses *
                           world.n_responses;
        grad[base + static_cast<std::size_t>(ex.winner) * world.n_responses + ex.loser] += g_fwd;
        grad[base + static_cast<std::size_t>(ex.loser) * world.n_responses + ex.winner] += g_rev;
      }
      bias_grad += g_fwd + g_rev;
    }
    double n = static_cast<double>(batch_indices.size());
    auto table = pm.table();
    for (std::size_t i = 0; i < table.size(); ++i)
      table[i] += config.learning_rate * (grad[i] / n - 2.0 * config.l2 * table[i]);
    pm.set_position_bias(pm.position_bias() +
                         config.learning_rate *
                             (bias_grad / n - 2.0 * config.l2 * pm.position_bias()));
    result.steps_run = step + 1;

    double inf_norm = std::abs(pm.position_bias());
    for (double v : pm.table()) inf_norm = std::max(inf_norm, std::abs(v));
    if (inf_norm > config.param_cap) {
      result.diverged = true;
      break;
    }
  }
  result.accuracy_trace.emplace_back(result.steps_run, proxy_training_accuracy(pm, dataset));
  return result;
}

}  // namespace preflab
