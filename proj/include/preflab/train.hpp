#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/evaluate.hpp"
#include "preflab/losses.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/world.hpp"

namespace preflab {

enum class SamplingMode { kOnline, kOffline };
enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  LossKind loss = LossKind::kIpoEq1;
  SamplingMode sampling = SamplingMode::kOnline;
  double learning_rate = 1e-2;
  double beta = 0.1;
  int steps = 2000;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int eval_cadence = 50;
  OptimizerConfig optimizer;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (beta <= 0.0) throw ConfigError("TrainConfig: beta must be positive");
    if (steps < 0) throw ConfigError("TrainConfig: steps must be nonnegative");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
    if (eval_cadence < 1) throw ConfigError("TrainConfig: eval_cadence must be positive");
  }
};

// Flat-parameter optimizer. A skipped step (empty batch) must not advance the
// adam step counter, so the counter only moves inside apply().
class OptimizerState {
 public:
  OptimizerState(std::size_t n_params, const OptimizerConfig& config) : config_(config) {
    if (config.kind == OptimizerKind::kAdam) {
      m_.assign(n_params, 0.0);
      v_.assign(n_params, 0.0);
    }
  }

  void apply(std::span<double> params, std::span<const double> grad, double lr) {
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
      return;
    }
    ++t_;
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + config_.eps);
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Sequential cursor over a dataset. Stream-derived datasets are replayed at
// their recorded batch boundaries (including empty batches) so a replay sees
// byte-for-byte the batches the online run saw; unbatched datasets are served
// in fixed-size chunks that never span the wraparound.
class DatasetCursor {
 public:
  explicit DatasetCursor(const PreferenceDataset& dataset) : dataset_(&dataset) {
    if (dataset.examples.empty() && dataset.batch_sizes.empty())
      throw InputError("DatasetCursor: empty dataset");
  }

  Batch next(int batch_size) {
    Batch batch;
    batch.source = BatchSource::kDataset;
    if (dataset_->has_batches()) {
      std::size_t b = batch_cursor_;
      int size = dataset_->batch_sizes[b];
      batch.examples.assign(dataset_->examples.begin() + static_cast<long>(example_offset_),
                            dataset_->examples.begin() + static_cast<long>(example_offset_) + size);
      example_offset_ += static_cast<std::size_t>(size);
      ++batch_cursor_;
      if (batch_cursor_ == dataset_->batch_sizes.size()) {
        batch_cursor_ = 0;
        example_offset_ = 0;
        ++epoch_;
      }
      return batch;
    }
    std::size_t n = dataset_->examples.size();
    std::size_t take = std::min(static_cast<std::size_t>(batch_size), n - cursor_);
    batch.examples.assign(dataset_->examples.begin() + static_cast<long>(cursor_),
                          dataset_->examples.begin() + static_cast<long>(cursor_ + take));
    cursor_ += take;
    if (cursor_ == n) {
      cursor_ = 0;
      ++epoch_;
    }
    return batch;
  }

  int epoch() const { return epoch_; }

 private:
  const PreferenceDataset* dataset_;
  std::size_t cursor_ = 0;          // unbatched example cursor
  std::size_t batch_cursor_ = 0;    // recorded-batch cursor
  std::size_t example_offset_ = 0;  // example offset of batch_cursor_
  int epoch_ = 0;
};

// The one update path shared by the online and offline procedures: compute
// the configured loss on the batch and take one optimizer step.
inline LossReport apply_batch_update(TabularPolicy& policy, OptimizerState& optimizer,
                                     const ReferencePolicy& ref, const Batch& batch,
                                     const TrainConfig& config) {
  LossReport report = loss_and_grad(policy, ref, batch, config.beta, config.loss);
  optimizer.apply(policy.params(), report.gradient, config.learning_rate);
  return report;
}

struct OnlineStepResult {
  RecordedBatch recorded;
  bool applied = false;
  LossReport report;
  int degenerate_pairs = 0;
};

// One on-policy step: draw batch_size prompts, a response pair from the
// current policy for each, label with the proxy, drop identical pairs, then
// update. An all-degenerate batch is recorded as empty and skipped.
inline OnlineStepResult online_step(TabularPolicy& policy, const ReferencePolicy& ref,
                                    const ProxyPreferenceModel& proxy, const World& world,
                                    const TrainConfig& config, Rng& rng,
                                    OptimizerState& optimizer, int step_index) {
  OnlineStepResult result;
  result.recorded.step = step_index;
  for (int i = 0; i < config.batch_size; ++i) {
    int x = world.sample_prompt(rng);
    int y1 = policy.sample(x, rng);
    int y2 = policy.sample(x, rng);
    if (y1 == y2) {
      ++result.degenerate_pairs;
      continue;
    }
    PreferenceJudgment j = proxy.judge(x, y1, y2, rng);
    result.recorded.examples.push_back({x, j.winner, j.loser, j.margin});
  }
  if (result.recorded.examples.empty()) return result;
  Batch batch{result.recorded.examples, BatchSource::kOnline};
  result.report = apply_batch_update(policy, optimizer, ref, batch, config);
  result.applied = true;
  return result;
}

struct OfflineStepResult {
  bool applied = false;
  LossReport report;
  int batch_examples = 0;
};

// One offline step: take the next batch in dataset order and update. Empty
// recorded batches replay as skips, mirroring the online run.
inline OfflineStepResult offline_step(TabularPolicy& policy, const ReferencePolicy& ref,
                                      DatasetCursor& cursor, const TrainConfig& config,
                                      OptimizerState& optimizer) {
  OfflineStepResult result;
  Batch batch = cursor.next(config.batch_size);
  result.batch_examples = static_cast<int>(batch.examples.size());
  if (batch.examples.empty()) return result;
  result.report = apply_batch_update(policy, optimizer, ref, batch, config);
  result.applied = true;
  return result;
}

struct MetricsRow {
  int step = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double kl = std::numeric_limits<double>::quiet_NaN();
  double win_rate = std::numeric_limits<double>::quiet_NaN();
  double cls_acc = std::numeric_limits<double>::quiet_NaN();
  double win_logprob_delta = std::numeric_limits<double>::quiet_NaN();
  double mean_margin = std::numeric_limits<double>::quiet_NaN();
  int epoch = 0;
};

struct Checkpoint {
  int step = 0;
  std::vector<double> params;
};

struct RunRecord {
  std::string run_id;
  TrainConfig config;
  std::vector<Checkpoint> checkpoints;
  std::vector<RecordedBatch> stream;  // online runs only; generation order
  std::vector<MetricsRow> metrics;
  long degenerate_pairs = 0;
  int skipped_steps = 0;
  int final_epoch = 0;

  const Checkpoint& checkpoint_at(int step) const {
    for (const Checkpoint& c : checkpoints)
      if (c.step == step) return c;
    throw InputError("RunRecord: no checkpoint at step " + std::to_string(step));
  }
};

// Everything the in-loop evaluation needs. Null members blank out their
// metrics columns.
struct EvalContext {
  const GoldenPreferenceModel* gm = nullptr;
  const Matrix* baseline = nullptr;  // fixed baseline policy (probability table)
  const PreferenceDataset* cls_dataset = nullptr;
  EvalConfig config;
};

namespace detail {

inline MetricsRow evaluate_checkpoint(const TabularPolicy& policy, const ReferencePolicy& ref,
                                      const World& world, const EvalContext* eval, int step,
                                      int epoch, double last_loss, double last_margin) {
  MetricsRow row;
  row.step = step;
  row.loss = last_loss;
  row.mean_margin = last_margin;
  row.epoch = epoch;
  if (eval == nullptr) return row;
  const EvalConfig& ec = eval->config;
  if (ec.kl_mode == KlMode::kExact) {
    row.kl = exact_kl(policy, ref, world.prompt_dist);
  } else {
    Rng kl_rng(Rng::derive(ec.seed, 0x6B6C0000ULL + static_cast<std::uint64_t>(step)));
    row.kl = sampled_kl(policy, ref, world, ec.n_eval_prompts, kl_rng);
  }
  if (eval->gm != nullptr && eval->baseline != nullptr) {
    if (ec.win_sampling == WinSampling::kExhaustive) {
      row.win_rate = win_rate_exhaustive(policy.prob_table(), *eval->baseline, *eval->gm,
                                         world.prompt_dist, ec.win_mode);
    } else {
      Rng wr_rng(Rng::derive(ec.seed, 0x77720000ULL + static_cast<std::uint64_t>(step)));
      row.win_rate = win_rate_sampled(policy, *eval->baseline, *eval->gm, world,
                                      ec.n_eval_prompts, ec.win_mode, wr_rng);
    }
  }
  if (eval->gm != nullptr && eval->cls_dataset != nullptr && !eval->cls_dataset->examples.empty()) {
    row.cls_acc = classification_accuracy(policy, ref, *eval->cls_dataset, *eval->gm,
                                          ec.cls_subsample,
                                          Rng::derive(ec.seed, 0x636C0000ULL + static_cast<std::uint64_t>(step)));
    row.win_logprob_delta = winning_logprob_delta(policy, ref, *eval->cls_dataset);
  }
  return row;
}

}  // namespace detail

// Executes a full training run from the given initial policy. Online mode
// records every labeled batch in generation order (the online dataset);
// offline mode consumes the dataset sequentially. Metrics are evaluated at
// step 0 and every eval_cadence steps; checkpoints are stored at the same
// steps plus the final step. Identical inputs reproduce the record exactly.
inline RunRecord run(const World& world, const ReferencePolicy& ref, TabularPolicy policy,
                     const TrainConfig& config, const ProxyPreferenceModel* proxy,
                     const PreferenceDataset* dataset, const EvalContext* eval,
                     std::string run_id) {
  config.validate();
  if (config.sampling == SamplingMode::kOnline && proxy == nullptr)
    throw ConfigError("run: online mode requires a proxy preference model");
  if (config.sampling == SamplingMode::kOffline && dataset == nullptr)
    throw ConfigError("run: offline mode requires a dataset");

  RunRecord record;
  record.run_id = std::move(run_id);
  record.config = config;

  Rng rng(config.seed);
  OptimizerState optimizer(policy.params().size(), config.optimizer);
  std::optional<DatasetCursor> cursor;
  if (config.sampling == SamplingMode::kOffline) cursor.emplace(*dataset);

  double last_loss = std::numeric_limits<double>::quiet_NaN();
  double last_margin = std::numeric_limits<double>::quiet_NaN();

  auto snapshot = [&](int step) {
    record.checkpoints.push_back(
        {step, std::vector<double>(policy.params().begin(), policy.params().end())});
  };
  auto eval_row = [&](int step) {
    int epoch = cursor ? cursor->epoch() : 0;
    record.metrics.push_back(
        detail::evaluate_checkpoint(policy, ref, world, eval, step, epoch, last_loss, last_margin));
  };

  snapshot(0);
  eval_row(0);

  for (int step = 1; step <= config.steps; ++step) {
    if (config.sampling == SamplingMode::kOnline) {
      OnlineStepResult r = online_step(policy, ref, *proxy, world, config, rng, optimizer, step);
      record.degenerate_pairs += r.degenerate_pairs;
      record.stream.push_back(std::move(r.recorded));
      if (r.applied) {
        last_loss = r.report.value;
        last_margin = r.report.mean_margin;
      } else {
        ++record.skipped_steps;
      }
    } else {
      OfflineStepResult r = offline_step(policy, ref, *cursor, config, optimizer);
      if (r.applied) {
        last_loss = r.report.value;
        last_margin = r.report.mean_margin;
      } else {
        ++record.skipped_steps;
      }
    }
    if (step % config.eval_cadence == 0) {
      snapshot(step);
      eval_row(step);
    }
  }
  if (config.steps % config.eval_cadence != 0) snapshot(config.steps);
  record.final_epoch = cursor ? cursor->epoch() : 0;
  return record;
}

}  // namespace preflab
