#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "preflab/errors.hpp"
#include "preflab/losses.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/world.hpp"

namespace preflab {

// Try at most this many redraws before declaring a generator too degenerate
// to produce a distinct pair.
inline constexpr int kPairResampleCap = 100;

enum class ProvenanceKind { kGolden, kOnlineStream, kShuffled, kPolicyPair };

inline std::string provenance_kind_name(ProvenanceKind k) {
  switch (k) {
    case ProvenanceKind::kGolden: return "golden";
    case ProvenanceKind::kOnlineStream: return "online-stream";
    case ProvenanceKind::kShuffled: return "shuffled";
    case ProvenanceKind::kPolicyPair: return "policy-pair";
  }
  throw InputError("unknown provenance kind");
}

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::kGolden;
  std::string run_id;      // online-stream / shuffled
  double shuffle_level = 0.0;
  std::uint64_t seed = 0;
  std::string gen_a;       // policy-pair generator tags
  std::string gen_b;
};

// One recorded training batch: the unit of order in a stream. May be empty
// when every sampled pair of a step was degenerate.
struct RecordedBatch {
  int step = 0;
  std::vector<LabeledExample> examples;
};

// Ordered sequence of labeled pairwise examples. Order is semantically
// meaningful (it is the training order for offline runs). batch_sizes is
// present for stream-derived datasets and partitions examples contiguously.
struct PreferenceDataset {
  std::vector<LabeledExample> examples;
  Provenance provenance;
  std::vector<int> batch_sizes;  // empty when the dataset has no recorded batching

  std::size_t size() const { return examples.size(); }
  bool has_batches() const { return !batch_sizes.empty(); }

  void validate() const {
    for (const LabeledExample& ex : examples)
      if (ex.winner == ex.loser) throw InputError("PreferenceDataset: degenerate example");
    if (!batch_sizes.empty()) {
      long total = 0;
      for (int b : batch_sizes) {
        if (b < 0) throw InputError("PreferenceDataset: negative batch size");
        total += b;
      }
      if (total != static_cast<long>(examples.size()))
        throw InputError("PreferenceDataset: batch sizes do not cover examples");
    }
  }
};

// Smoothed per-prompt response frequencies, counting both the winning and the
// losing response of every example as SFT targets:
//   probs(y|x) = (count(x,y) + alpha) / (total(x) + alpha * R).
inline ReferencePolicy fit_sft(const PreferenceDataset& dataset, const World& world,
                               double alpha) {
  if (dataset.examples.empty()) throw InputError("fit_sft: empty dataset");
  if (alpha < 0.0) throw InputError("fit_sft: negative smoothing");
  Matrix counts(world.n_prompts, world.n_responses);
  for (const LabeledExample& ex : dataset.examples) {
    world.check_prompt(ex.prompt);
    world.check_response(ex.winner);
    world.check_response(ex.loser);
    counts(ex.prompt, ex.winner) += 1.0;
    counts(ex.prompt, ex.loser) += 1.0;
  }
  if (alpha == 0.0) {
    for (int x = 0; x < world.n_prompts; ++x)
      for (int y = 0; y < world.n_responses; ++y)
        if (counts(x, y) == 0.0)
          throw ConstructionError("fit_sft: zero count with alpha=0 breaks full support (prompt " +
                                  std::to_string(x) + ", response " + std::to_string(y) + ")");
  }
  Matrix probs(world.n_prompts, world.n_responses);
  for (int x = 0; x < world.n_prompts; ++x) {
    double total = 0.0;
    for (int y = 0; y < world.n_responses; ++y) total += counts(x, y);
    double denom = total + alpha * world.n_responses;
    for (int y = 0; y < world.n_responses; ++y) probs(x, y) = (counts(x, y) + alpha) / denom;
  }
  return ReferencePolicy(std::move(probs));
}

namespace detail {

// Distinct pair from one probability table, or throws naming the prompt.
inline std::pair<int, int> draw_distinct_pair(const Matrix& probs, int x, Rng& rng) {
  for (int attempt = 0; attempt < kPairResampleCap; ++attempt) {
    int y1 = rng.categorical(probs.row(x));
    int y2 = rng.categorical(probs.row(x));
    if (y1 != y2) return {y1, y2};
  }
  throw ConstructionError("pair resampling cap exceeded at prompt " + std::to_string(x));
}

}  // namespace detail

// Labeled pairs with both responses drawn from one behavior policy.
inline PreferenceDataset make_golden(const World& world, const GoldenPreferenceModel& gm,
                                     const ReferencePolicy& behavior, int n_examples, Rng& rng,
                                     LabelMode label_mode) {
  if (n_examples < 1) throw InputError("make_golden: need at least one example");
  PreferenceDataset ds;
  ds.provenance.kind = ProvenanceKind::kGolden;
  ds.examples.reserve(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) {
    int x = world.sample_prompt(rng);
    auto [y1, y2] = detail::draw_distinct_pair(behavior.probs(), x, rng);
    PreferenceJudgment j = gm.sample_label(x, y1, y2, rng, label_mode);
    ds.examples.push_back({x, j.winner, j.loser, j.margin});
  }
  return ds;
}

// Flattens a recorded online stream into a dataset, preserving exact order
// and the batch partition.
inline PreferenceDataset from_stream(const std::vector<RecordedBatch>& stream,
                                     const std::string& run_id) {
  if (stream.empty()) throw InputError("from_stream: empty stream");
  PreferenceDataset ds;
  ds.provenance.kind = ProvenanceKind::kOnlineStream;
  ds.provenance.run_id = run_id;
  ds.batch_sizes.reserve(stream.size());
  for (const RecordedBatch& batch : stream) {
    ds.batch_sizes.push_back(static_cast<int>(batch.examples.size()));
    ds.examples.insert(ds.examples.end(), batch.examples.begin(), batch.examples.end());
  }
  return ds;
}

// Windowed shuffle at batch granularity. Batches are split into contiguous
// windows of w = max(1, ceil(level * T)) batches and each window is permuted
// uniformly. level = 0 is the identity; level = 1 permutes the whole stream.
// No batch moves more than w - 1 positions.
inline PreferenceDataset shuffle_stream(const PreferenceDataset& ds, double level, Rng& rng) {
  if (level < 0.0 || level > 1.0) throw InputError("shuffle_stream: level outside [0,1]");
  std::vector<int> sizes = ds.batch_sizes;
  if (sizes.empty()) sizes.assign(ds.examples.size(), 1);  // example granularity when unbatched
  int n_batches = static_cast<int>(sizes.size());

  std::vector<std::size_t> offsets(sizes.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    offsets[i] = off;
    off += static_cast<std::size_t>(sizes[i]);
  }

  std::vector<int> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  int window = std::max(1, static_cast<int>(std::ceil(level * n_batches)));
  for (int start = 0; start < n_batches; start += window) {
    int end = std::min(start + window, n_batches);
    std::span<int> win(order.data() + start, static_cast<std::size_t>(end - start));
    rng.shuffle(win);
  }

  PreferenceDataset out;
  out.provenance = ds.provenance;
  out.provenance.kind = ProvenanceKind::kShuffled;
  out.provenance.shuffle_level = level;
  out.examples.reserve(ds.examples.size());
  out.batch_sizes.reserve(sizes.size());
  for (int b : order) {
    out.batch_sizes.push_back(sizes[static_cast<std::size_t>(b)]);
    std::size_t begin = offsets[static_cast<std::size_t>(b)];
    for (int i = 0; i < sizes[static_cast<std::size_t>(b)]; ++i)
      out.examples.push_back(ds.examples[begin + static_cast<std::size_t>(i)]);
  }
  return out;
}

// Labeled pairs with one side from each generator, side order randomized per
// example so position carries no information about the generator.
inline PreferenceDataset make_policy_pair(const World& world, const GoldenPreferenceModel& gm,
                                          const Matrix& gen_a, const std::string& tag_a,
                                          const Matrix& gen_b, const std::string& tag_b,
                                          int n_examples, Rng& rng, LabelMode label_mode) {
  if (n_examples < 1) throw InputError("make_policy_pair: need at least one example");
  PreferenceDataset ds;
  ds.provenance.kind = ProvenanceKind::kPolicyPair;
  ds.provenance.gen_a = tag_a;
  ds.provenance.gen_b = tag_b;
  ds.examples.reserve(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) {
    int x = world.sample_prompt(rng);
    int ya = -1, yb = -1;
    bool ok = false;
    for (int attempt = 0; attempt < kPairResampleCap; ++attempt) {
      ya = rng.categorical(gen_a.row(x));
      yb = rng.categorical(gen_b.row(x));
      if (ya != yb) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw ConstructionError("pair resampling cap exceeded at prompt " + std::to_string(x));
    bool a_first = rng.bernoulli(0.5);
    int y1 = a_first ? ya : yb;
    int y2 = a_first ? yb : ya;
    PreferenceJudgment j = gm.sample_label(x, y1, y2, rng, label_mode);
    ds.examples.push_back({x, j.winner, j.loser, j.margin});
  }
  return ds;
}

}  // namespace preflab
