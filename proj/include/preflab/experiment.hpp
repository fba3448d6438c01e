#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "preflab/config.hpp"
#include "preflab/csv.hpp"
#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/evaluate.hpp"
#include "preflab/oracle.hpp"
#include "preflab/proxy_training.hpp"
#include "preflab/serialize.hpp"
#include "preflab/train.hpp"

namespace preflab {

namespace fs = std::filesystem;

// Worker count comes from the PREFLAB_WORKERS environment variable only;
// outputs do not depend on it.
inline std::size_t worker_count(std::size_t n_items) {
  if (n_items <= 1) return 1;
  if (const char* env = std::getenv("PREFLAB_WORKERS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return std::min(n_items, static_cast<std::size_t>(v));
  }
  unsigned hw = std::thread::hardware_concurrency();
  return std::min(n_items, static_cast<std::size_t>(hw > 0 ? hw : 1));
}

// Runs fn(i) for i in [0, n) on a worker pool. fn must not throw; callers
// capture errors per item.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
  std::size_t workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (std::thread& t : pool) t.join();
}

// Materialized experiment substrate: one world, one golden model, one SFT
// reference, the golden-labeled dataset, the proxy trained on it, and the
// fixed evaluation baseline. Every arm of a preset shares one bench.
struct Bench {
  World world;
  GoldenPreferenceModel gm;
  ReferencePolicy ref;
  PreferenceDataset d_golden;
  ProxyTrainResult proxy;
  Matrix baseline_probs;
  std::string world_hash;

  Bench(World w, GoldenPreferenceModel g, ReferencePolicy r)
      : world(std::move(w)), gm(std::move(g)), ref(std::move(r)),
        proxy{ProxyPreferenceModel(ProxyMode::kPointwiseUtility, world.n_prompts,
                                   world.n_responses)} {}
};

inline Bench build_bench(const ExperimentSpec& spec) {
  World world(spec.world.n_prompts, spec.world.n_responses, spec.world.seed);
  GoldenPreferenceModel gm = GoldenPreferenceModel::seeded(
      world.n_prompts, world.n_responses, spec.golden.utility_scale, spec.golden.seed);

  std::optional<ReferencePolicy> ref;
  switch (spec.sft.kind) {
    case SftKind::kUniform:
      ref.emplace(ReferencePolicy::uniform(world.n_prompts, world.n_responses));
      break;
    case SftKind::kSeededGaussian:
      ref.emplace(ReferencePolicy::seeded_gaussian(world.n_prompts, world.n_responses,
                                                   spec.sft.scale, spec.sft.seed));
      break;
    case SftKind::kFit: {
      // The initial dataset plays the role of the externally provided pairs:
      // uniform behavior, golden labels, then both responses become SFT
      // targets.
      ReferencePolicy prior = ReferencePolicy::uniform(world.n_prompts, world.n_responses);
      Rng rng(spec.sft.seed);
      PreferenceDataset d_initial =
          make_golden(world, gm, prior, spec.sft.n_initial, rng, LabelMode::kBernoulli);
      ref.emplace(fit_sft(d_initial, world, spec.sft.alpha));
      break;
    }
  }

  Bench bench(std::move(world), std::move(gm), std::move(*ref));
  Rng data_rng(spec.data.seed);
  bench.d_golden =
      make_golden(bench.world, bench.gm, bench.ref, spec.data.n_golden, data_rng,
                  spec.data.label_mode);
  bench.proxy = train_proxy(bench.d_golden, bench.world, spec.proxy);

  if (spec.baseline.kind == BaselineKind::kSft) {
    bench.baseline_probs = bench.ref.probs();
  } else {
    bench.baseline_probs =
        optimal_policy(bench.ref, bench.gm, bench.ref.probs(), spec.baseline.beta).prob_table();
  }

  json fingerprint{{"world", to_json(bench.world)},
                   {"golden", to_json(bench.gm)},
                   {"ref", to_json(bench.ref)}};
  bench.world_hash = hex16(json_fingerprint(fingerprint));
  return bench;
}

inline TabularPolicy initial_policy(const Bench& bench, const PolicySpec& spec) {
  if (spec.mode == PolicyMode::kFull) return policy_at_reference(bench.ref);
  return TabularPolicy::low_rank_init(bench.world.n_prompts, bench.world.n_responses, spec.rank,
                                      spec.seed);
}

inline EvalContext make_eval_context(const Bench& bench, const EvalConfig& config) {
  EvalContext ctx;
  ctx.gm = &bench.gm;
  ctx.baseline = &bench.baseline_probs;
  ctx.cls_dataset = &bench.d_golden;
  ctx.config = config;
  return ctx;
}

// Loads a stream-backed dataset from a previously written run directory.
inline PreferenceDataset dataset_from_run_dir(const fs::path& run_dir) {
  std::vector<RecordedBatch> stream = stream_from_jsonl(read_file(run_dir / "stream.jsonl"));
  json config = json::parse(read_file(run_dir / "config.json"));
  return from_stream(stream, config.at("run_id").get<std::string>());
}

inline TabularPolicy checkpoint_policy_from_run_dir(const fs::path& run_dir, int step,
                                                    int n_prompts, int n_responses) {
  std::istringstream in(read_file(run_dir / "checkpoints.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.at("step").get<int>() != step) continue;
    std::vector<double> params = j.at("params").get<std::vector<double>>();
    if (params.size() != static_cast<std::size_t>(n_prompts) * n_responses)
      throw ConfigError("checkpoint is not a full-mode policy of the expected shape");
    Matrix logits(n_prompts, n_responses);
    logits.data = std::move(params);
    return TabularPolicy::full(std::move(logits));
  }
  throw ConfigError("no checkpoint at step " + std::to_string(step) + " in " + run_dir.string());
}

// Resolves a policy-pair generator tag: "sft" or "checkpoint:<run-dir>:<step>".
inline Matrix resolve_generator(const Bench& bench, const std::string& tag) {
  if (tag == "sft") return bench.ref.probs();
  const std::string prefix = "checkpoint:";
  if (tag.rfind(prefix, 0) == 0) {
    std::size_t sep = tag.rfind(':');
    if (sep == prefix.size() - 1) throw ConfigError("checkpoint tag needs a step: " + tag);
    fs::path dir = tag.substr(prefix.size(), sep - prefix.size());
    int step = std::stoi(tag.substr(sep + 1));
    return checkpoint_policy_from_run_dir(dir, step, bench.world.n_prompts,
                                          bench.world.n_responses)
        .prob_table();
  }
  throw ConfigError("unknown generator tag: " + tag);
}

inline PreferenceDataset resolve_recipe(const Bench& bench, const DatasetRecipe& recipe) {
  switch (recipe.kind) {
    case RecipeKind::kGolden:
      return bench.d_golden;
    case RecipeKind::kOnlineStream:
      return dataset_from_run_dir(recipe.source_run);
    case RecipeKind::kShuffled: {
      PreferenceDataset ds = dataset_from_run_dir(recipe.source_run);
      Rng rng(recipe.seed);
      PreferenceDataset shuffled = shuffle_stream(ds, recipe.level, rng);
      shuffled.provenance.seed = recipe.seed;
      return shuffled;
    }
    case RecipeKind::kPolicyPair: {
      Matrix gen_a = resolve_generator(bench, recipe.gen_a);
      Matrix gen_b = resolve_generator(bench, recipe.gen_b);
      Rng rng(recipe.seed);
      return make_policy_pair(bench.world, bench.gm, gen_a, recipe.gen_a, gen_b, recipe.gen_b,
                              recipe.n_examples, rng, recipe.label_mode);
    }
  }
  throw ConfigError("unresolved dataset recipe");
}

struct ExperimentResult {
  RunRecord record;
  fs::path run_dir;
  std::string world_hash;
};

// Executes one experiment end to end against a prebuilt bench and writes the
// run directory under out_dir/run_id.
inline ExperimentResult run_experiment_on_bench(const Bench& bench, const ExperimentSpec& spec,
                                                const std::string& run_id,
                                                const fs::path& out_dir) {
  TabularPolicy policy = initial_policy(bench, spec.policy);
  EvalContext eval = make_eval_context(bench, spec.eval);
  std::optional<PreferenceDataset> dataset;
  const PreferenceDataset* dataset_ptr = nullptr;
  if (spec.train.sampling == SamplingMode::kOffline) {
    dataset.emplace(resolve_recipe(bench, spec.recipe));
    dataset_ptr = &*dataset;
  }
  ExperimentResult result{
      run(bench.world, bench.ref, std::move(policy), spec.train,
          spec.train.sampling == SamplingMode::kOnline ? &bench.proxy.model : nullptr,
          dataset_ptr, &eval, run_id),
      out_dir / run_id, bench.world_hash};
  write_run_record(result.run_dir, result.record);
  json spec_json = to_json(spec);
  spec_json["world_hash"] = bench.world_hash;
  write_file(result.run_dir / "experiment.json", spec_json.dump(2) + "\n");
  return result;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& run_id) {
  Bench bench = build_bench(spec);
  return run_experiment_on_bench(bench, spec, run_id, spec.output_dir);
}

// One pooled trade-off measurement row.
struct PooledPoint {
  std::string run_id;
  std::string method;
  std::string tag;
  int rank = 0;  // 0 = full policy
  int step = 0;
  double kl = 0.0;
  double win_rate = 0.0;
  std::string world_hash;
};

inline std::vector<PooledPoint> tradeoff_points(const RunRecord& record,
                                                const std::string& method,
                                                const std::string& tag, int rank,
                                                const std::string& world_hash) {
  std::vector<PooledPoint> points;
  for (const MetricsRow& row : record.metrics)
    points.push_back({record.run_id, method, tag, rank, row.step, row.kl, row.win_rate,
                      world_hash});
  return points;
}

inline std::string pooled_csv(const std::vector<PooledPoint>& points) {
  CsvWriter csv({"run_id", "method", "tag", "rank", "step", "kl", "win_rate", "world_hash"});
  for (const PooledPoint& p : points)
    csv.add_row({p.run_id, p.method, p.tag, CsvWriter::cell(p.rank), CsvWriter::cell(p.step),
                 CsvWriter::cell(p.kl), CsvWriter::cell(p.win_rate), p.world_hash});
  return csv.to_string();
}

inline std::vector<PooledPoint> pooled_points_from_csv(const std::string& text) {
  std::vector<PooledPoint> points;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("pooled csv: empty");
  if (line != "run_id,method,tag,rank,step,kl,win_rate,world_hash")
    throw InputError("pooled csv: unexpected header: " + line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (cells.size() != 8) throw InputError("pooled csv: bad row: " + line);
    points.push_back({cells[0], cells[1], cells[2], std::stoi(cells[3]), std::stoi(cells[4]),
                      std::stod(cells[5]), std::stod(cells[6]), cells[7]});
  }
  return points;
}

struct SweepRunSummary {
  std::string run_id;
  std::string tag;
  bool ok = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRunSummary> runs;
  std::vector<PooledPoint> points;
  int failures = 0;
};

// Executes every grid point of the sweep on a shared bench, in parallel.
// Individual failures are recorded and do not stop the sweep. Pooled points
// are assembled in deterministic grid order after all runs finish.
inline SweepResult run_sweep(const SweepSpec& sweep, const std::string& method,
                             const fs::path& out_dir) {
  sweep.validate();
  Bench bench = build_bench(sweep.base);

  struct GridPoint {
    ExperimentSpec spec;
    std::string run_id;
    std::string tag;
  };
  std::vector<GridPoint> grid;
  for (double lr : sweep.learning_rates)
    for (double beta : sweep.betas)
      for (int steps : sweep.steps) {
        ExperimentSpec spec = sweep.base;
        spec.train.learning_rate = lr;
        spec.train.beta = beta;
        spec.train.steps = steps;
        std::string tag = "lr" + format_double(lr) + "_beta" + format_double(beta) + "_steps" +
                          std::to_string(steps) + "_seed" + std::to_string(spec.train.seed);
        grid.push_back({std::move(spec), method + "-" + tag, tag});
      }

  std::vector<std::optional<ExperimentResult>> results(grid.size());
  std::vector<std::string> errors(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    try {
      results[i] = run_experiment_on_bench(bench, grid[i].spec, grid[i].run_id,
                                           out_dir / "runs");
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  SweepResult out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRunSummary summary{grid[i].run_id, grid[i].tag, results[i].has_value(), errors[i]};
    if (results[i].has_value()) {
      auto points = tradeoff_points(results[i]->record, method, grid[i].tag,
                                    sweep.base.policy.mode == PolicyMode::kLowRank
                                        ? sweep.base.policy.rank
                                        : 0,
                                    bench.world_hash);
      out.points.insert(out.points.end(), points.begin(), points.end());
    } else {
      ++out.failures;
    }
    out.runs.push_back(std::move(summary));
  }
  write_file(out_dir / "tradeoff.csv", pooled_csv(out.points));
  json summary = json::array();
  for (const SweepRunSummary& r : out.runs)
    summary.push_back(json{{"run_id", r.run_id},
                           {"tag", r.tag},
                           {"status", r.ok ? "ok" : "failed"},
                           {"error", r.error}});
  write_file(out_dir / "sweep_summary.json",
             json{{"method", method}, {"failures", out.failures}, {"runs", summary}}.dump(2) +
                 "\n");
  return out;
}

enum class TandemPerturbation { kNone, kShuffle, kDeleteBatch };

struct TandemReport {
  bool pass = false;
  double max_param_diff = 0.0;
  int first_divergence_step = -1;  // -1 when trajectories never diverge
  int steps_compared = 0;
  double final_win_rate_online = 0.0;
  double final_win_rate_replay = 0.0;
  double final_kl_online = 0.0;
  double final_kl_replay = 0.0;
  std::vector<double> per_step_diff;
};

// Runs the online experiment, wraps its recorded stream into a dataset, and
// replays it offline from the same initialization and optimizer state. In a
// deterministic build the two parameter trajectories must match exactly;
// perturbations (full shuffle, deleted batch) are expected to surface a
// divergence step.
inline TandemReport tandem_check(const ExperimentSpec& spec,
                                 TandemPerturbation perturbation = TandemPerturbation::kNone,
                                 int delete_index = 0, std::uint64_t perturb_seed = 99) {
  Bench bench = build_bench(spec);
  TrainConfig config = spec.train;
  config.sampling = SamplingMode::kOnline;
  config.validate();

  TabularPolicy online_policy = initial_policy(bench, spec.policy);
  TabularPolicy replay_policy = online_policy;  // identical initialization

  // Online pass, storing parameters after every step.
  std::vector<std::vector<double>> online_params;
  online_params.emplace_back(online_policy.params().begin(), online_policy.params().end());
  std::vector<RecordedBatch> stream;
  {
    Rng rng(config.seed);
    OptimizerState optimizer(online_policy.params().size(), config.optimizer);
    for (int step = 1; step <= config.steps; ++step) {
      OnlineStepResult r = online_step(online_policy, bench.ref, bench.proxy.model, bench.world,
                                       config, rng, optimizer, step);
      stream.push_back(std::move(r.recorded));
      online_params.emplace_back(online_policy.params().begin(), online_policy.params().end());
    }
  }

  PreferenceDataset dataset = from_stream(stream, "tandem-online");
  if (perturbation == TandemPerturbation::kShuffle) {
    Rng rng(perturb_seed);
    dataset = shuffle_stream(dataset, 1.0, rng);
  } else if (perturbation == TandemPerturbation::kDeleteBatch) {
    if (delete_index < 0 || delete_index >= static_cast<int>(dataset.batch_sizes.size()))
      throw InputError("tandem_check: delete index out of range");
    std::size_t offset = 0;
    for (int b = 0; b < delete_index; ++b)
      offset += static_cast<std::size_t>(dataset.batch_sizes[static_cast<std::size_t>(b)]);
    int removed = dataset.batch_sizes[static_cast<std::size_t>(delete_index)];
    dataset.examples.erase(dataset.examples.begin() + static_cast<long>(offset),
                           dataset.examples.begin() + static_cast<long>(offset) + removed);
    dataset.batch_sizes.erase(dataset.batch_sizes.begin() + delete_index);
  }

  TandemReport report;
  report.steps_compared = static_cast<int>(dataset.batch_sizes.size());
  {
    OptimizerState optimizer(replay_policy.params().size(), config.optimizer);
    DatasetCursor cursor(dataset);
    TrainConfig replay_config = config;
    replay_config.sampling = SamplingMode::kOffline;
    for (int step = 1; step <= report.steps_compared; ++step) {
      offline_step(replay_policy, bench.ref, cursor, replay_config, optimizer);
      double diff = 0.0;
      if (step < static_cast<int>(online_params.size())) {
        const std::vector<double>& expected = online_params[static_cast<std::size_t>(step)];
        auto got = replay_policy.params();
        for (std::size_t i = 0; i < expected.size(); ++i)
          diff = std::max(diff, std::abs(expected[i] - got[i]));
      } else {
        diff = std::numeric_limits<double>::infinity();
      }
      report.per_step_diff.push_back(diff);
      if (diff > 0.0 && report.first_divergence_step < 0) report.first_divergence_step = step;
      report.max_param_diff = std::max(report.max_param_diff, diff);
    }
  }
  if (report.steps_compared < config.steps && report.first_divergence_step < 0) {
    // Shorter replay (deleted batch): the missing tail is itself a divergence.
    report.first_divergence_step = report.steps_compared + 1;
    report.max_param_diff = std::numeric_limits<double>::infinity();
  }
  report.pass = report.max_param_diff == 0.0 && report.steps_compared == config.steps;

  report.final_win_rate_online = win_rate_exhaustive(
      online_policy.prob_table(), bench.baseline_probs, bench.gm, bench.world.prompt_dist);
  report.final_win_rate_replay = win_rate_exhaustive(
      replay_policy.prob_table(), bench.baseline_probs, bench.gm, bench.world.prompt_dist);
  report.final_kl_online = exact_kl(online_policy, bench.ref, bench.world.prompt_dist);
  report.final_kl_replay = exact_kl(replay_policy, bench.ref, bench.world.prompt_dist);
  return report;
}

inline json to_json(const TandemReport& r) {
  return json{{"pass", r.pass},
              {"max_param_diff", r.max_param_diff},
              {"first_divergence_step", r.first_divergence_step},
              {"steps_compared", r.steps_compared},
              {"final_win_rate_online", r.final_win_rate_online},
              {"final_win_rate_replay", r.final_win_rate_replay},
              {"final_kl_online", r.final_kl_online},
              {"final_kl_replay", r.final_kl_replay}};
}

struct ReportRow {
  std::string method;
  int rank = 0;
  long n_points = 0;
  double win_rate_quantile = 0.0;
};

// Per (method, rank) quantile of win rates across all pooled points: the
// "best possible performance" table. Mixed world hashes are refused.
inline std::vector<ReportRow> report_quantiles(const std::vector<PooledPoint>& points, double q) {
  if (points.empty()) throw InputError("report: empty pool");
  const std::string& hash = points.front().world_hash;
  for (const PooledPoint& p : points)
    if (p.world_hash != hash)
      throw InputError("report: pooled points mix different worlds (" + hash + " vs " +
                       p.world_hash + ")");
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const PooledPoint& p : points) groups[{p.method, p.rank}].push_back(p.win_rate);
  std::vector<ReportRow> rows;
  for (auto& [key, values] : groups)
    rows.push_back({key.first, key.second, static_cast<long>(values.size()),
                    quantile(values, q)});
  return rows;
}

inline std::string report_csv(const std::vector<ReportRow>& rows, double q) {
  CsvWriter csv({"method", "rank", "n_points", "q", "win_rate_quantile"});
  for (const ReportRow& r : rows)
    csv.add_row({r.method, CsvWriter::cell(r.rank), CsvWriter::cell(r.n_points),
                 CsvWriter::cell(q), CsvWriter::cell(r.win_rate_quantile)});
  return csv.to_string();
}

}  // namespace preflab
