#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "preflab/experiment.hpp"

namespace preflab {

// Desk-scale defaults shared by the hypothesis presets. Small enough that a
// full preset finishes in seconds, large enough that the over-optimization
// and ordering phenomena show up.
inline ExperimentSpec default_preset_spec() {
  ExperimentSpec spec;
  spec.world = {24, 12, 1};
  spec.golden = {1.0, 2};
  spec.sft = {SftKind::kFit, 0.5, 3, 400, 1.0};
  spec.proxy.mode = ProxyMode::kPointwiseUtility;
  spec.proxy.learning_rate = 0.5;
  spec.proxy.steps = 400;
  spec.proxy.l2 = 1e-4;
  spec.proxy.seed = 4;
  spec.proxy.trace_cadence = 20;
  spec.data = {600, LabelMode::kBernoulli, 5};
  spec.policy = {PolicyMode::kFull, 4, 6};
  spec.train.loss = LossKind::kIpoEq1;
  spec.train.sampling = SamplingMode::kOnline;
  spec.train.learning_rate = 0.08;
  spec.train.beta = 0.1;
  spec.train.steps = 600;
  spec.train.batch_size = 16;
  spec.train.seed = 7;
  spec.train.eval_cadence = 30;
  spec.eval.n_eval_prompts = 64;
  spec.eval.win_mode = WinMode::kSoft;
  spec.eval.win_sampling = WinSampling::kExhaustive;
  spec.eval.kl_mode = KlMode::kExact;
  spec.eval.seed = 9;
  spec.eval.cls_subsample = 256;
  spec.baseline.kind = BaselineKind::kSft;
  return spec;
}

inline TabularPolicy policy_from_params(const std::vector<double>& params,
                                        const PolicySpec& pspec, int n_prompts, int n_responses) {
  if (pspec.mode == PolicyMode::kFull) {
    Matrix logits(n_prompts, n_responses);
    logits.data = params;
    return TabularPolicy::full(std::move(logits));
  }
  Matrix a(n_prompts, pspec.rank), b(pspec.rank, n_responses);
  std::copy(params.begin(), params.begin() + static_cast<long>(a.data.size()), a.data.begin());
  std::copy(params.begin() + static_cast<long>(a.data.size()), params.end(), b.data.begin());
  return TabularPolicy::low_rank(std::move(a), std::move(b));
}

struct PresetResult {
  std::vector<PooledPoint> points;
  json summary;
  std::vector<fs::path> files_written;
};

namespace detail {

// One offline run on a dataset resolved from an already-written source run
// directory (ordered or shuffled stream).
inline ExperimentResult run_offline_on_stream(const Bench& bench, ExperimentSpec spec,
                                              const fs::path& source_run, double level,
                                              std::uint64_t shuffle_seed,
                                              const std::string& run_id, const fs::path& out) {
  spec.train.sampling = SamplingMode::kOffline;
  if (level == 0.0) {
    spec.recipe.kind = RecipeKind::kOnlineStream;
    spec.recipe.source_run = source_run.string();
  } else {
    spec.recipe.kind = RecipeKind::kShuffled;
    spec.recipe.source_run = source_run.string();
    spec.recipe.level = level;
    spec.recipe.seed = shuffle_seed;
  }
  return run_experiment_on_bench(bench, spec, run_id, out);
}

inline double peak_win_rate(const RunRecord& record) {
  double best = -1.0;
  for (const MetricsRow& row : record.metrics)
    if (!std::isnan(row.win_rate)) best = std::max(best, row.win_rate);
  return best;
}

}  // namespace detail

// H1 (data coverage): online vs offline-on-golden vs offline on the shuffled
// online stream. All arms share one bench; only sampling and data order
// differ.
inline PresetResult run_preset_h1(const ExperimentSpec& base, const fs::path& out_dir,
                                  int n_seeds = 3) {
  Bench bench = build_bench(base);
  PresetResult result;
  std::vector<std::string> hashes;

  for (int s = 0; s < n_seeds; ++s) {
    std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
    // Online arm.
    ExperimentSpec online = base;
    online.train.sampling = SamplingMode::kOnline;
    online.train.seed = seed;
    std::string online_id = "online-seed" + std::to_string(seed);
    ExperimentResult online_run =
        run_experiment_on_bench(bench, online, online_id, out_dir / "runs");
    auto online_points =
        tradeoff_points(online_run.record, "online", online_id, 0, bench.world_hash);
    result.points.insert(result.points.end(), online_points.begin(), online_points.end());
    hashes.push_back(online_run.world_hash);

    // Offline on the golden dataset, hyper-parameter sweep.
    SweepSpec offline_sweep;
    offline_sweep.base = base;
    offline_sweep.base.train.sampling = SamplingMode::kOffline;
    offline_sweep.base.train.seed = seed;
    offline_sweep.base.recipe.kind = RecipeKind::kGolden;
    offline_sweep.learning_rates = {base.train.learning_rate * 0.5, base.train.learning_rate,
                                    base.train.learning_rate * 2.0};
    offline_sweep.betas = {base.train.beta, base.train.beta * 3.0};
    offline_sweep.steps = {base.train.steps};
    SweepResult offline_result =
        run_sweep(offline_sweep, "offline-golden", out_dir / ("offline-golden-seed" + std::to_string(seed)));
    result.points.insert(result.points.end(), offline_result.points.begin(),
                         offline_result.points.end());

    // Offline on the fully shuffled online stream.
    ExperimentSpec shuffled = base;
    shuffled.train.seed = seed;
    ExperimentResult shuffled_run = detail::run_offline_on_stream(
        bench, shuffled, online_run.run_dir, 1.0, Rng::derive(seed, 17),
        "offline-shuffled-seed" + std::to_string(seed), out_dir / "runs");
    auto shuffled_points = tradeoff_points(shuffled_run.record, "offline-shuffled",
                                           shuffled_run.record.run_id, 0, bench.world_hash);
    result.points.insert(result.points.end(), shuffled_points.begin(), shuffled_points.end());
  }

  write_file(out_dir / "fig3_tradeoff.csv", pooled_csv(result.points));
  result.files_written.push_back(out_dir / "fig3_tradeoff.csv");
  result.summary = json{{"preset", "H1"}, {"world_hash", bench.world_hash}, {"n_seeds", n_seeds}};
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

// H2 (sub-optimal offline dataset): build a dataset from a high-performing
// near-deterministic generator (the online run's final policy) and show that
// offline training on it stays far below the generator's win rate.
inline PresetResult run_preset_h2(const ExperimentSpec& base, const fs::path& out_dir,
                                  int n_seeds = 2) {
  Bench bench = build_bench(base);
  PresetResult result;

  // Generator: online run pushed further than the default config.
  ExperimentSpec gen_spec = base;
  gen_spec.train.sampling = SamplingMode::kOnline;
  gen_spec.train.steps = base.train.steps * 2;
  ExperimentResult gen_run =
      run_experiment_on_bench(bench, gen_spec, "generator-online", out_dir / "runs");
  const Checkpoint& final_ckpt = gen_run.record.checkpoints.back();
  TabularPolicy generator =
      policy_from_params(final_ckpt.params, gen_spec.policy, bench.world.n_prompts,
                         bench.world.n_responses);
  Matrix gen_probs = generator.prob_table();
  double generator_win_rate = win_rate_exhaustive(gen_probs, bench.baseline_probs, bench.gm,
                                                  bench.world.prompt_dist);
  double max_prob = 0.0;
  for (double p : gen_probs.data) max_prob = std::max(max_prob, p);

  // Pairs with both sides from the generator.
  Rng pair_rng(Rng::derive(base.data.seed, 23));
  PreferenceDataset d_pair =
      make_policy_pair(bench.world, bench.gm, gen_probs, "final", gen_probs, "final",
                       base.data.n_golden, pair_rng, base.data.label_mode);
  fs::path pair_path = out_dir / "d_pair.jsonl";
  write_file(pair_path, dataset_to_jsonl(d_pair));
  result.files_written.push_back(pair_path);

  double best_offline = -1.0;
  for (int s = 0; s < n_seeds; ++s) {
    std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
    for (double lr_scale : {1.0, 3.0}) {
      ExperimentSpec offline = base;
      offline.train.sampling = SamplingMode::kOffline;
      offline.train.seed = seed;
      offline.train.learning_rate = base.train.learning_rate * lr_scale;
      offline.train.steps = base.train.steps * 2;
      // Run against the in-memory dataset: install it as the bench golden
      // dataset substitute via an explicit cursor run.
      TabularPolicy policy = initial_policy(bench, offline.policy);
      EvalContext eval = make_eval_context(bench, offline.eval);
      std::string run_id = "offline-pair-seed" + std::to_string(seed) + "-lr" +
                           format_double(offline.train.learning_rate);
      RunRecord record = run(bench.world, bench.ref, std::move(policy), offline.train, nullptr,
                             &d_pair, &eval, run_id);
      write_run_record(out_dir / "runs" / run_id, record);
      auto points = tradeoff_points(record, "offline-4kvs4k", run_id, 0, bench.world_hash);
      result.points.insert(result.points.end(), points.begin(), points.end());
      best_offline = std::max(best_offline, detail::peak_win_rate(record));
    }
  }

  write_file(out_dir / "fig4_tradeoff.csv", pooled_csv(result.points));
  result.files_written.push_back(out_dir / "fig4_tradeoff.csv");
  result.summary = json{{"preset", "H2"},
                        {"world_hash", bench.world_hash},
                        {"generator_win_rate", generator_win_rate},
                        {"generator_max_prob", max_prob},
                        {"best_offline_win_rate", best_offline},
                        {"gap", generator_win_rate - best_offline}};
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

// H3 (classification vs generation): accuracy batteries over the online
// stream, the accuracy-vs-win-rate scatter, and the per-run classification
// and winner-log-prob traces.
inline PresetResult run_preset_h3(const ExperimentSpec& base, const fs::path& out_dir) {
  Bench bench = build_bench(base);
  PresetResult result;

  ExperimentSpec online = base;
  online.train.sampling = SamplingMode::kOnline;
  ExperimentResult online_run = run_experiment_on_bench(bench, online, "online", out_dir / "runs");

  ExperimentSpec offline = base;
  offline.train.sampling = SamplingMode::kOffline;
  offline.recipe.kind = RecipeKind::kGolden;
  ExperimentResult offline_run =
      run_experiment_on_bench(bench, offline, "offline-golden", out_dir / "runs");

  ExperimentResult tandem_run = detail::run_offline_on_stream(
      bench, base, online_run.run_dir, 1.0, Rng::derive(base.train.seed, 17), "offline-shuffled",
      out_dir / "runs");

  auto final_policy = [&](const ExperimentResult& r, const ExperimentSpec& s) {
    return policy_from_params(r.record.checkpoints.back().params, s.policy,
                              bench.world.n_prompts, bench.world.n_responses);
  };
  TabularPolicy online_final = final_policy(online_run, online);
  TabularPolicy offline_final = final_policy(offline_run, offline);

  // fig5: judge accuracy over the online stream at 10 checkpoints, window 64.
  {
    CsvWriter csv({"judge", "step", "accuracy", "n"});
    auto emit = [&](const std::string& name, const PairJudge& judge) {
      for (const StreamAccuracyPoint& p :
           stream_accuracy(judge, online_run.record.stream, bench.gm, 10, 64))
        csv.add_row({name, CsvWriter::cell(p.step), CsvWriter::cell(p.accuracy),
                     CsvWriter::cell(p.n_pairs)});
    };
    emit("proxy", judge_from_proxy(bench.proxy.model));
    emit("online-policy", judge_from_policy(online_final, bench.ref));
    emit("offline-policy", judge_from_policy(offline_final, bench.ref));
    write_file(out_dir / "fig5_stream_accuracy.csv", csv.to_string());
    result.files_written.push_back(out_dir / "fig5_stream_accuracy.csv");
  }

  // fig6: classification accuracy vs win rate scatter plus correlations.
  auto pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(a.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
  };
  {
    CsvWriter csv({"method", "step", "cls_acc", "win_rate"});
    std::vector<double> acc_all, wr_all;
    json correlations;
    auto emit = [&](const std::string& method, const RunRecord& record) {
      std::vector<double> acc, wr;
      for (const MetricsRow& row : record.metrics) {
        if (std::isnan(row.cls_acc) || std::isnan(row.win_rate)) continue;
        csv.add_row({method, CsvWriter::cell(row.step), CsvWriter::cell(row.cls_acc),
                     CsvWriter::cell(row.win_rate)});
        acc.push_back(row.cls_acc);
        wr.push_back(row.win_rate);
      }
      acc_all.insert(acc_all.end(), acc.begin(), acc.end());
      wr_all.insert(wr_all.end(), wr.begin(), wr.end());
      correlations[method] = acc.size() >= 2 ? pearson(acc, wr) : 0.0;
    };
    emit("online", online_run.record);
    emit("offline-golden", offline_run.record);
    emit("offline-shuffled", tandem_run.record);
    correlations["pooled"] = acc_all.size() >= 2 ? pearson(acc_all, wr_all) : 0.0;
    write_file(out_dir / "fig6_accuracy_vs_winrate.csv", csv.to_string());
    result.files_written.push_back(out_dir / "fig6_accuracy_vs_winrate.csv");
    result.summary["correlations"] = correlations;
  }

  // fig7: classification accuracy and winner log-prob deltas over time.
  {
    CsvWriter csv({"method", "step", "cls_acc", "win_logprob_delta"});
    auto emit = [&](const std::string& method, const RunRecord& record) {
      for (const MetricsRow& row : record.metrics)
        csv.add_row({method, CsvWriter::cell(row.step), CsvWriter::cell(row.cls_acc),
                     CsvWriter::cell(row.win_logprob_delta)});
    };
    emit("online", online_run.record);
    emit("offline-golden", offline_run.record);
    emit("offline-shuffled", tandem_run.record);
    write_file(out_dir / "fig7_classification.csv", csv.to_string());
    result.files_written.push_back(out_dir / "fig7_classification.csv");
  }

  // Self-classification of final policies on their own samples.
  {
    Rng rng(Rng::derive(base.eval.seed, 31));
    double online_self = self_classification_accuracy(online_final, bench.ref, bench.gm,
                                                      bench.world, 512, rng);
    Rng rng2(Rng::derive(base.eval.seed, 32));
    double offline_self = self_classification_accuracy(offline_final, bench.ref, bench.gm,
                                                       bench.world, 512, rng2);
    result.summary["self_classification"] =
        json{{"online", online_self}, {"offline-golden", offline_self}};
  }

  for (const auto& [method, record] :
       std::vector<std::pair<std::string, const RunRecord*>>{
           {"online", &online_run.record},
           {"offline-golden", &offline_run.record},
           {"offline-shuffled", &tandem_run.record}}) {
    auto points = tradeoff_points(*record, method, method, 0, bench.world_hash);
    result.points.insert(result.points.end(), points.begin(), points.end());
  }
  result.summary["preset"] = "H3";
  result.summary["world_hash"] = bench.world_hash;
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

// H4 (non-contrastive loss): the H1 arms rebuilt on the Bo2 loss, with the
// default-config IPO arms alongside.
inline PresetResult run_preset_h4(const ExperimentSpec& base, const fs::path& out_dir,
                                  int n_seeds = 2) {
  Bench bench = build_bench(base);
  PresetResult result;

  auto run_arm = [&](const std::string& method, LossKind loss, SamplingMode sampling,
                     std::uint64_t seed, const fs::path& stream_source) {
    ExperimentSpec spec = base;
    spec.train.loss = loss;
    spec.train.sampling = sampling;
    spec.train.seed = seed;
    std::string run_id = method + "-seed" + std::to_string(seed);
    ExperimentResult r =
        !stream_source.empty()
            ? detail::run_offline_on_stream(bench, spec, stream_source, 1.0,
                                            Rng::derive(seed, 17), run_id, out_dir / "runs")
            : run_experiment_on_bench(bench, spec, run_id, out_dir / "runs");
    auto points = tradeoff_points(r.record, method, run_id, 0, bench.world_hash);
    result.points.insert(result.points.end(), points.begin(), points.end());
    return r;
  };

  for (int s = 0; s < n_seeds; ++s) {
    std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
    ExperimentResult bo2_online = run_arm("bo2-online", LossKind::kBo2, SamplingMode::kOnline,
                                          seed, fs::path());
    run_arm("bo2-offline-golden", LossKind::kBo2, SamplingMode::kOffline, seed, fs::path());
    run_arm("bo2-offline-shuffled", LossKind::kBo2, SamplingMode::kOffline, seed,
            bo2_online.run_dir);
    ExperimentResult ipo_online = run_arm("ipo-online", LossKind::kIpoEq1, SamplingMode::kOnline,
                                          seed, fs::path());
    (void)ipo_online;
    run_arm("ipo-offline-golden", LossKind::kIpoEq1, SamplingMode::kOffline, seed, fs::path());
  }

  write_file(out_dir / "fig8_tradeoff.csv", pooled_csv(result.points));
  result.files_written.push_back(out_dir / "fig8_tradeoff.csv");
  result.summary = json{{"preset", "H4"}, {"world_hash", bench.world_hash}};
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

// H5 (scaling): repeat the three arms across policy capacities (low ranks up
// to full) and report the 0.9-quantile win rate per (method, rank),
// normalized to the online value at the same rank.
inline PresetResult run_preset_h5(const ExperimentSpec& base, const fs::path& out_dir,
                                  std::vector<int> ranks = {1, 2, 4, 0}, int n_seeds = 2,
                                  double q = 0.9) {
  Bench bench = build_bench(base);
  PresetResult result;

  for (int rank : ranks) {
    ExperimentSpec ranked = base;
    if (rank == 0) {
      ranked.policy.mode = PolicyMode::kFull;
    } else {
      ranked.policy.mode = PolicyMode::kLowRank;
      ranked.policy.rank = rank;
    }
    for (int s = 0; s < n_seeds; ++s) {
      std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
      ExperimentSpec online = ranked;
      online.train.sampling = SamplingMode::kOnline;
      online.train.seed = seed;
      std::string online_id = "online-rank" + std::to_string(rank) + "-seed" +
                              std::to_string(seed);
      ExperimentResult online_run =
          run_experiment_on_bench(bench, online, online_id, out_dir / "runs");
      auto online_points =
          tradeoff_points(online_run.record, "online", online_id, rank, bench.world_hash);
      result.points.insert(result.points.end(), online_points.begin(), online_points.end());

      ExperimentSpec offline = ranked;
      offline.train.sampling = SamplingMode::kOffline;
      offline.train.seed = seed;
      offline.recipe.kind = RecipeKind::kGolden;
      std::string offline_id = "offline-rank" + std::to_string(rank) + "-seed" +
                               std::to_string(seed);
      ExperimentResult offline_run =
          run_experiment_on_bench(bench, offline, offline_id, out_dir / "runs");
      auto offline_points =
          tradeoff_points(offline_run.record, "offline-golden", offline_id, rank,
                          bench.world_hash);
      result.points.insert(result.points.end(), offline_points.begin(), offline_points.end());

      ExperimentResult tandem_run = detail::run_offline_on_stream(
          bench, ranked, online_run.run_dir, 1.0, Rng::derive(seed, 17),
          "offline-shuffled-rank" + std::to_string(rank) + "-seed" + std::to_string(seed),
          out_dir / "runs");
      auto tandem_points = tradeoff_points(tandem_run.record, "offline-shuffled",
                                           tandem_run.record.run_id, rank, bench.world_hash);
      result.points.insert(result.points.end(), tandem_points.begin(), tandem_points.end());
    }
  }

  write_file(out_dir / "fig10_tradeoff.csv", pooled_csv(result.points));
  result.files_written.push_back(out_dir / "fig10_tradeoff.csv");

  // Best-by-rank table, normalized per rank to the online quantile.
  std::vector<ReportRow> rows = report_quantiles(result.points, q);
  std::map<int, double> online_best;
  for (const ReportRow& r : rows)
    if (r.method == "online") online_best[r.rank] = r.win_rate_quantile;
  CsvWriter csv({"method", "rank", "n_points", "win_rate_quantile", "normalized"});
  for (const ReportRow& r : rows) {
    double norm = online_best.count(r.rank) != 0 && online_best[r.rank] > 0.0
                      ? r.win_rate_quantile / online_best[r.rank]
                      : std::numeric_limits<double>::quiet_NaN();
    csv.add_row({r.method, CsvWriter::cell(r.rank), CsvWriter::cell(r.n_points),
                 CsvWriter::cell(r.win_rate_quantile), CsvWriter::cell(norm)});
  }
  write_file(out_dir / "fig9_best_by_rank.csv", csv.to_string());
  result.files_written.push_back(out_dir / "fig9_best_by_rank.csv");

  result.summary = json{{"preset", "H5"}, {"world_hash", bench.world_hash}, {"q", q}};
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

// Dataset ablation: golden baseline vs pairs generated by (sft, early), (early,
// final) and (final, final) checkpoints of one online run.
inline PresetResult run_ablation(const ExperimentSpec& base, const fs::path& out_dir,
                                 int n_seeds = 2) {
  Bench bench = build_bench(base);
  PresetResult result;

  ExperimentSpec online = base;
  online.train.sampling = SamplingMode::kOnline;
  ExperimentResult online_run =
      run_experiment_on_bench(bench, online, "online-generator", out_dir / "runs");

  int early_step = (base.train.steps / 5 / base.train.eval_cadence) * base.train.eval_cadence;
  if (early_step == 0) early_step = base.train.eval_cadence;
  int final_step = online_run.record.checkpoints.back().step;
  std::string run_dir = online_run.run_dir.string();
  std::string early_tag = "checkpoint:" + run_dir + ":" + std::to_string(early_step);
  std::string final_tag = "checkpoint:" + run_dir + ":" + std::to_string(final_step);

  struct Arm {
    std::string method;
    std::string gen_a, gen_b;
  };
  std::vector<Arm> arms = {{"offline-golden", "", ""},
                           {"offline-sft-vs-800", "sft", early_tag},
                           {"offline-800-vs-4k", early_tag, final_tag},
                           {"offline-4k-vs-4k", final_tag, final_tag}};

  for (const Arm& arm : arms) {
    for (int s = 0; s < n_seeds; ++s) {
      std::uint64_t seed = base.train.seed + static_cast<std::uint64_t>(s);
      ExperimentSpec spec = base;
      spec.train.sampling = SamplingMode::kOffline;
      spec.train.seed = seed;
      if (arm.gen_a.empty()) {
        spec.recipe.kind = RecipeKind::kGolden;
      } else {
        spec.recipe.kind = RecipeKind::kPolicyPair;
        spec.recipe.gen_a = arm.gen_a;
        spec.recipe.gen_b = arm.gen_b;
        spec.recipe.n_examples = base.data.n_golden;
        spec.recipe.label_mode = base.data.label_mode;
        spec.recipe.seed = Rng::derive(base.data.seed, 41 + static_cast<std::uint64_t>(s));
      }
      std::string run_id = arm.method + "-seed" + std::to_string(seed);
      ExperimentResult r = run_experiment_on_bench(bench, spec, run_id, out_dir / "runs");
      auto points = tradeoff_points(r.record, arm.method, run_id, 0, bench.world_hash);
      result.points.insert(result.points.end(), points.begin(), points.end());
    }
  }

  write_file(out_dir / "fig11_tradeoff.csv", pooled_csv(result.points));
  result.files_written.push_back(out_dir / "fig11_tradeoff.csv");
  result.summary = json{{"preset", "ablate"},
                        {"world_hash", bench.world_hash},
                        {"early_step", early_step},
                        {"final_step", final_step}};
  write_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
  result.files_written.push_back(out_dir / "summary.json");
  return result;
}

inline PresetResult run_preset(const std::string& id, const ExperimentSpec& base,
                               const fs::path& out_dir) {
  if (id == "H1") return run_preset_h1(base, out_dir);
  if (id == "H2") return run_preset_h2(base, out_dir);
  if (id == "H3") return run_preset_h3(base, out_dir);
  if (id == "H4") return run_preset_h4(base, out_dir);
  if (id == "H5") return run_preset_h5(base, out_dir);
  if (id == "ablate") return run_ablation(base, out_dir);
  throw ConfigError("unknown preset id: " + id + " (expected H1..H5 or ablate)");
}

}  // namespace preflab
