#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "preflab/csv.hpp"
#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/train.hpp"
#include "preflab/world.hpp"

// JSON records for every persistent type. nlohmann::json keeps object keys
// sorted and emits shortest round-trip doubles, so dumps are byte-stable for
// identical content.

namespace preflab {

using json = nlohmann::json;

// Unknown keys are configuration errors: silent config drift would invalidate
// every reproducibility claim the harness makes.
inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items())
    if (!allowed.contains(item.key()))
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

inline json to_json(const World& world) {
  return json{{"n_prompts", world.n_prompts},
              {"n_responses", world.n_responses},
              {"prompt_dist", world.prompt_dist},
              {"seed", world.seed}};
}

inline World world_from_json(const json& j) {
  return World(j.at("n_prompts").get<int>(), j.at("n_responses").get<int>(),
               j.at("prompt_dist").get<std::vector<double>>(), j.at("seed").get<std::uint64_t>());
}

inline json to_json(const TabularPolicy& policy) {
  json j{{"mode", policy.mode() == PolicyMode::kFull ? "full" : "low-rank"},
         {"n_prompts", policy.n_prompts()},
         {"n_responses", policy.n_responses()},
         {"params", std::vector<double>(policy.params().begin(), policy.params().end())}};
  if (policy.mode() == PolicyMode::kLowRank) j["rank"] = policy.rank();
  return j;
}

inline TabularPolicy policy_from_json(const json& j) {
  int n_prompts = j.at("n_prompts").get<int>();
  int n_responses = j.at("n_responses").get<int>();
  std::vector<double> params = j.at("params").get<std::vector<double>>();
  if (j.at("mode").get<std::string>() == "full") {
    Matrix logits(n_prompts, n_responses);
    logits.data = std::move(params);
    return TabularPolicy::full(std::move(logits));
  }
  int rank = j.at("rank").get<int>();
  Matrix a(n_prompts, rank), b(rank, n_responses);
  std::copy(params.begin(), params.begin() + a.data.size(), a.data.begin());
  std::copy(params.begin() + a.data.size(), params.end(), b.data.begin());
  return TabularPolicy::low_rank(std::move(a), std::move(b));
}

inline json to_json(const ReferencePolicy& ref) {
  return json{{"n_prompts", ref.n_prompts()},
              {"n_responses", ref.n_responses()},
              {"probs", ref.probs().data}};
}

inline ReferencePolicy reference_from_json(const json& j) {
  Matrix probs(j.at("n_prompts").get<int>(), j.at("n_responses").get<int>());
  probs.data = j.at("probs").get<std::vector<double>>();
  return ReferencePolicy(std::move(probs));
}

inline json to_json(const GoldenPreferenceModel& gm) {
  return json{{"link", "logistic"},
              {"n_prompts", gm.n_prompts()},
              {"n_responses", gm.n_responses()},
              {"utilities", gm.utilities().data}};
}

inline GoldenPreferenceModel golden_from_json(const json& j) {
  Matrix u(j.at("n_prompts").get<int>(), j.at("n_responses").get<int>());
  u.data = j.at("utilities").get<std::vector<double>>();
  return GoldenPreferenceModel(std::move(u));
}

inline json to_json(const ProxyPreferenceModel& pm) {
  return json{{"mode", pm.mode() == ProxyMode::kPointwiseUtility ? "pointwise-utility"
                                                                 : "pairwise-table"},
              {"n_prompts", pm.n_prompts()},
              {"n_responses", pm.n_responses()},
              {"position_bias", pm.position_bias()},
              {"params", std::vector<double>(pm.table().begin(), pm.table().end())}};
}

inline ProxyPreferenceModel proxy_from_json(const json& j) {
  ProxyMode mode = j.at("mode").get<std::string>() == "pointwise-utility"
                       ? ProxyMode::kPointwiseUtility
                       : ProxyMode::kPairwiseTable;
  ProxyPreferenceModel pm(mode, j.at("n_prompts").get<int>(), j.at("n_responses").get<int>());
  std::vector<double> params = j.at("params").get<std::vector<double>>();
  if (params.size() != pm.table().size()) throw InputError("proxy_from_json: size mismatch");
  std::copy(params.begin(), params.end(), pm.table().begin());
  pm.set_position_bias(j.at("position_bias").get<double>());
  return pm;
}

inline json to_json(const Provenance& p) {
  json j{{"kind", provenance_kind_name(p.kind)}};
  if (!p.run_id.empty()) j["run_id"] = p.run_id;
  if (p.kind == ProvenanceKind::kShuffled) {
    j["level"] = p.shuffle_level;
    j["seed"] = p.seed;
  }
  if (!p.gen_a.empty()) j["gen_a"] = p.gen_a;
  if (!p.gen_b.empty()) j["gen_b"] = p.gen_b;
  return j;
}

inline Provenance provenance_from_json(const json& j) {
  Provenance p;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "golden") p.kind = ProvenanceKind::kGolden;
  else if (kind == "online-stream") p.kind = ProvenanceKind::kOnlineStream;
  else if (kind == "shuffled") p.kind = ProvenanceKind::kShuffled;
  else if (kind == "policy-pair") p.kind = ProvenanceKind::kPolicyPair;
  else throw InputError("unknown provenance kind: " + kind);
  if (j.contains("run_id")) p.run_id = j.at("run_id").get<std::string>();
  if (j.contains("level")) p.shuffle_level = j.at("level").get<double>();
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("gen_a")) p.gen_a = j.at("gen_a").get<std::string>();
  if (j.contains("gen_b")) p.gen_b = j.at("gen_b").get<std::string>();
  return p;
}

// Dataset files are line-delimited: a JSON metadata header, then one
// [x, y_w, y_l, margin, batch_index] record per example. Order in the file is
// the dataset order.
inline std::string dataset_to_jsonl(const PreferenceDataset& ds) {
  std::string out;
  json header{{"provenance", to_json(ds.provenance)},
              {"n_examples", ds.examples.size()}};
  if (!ds.batch_sizes.empty()) header["batch_sizes"] = ds.batch_sizes;
  out += header.dump();
  out += '\n';
  std::vector<int> batch_of(ds.examples.size(), -1);
  if (!ds.batch_sizes.empty()) {
    std::size_t idx = 0;
    for (std::size_t b = 0; b < ds.batch_sizes.size(); ++b)
      for (int i = 0; i < ds.batch_sizes[b]; ++i) batch_of[idx++] = static_cast<int>(b);
  }
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const LabeledExample& ex = ds.examples[i];
    json rec = json::array({ex.prompt, ex.winner, ex.loser, ex.margin, batch_of[i]});
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline PreferenceDataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("dataset_from_jsonl: empty input");
  json header = json::parse(line);
  PreferenceDataset ds;
  ds.provenance = provenance_from_json(header.at("provenance"));
  if (header.contains("batch_sizes")) ds.batch_sizes = header.at("batch_sizes").get<std::vector<int>>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    ds.examples.push_back({rec.at(0).get<int>(), rec.at(1).get<int>(), rec.at(2).get<int>(),
                           rec.at(3).get<double>()});
  }
  if (ds.examples.size() != header.at("n_examples").get<std::size_t>())
    throw InputError("dataset_from_jsonl: example count mismatch");
  ds.validate();
  return ds;
}

inline json to_json(const OptimizerConfig& c) {
  json j{{"kind", c.kind == OptimizerKind::kSgd ? "sgd" : "adam"}};
  if (c.kind == OptimizerKind::kAdam) {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
  }
  return j;
}

inline OptimizerConfig optimizer_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "beta1", "beta2", "eps"}, "optimizer");
  OptimizerConfig c;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "sgd") {
    c.kind = OptimizerKind::kSgd;
  } else if (kind == "adam") {
    c.kind = OptimizerKind::kAdam;
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  } else {
    throw ConfigError("unknown optimizer kind: " + kind);
  }
  return c;
}

inline json to_json(const TrainConfig& c) {
  return json{{"loss", loss_kind_name(c.loss)},
              {"sampling", c.sampling == SamplingMode::kOnline ? "online" : "offline"},
              {"learning_rate", c.learning_rate},
              {"beta", c.beta},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"eval_cadence", c.eval_cadence},
              {"optimizer", to_json(c.optimizer)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("loss")) c.loss = loss_kind_from_name(j.at("loss").get<std::string>());
  if (j.contains("sampling")) {
    std::string sampling = j.at("sampling").get<std::string>();
    if (sampling == "online") c.sampling = SamplingMode::kOnline;
    else if (sampling == "offline") c.sampling = SamplingMode::kOffline;
    else throw ConfigError("unknown sampling mode: " + sampling);
  }
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("eval_cadence")) c.eval_cadence = j.at("eval_cadence").get<int>();
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  c.validate();
  return c;
}

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  CsvWriter csv({"step", "loss", "kl", "win_rate", "cls_acc", "win_logprob_delta", "mean_margin",
                 "epoch"});
  for (const MetricsRow& r : rows)
    csv.add_row({CsvWriter::cell(r.step), CsvWriter::cell(r.loss), CsvWriter::cell(r.kl),
                 CsvWriter::cell(r.win_rate), CsvWriter::cell(r.cls_acc),
                 CsvWriter::cell(r.win_logprob_delta), CsvWriter::cell(r.mean_margin),
                 CsvWriter::cell(r.epoch)});
  return csv.to_string();
}

inline std::string stream_to_jsonl(const std::vector<RecordedBatch>& stream) {
  std::string out;
  for (const RecordedBatch& batch : stream) {
    json examples = json::array();
    for (const LabeledExample& ex : batch.examples)
      examples.push_back(json::array({ex.prompt, ex.winner, ex.loser, ex.margin}));
    json line{{"step", batch.step}, {"examples", examples}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<RecordedBatch> stream_from_jsonl(const std::string& text) {
  std::vector<RecordedBatch> stream;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    RecordedBatch batch;
    batch.step = j.at("step").get<int>();
    for (const json& rec : j.at("examples"))
      batch.examples.push_back({rec.at(0).get<int>(), rec.at(1).get<int>(), rec.at(2).get<int>(),
                                rec.at(3).get<double>()});
    stream.push_back(std::move(batch));
  }
  return stream;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConstructionError("cannot open " + path.string() + " for writing");
  f << content;
}

// RunRecord persists as a directory: config.json, metrics.csv, stream.jsonl
// (online runs), checkpoints.jsonl.
inline void write_run_record(const std::filesystem::path& dir, const RunRecord& record) {
  std::filesystem::create_directories(dir);
  json config{{"run_id", record.run_id},
              {"train", to_json(record.config)},
              {"degenerate_pairs", record.degenerate_pairs},
              {"skipped_steps", record.skipped_steps},
              {"final_epoch", record.final_epoch}};
  write_file(dir / "config.json", config.dump(2) + "\n");
  write_file(dir / "metrics.csv", metrics_to_csv(record.metrics));
  if (!record.stream.empty()) write_file(dir / "stream.jsonl", stream_to_jsonl(record.stream));
  std::string checkpoints;
  for (const Checkpoint& c : record.checkpoints) {
    json line{{"step", c.step}, {"params", c.params}};
    checkpoints += line.dump();
    checkpoints += '\n';
  }
  write_file(dir / "checkpoints.jsonl", checkpoints);
}

inline std::uint64_t json_fingerprint(const json& j) {
  std::string s = j.dump();
  return fnv1a(std::span<const char>(s.data(), s.size()));
}

}  // namespace preflab
