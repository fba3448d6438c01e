#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "preflab/errors.hpp"
#include "preflab/evaluate.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/proxy_training.hpp"
#include "preflab/serialize.hpp"
#include "preflab/train.hpp"

namespace preflab {

struct WorldSpec {
  int n_prompts = 64;
  int n_responses = 16;
  std::uint64_t seed = 1;
};

struct GoldenSpec {
  double utility_scale = 1.0;
  std::uint64_t seed = 2;
};

enum class SftKind { kUniform, kSeededGaussian, kFit };

// How the reference policy comes to exist. `fit` follows the full workflow:
// label an initial dataset sampled from a uniform behavior, then fit the
// smoothed frequency policy on both responses of every pair.
struct SftSpec {
  SftKind kind = SftKind::kFit;
  double scale = 0.5;        // seeded-gaussian logit scale
  std::uint64_t seed = 3;
  int n_initial = 512;       // fit: size of the initial dataset
  double alpha = 1.0;        // fit: smoothing
};

struct DataSpec {
  int n_golden = 1000;
  LabelMode label_mode = LabelMode::kBernoulli;
  std::uint64_t seed = 5;
};

struct PolicySpec {
  PolicyMode mode = PolicyMode::kFull;
  int rank = 4;              // low-rank only
  std::uint64_t seed = 6;    // low-rank init seed
};

enum class BaselineKind { kSft, kGoldenOptimal };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::kSft;
  double beta = 0.1;  // golden-optimal regularization
};

enum class RecipeKind { kGolden, kOnlineStream, kShuffled, kPolicyPair };

// Offline dataset recipe. Stream recipes read a previously written run
// directory; policy-pair generators name either the reference policy or a
// checkpoint of another run.
struct DatasetRecipe {
  RecipeKind kind = RecipeKind::kGolden;
  std::string source_run;    // run directory for stream/shuffled recipes
  double level = 1.0;        // shuffle level
  std::uint64_t seed = 8;
  std::string gen_a = "sft";  // "sft" or "checkpoint:<run-dir>:<step>"
  std::string gen_b = "sft";
  int n_examples = 1000;
  LabelMode label_mode = LabelMode::kBernoulli;
};

struct ExperimentSpec {
  WorldSpec world;
  GoldenSpec golden;
  SftSpec sft;
  ProxyTrainConfig proxy;
  DataSpec data;
  PolicySpec policy;
  TrainConfig train;
  EvalConfig eval;
  BaselineSpec baseline;
  DatasetRecipe recipe;
  std::string output_dir = "out";
};

inline LabelMode label_mode_from_name(const std::string& name) {
  if (name == "bernoulli") return LabelMode::kBernoulli;
  if (name == "argmax") return LabelMode::kArgmax;
  throw ConfigError("unknown label mode: " + name);
}

inline std::string label_mode_name(LabelMode m) {
  return m == LabelMode::kBernoulli ? "bernoulli" : "argmax";
}

inline json to_json(const WorldSpec& s) {
  return json{{"n_prompts", s.n_prompts}, {"n_responses", s.n_responses}, {"seed", s.seed}};
}

inline WorldSpec world_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"n_prompts", "n_responses", "seed"}, "world");
  WorldSpec s;
  if (j.contains("n_prompts")) s.n_prompts = j.at("n_prompts").get<int>();
  if (j.contains("n_responses")) s.n_responses = j.at("n_responses").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json to_json(const GoldenSpec& s) {
  return json{{"utility_scale", s.utility_scale}, {"seed", s.seed}};
}

inline GoldenSpec golden_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"utility_scale", "seed"}, "golden");
  GoldenSpec s;
  if (j.contains("utility_scale")) s.utility_scale = j.at("utility_scale").get<double>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json to_json(const SftSpec& s) {
  json j{{"seed", s.seed}};
  switch (s.kind) {
    case SftKind::kUniform:
      j["kind"] = "uniform";
      break;
    case SftKind::kSeededGaussian:
      j["kind"] = "seeded-gaussian";
      j["scale"] = s.scale;
      break;
    case SftKind::kFit:
      j["kind"] = "fit";
      j["n_initial"] = s.n_initial;
      j["alpha"] = s.alpha;
      break;
  }
  return j;
}

inline SftSpec sft_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "scale", "seed", "n_initial", "alpha"}, "sft");
  SftSpec s;
  if (j.contains("kind")) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform") s.kind = SftKind::kUniform;
    else if (kind == "seeded-gaussian") s.kind = SftKind::kSeededGaussian;
    else if (kind == "fit") s.kind = SftKind::kFit;
    else throw ConfigError("unknown sft kind: " + kind);
  }
  if (j.contains("scale")) s.scale = j.at("scale").get<double>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("n_initial")) s.n_initial = j.at("n_initial").get<int>();
  if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
  return s;
}

inline json to_json(const ProxyTrainConfig& c) {
  return json{{"mode", c.mode == ProxyMode::kPointwiseUtility ? "pointwise" : "pairwise"},
              {"learning_rate", c.learning_rate},
              {"steps", c.steps},
              {"l2", c.l2},
              {"seed", c.seed},
              {"minibatch_size", c.minibatch_size},
              {"param_cap", c.param_cap},
              {"trace_cadence", c.trace_cadence}};
}

inline ProxyTrainConfig proxy_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"mode", "learning_rate", "steps", "l2", "seed", "minibatch_size",
                       "param_cap", "trace_cadence"},
                      "proxy");
  ProxyTrainConfig c;
  if (j.contains("mode")) {
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "pointwise") c.mode = ProxyMode::kPointwiseUtility;
    else if (mode == "pairwise") c.mode = ProxyMode::kPairwiseTable;
    else throw ConfigError("unknown proxy mode: " + mode);
  }
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("l2")) c.l2 = j.at("l2").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("minibatch_size")) c.minibatch_size = j.at("minibatch_size").get<int>();
  if (j.contains("param_cap")) c.param_cap = j.at("param_cap").get<double>();
  if (j.contains("trace_cadence")) c.trace_cadence = j.at("trace_cadence").get<int>();
  return c;
}

inline json to_json(const DataSpec& s) {
  return json{{"n_golden", s.n_golden},
              {"label_mode", label_mode_name(s.label_mode)},
              {"seed", s.seed}};
}

inline DataSpec data_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"n_golden", "label_mode", "seed"}, "data");
  DataSpec s;
  if (j.contains("n_golden")) s.n_golden = j.at("n_golden").get<int>();
  if (j.contains("label_mode")) s.label_mode = label_mode_from_name(j.at("label_mode").get<std::string>());
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json to_json(const PolicySpec& s) {
  json j{{"mode", s.mode == PolicyMode::kFull ? "full" : "low-rank"}};
  if (s.mode == PolicyMode::kLowRank) {
    j["rank"] = s.rank;
    j["seed"] = s.seed;
  }
  return j;
}

inline PolicySpec policy_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"mode", "rank", "seed"}, "policy");
  PolicySpec s;
  if (j.contains("mode")) {
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "full") s.mode = PolicyMode::kFull;
    else if (mode == "low-rank") s.mode = PolicyMode::kLowRank;
    else throw ConfigError("unknown policy mode: " + mode);
  }
  if (j.contains("rank")) s.rank = j.at("rank").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline json to_json(const EvalConfig& c) {
  return json{{"n_eval_prompts", c.n_eval_prompts},
              {"win_mode", c.win_mode == WinMode::kSoft ? "soft" : "hard"},
              {"win_sampling", c.win_sampling == WinSampling::kExhaustive ? "exhaustive" : "sampled"},
              {"kl_mode", c.kl_mode == KlMode::kExact ? "exact" : "sampled"},
              {"seed", c.seed},
              {"cls_subsample", c.cls_subsample}};
}

inline EvalConfig eval_config_from_json(const json& j) {
  reject_unknown_keys(j, {"n_eval_prompts", "win_mode", "win_sampling", "kl_mode", "seed",
                          "cls_subsample"},
                      "eval");
  EvalConfig c;
  if (j.contains("n_eval_prompts")) c.n_eval_prompts = j.at("n_eval_prompts").get<int>();
  if (j.contains("win_mode")) {
    std::string m = j.at("win_mode").get<std::string>();
    if (m == "soft") c.win_mode = WinMode::kSoft;
    else if (m == "hard") c.win_mode = WinMode::kHard;
    else throw ConfigError("unknown win mode: " + m);
  }
  if (j.contains("win_sampling")) {
    std::string m = j.at("win_sampling").get<std::string>();
    if (m == "exhaustive") c.win_sampling = WinSampling::kExhaustive;
    else if (m == "sampled") c.win_sampling = WinSampling::kSampled;
    else throw ConfigError("unknown win sampling: " + m);
  }
  if (j.contains("kl_mode")) {
    std::string m = j.at("kl_mode").get<std::string>();
    if (m == "exact") c.kl_mode = KlMode::kExact;
    else if (m == "sampled") c.kl_mode = KlMode::kSampled;
    else throw ConfigError("unknown kl mode: " + m);
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("cls_subsample")) c.cls_subsample = j.at("cls_subsample").get<int>();
  c.validate();
  return c;
}

inline json to_json(const BaselineSpec& s) {
  json j{{"kind", s.kind == BaselineKind::kSft ? "sft" : "golden-optimal"}};
  if (s.kind == BaselineKind::kGoldenOptimal) j["beta"] = s.beta;
  return j;
}

inline BaselineSpec baseline_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "beta"}, "baseline");
  BaselineSpec s;
  if (j.contains("kind")) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "sft") s.kind = BaselineKind::kSft;
    else if (kind == "golden-optimal") s.kind = BaselineKind::kGoldenOptimal;
    else throw ConfigError("unknown baseline kind: " + kind);
  }
  if (j.contains("beta")) s.beta = j.at("beta").get<double>();
  return s;
}

inline json to_json(const DatasetRecipe& r) {
  json j;
  switch (r.kind) {
    case RecipeKind::kGolden:
      j["kind"] = "golden";
      break;
    case RecipeKind::kOnlineStream:
      j["kind"] = "online-stream";
      j["source_run"] = r.source_run;
      break;
    case RecipeKind::kShuffled:
      j["kind"] = "shuffled";
      j["source_run"] = r.source_run;
      j["level"] = r.level;
      j["seed"] = r.seed;
      break;
    case RecipeKind::kPolicyPair:
      j["kind"] = "policy-pair";
      j["gen_a"] = r.gen_a;
      j["gen_b"] = r.gen_b;
      j["n_examples"] = r.n_examples;
      j["label_mode"] = label_mode_name(r.label_mode);
      j["seed"] = r.seed;
      break;
  }
  return j;
}

inline DatasetRecipe recipe_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "source_run", "level", "seed", "gen_a", "gen_b", "n_examples",
                          "label_mode"},
                      "dataset_recipe");
  DatasetRecipe r;
  std::string kind = j.contains("kind") ? j.at("kind").get<std::string>() : "golden";
  if (kind == "golden") r.kind = RecipeKind::kGolden;
  else if (kind == "online-stream") r.kind = RecipeKind::kOnlineStream;
  else if (kind == "shuffled") r.kind = RecipeKind::kShuffled;
  else if (kind == "policy-pair") r.kind = RecipeKind::kPolicyPair;
  else throw ConfigError("unknown dataset recipe kind: " + kind);
  if (j.contains("source_run")) r.source_run = j.at("source_run").get<std::string>();
  if (j.contains("level")) r.level = j.at("level").get<double>();
  if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("gen_a")) r.gen_a = j.at("gen_a").get<std::string>();
  if (j.contains("gen_b")) r.gen_b = j.at("gen_b").get<std::string>();
  if (j.contains("n_examples")) r.n_examples = j.at("n_examples").get<int>();
  if (j.contains("label_mode")) r.label_mode = label_mode_from_name(j.at("label_mode").get<std::string>());
  return r;
}

inline json to_json(const ExperimentSpec& s) {
  return json{{"world", to_json(s.world)},
              {"golden", to_json(s.golden)},
              {"sft", to_json(s.sft)},
              {"proxy", to_json(s.proxy)},
              {"data", to_json(s.data)},
              {"policy", to_json(s.policy)},
              {"train", to_json(s.train)},
              {"eval", to_json(s.eval)},
              {"baseline", to_json(s.baseline)},
              {"dataset_recipe", to_json(s.recipe)},
              {"output_dir", s.output_dir}};
}

inline ExperimentSpec experiment_spec_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"world", "golden", "sft", "proxy", "data", "policy", "train", "eval",
                       "baseline", "dataset_recipe", "output_dir"},
                      "experiment");
  ExperimentSpec s;
  if (j.contains("world")) s.world = world_spec_from_json(j.at("world"));
  if (j.contains("golden")) s.golden = golden_spec_from_json(j.at("golden"));
  if (j.contains("sft")) s.sft = sft_spec_from_json(j.at("sft"));
  if (j.contains("proxy")) s.proxy = proxy_config_from_json(j.at("proxy"));
  if (j.contains("data")) s.data = data_spec_from_json(j.at("data"));
  if (j.contains("policy")) s.policy = policy_spec_from_json(j.at("policy"));
  if (j.contains("train")) {
    reject_unknown_keys(j.at("train"),
                        {"loss", "sampling", "learning_rate", "beta", "steps", "batch_size",
                         "seed", "eval_cadence", "optimizer"},
                        "train");
    s.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("eval")) s.eval = eval_config_from_json(j.at("eval"));
  if (j.contains("baseline")) s.baseline = baseline_spec_from_json(j.at("baseline"));
  if (j.contains("dataset_recipe")) s.recipe = recipe_from_json(j.at("dataset_recipe"));
  if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
  return s;
}

// Sweep grids over the hyper-parameters the offline ablations vary.
struct SweepSpec {
  ExperimentSpec base;
  std::vector<double> learning_rates;
  std::vector<double> betas;
  std::vector<int> steps;

  void validate() const {
    if (learning_rates.empty() || betas.empty() || steps.empty())
      throw ConfigError("SweepSpec: every grid must be non-empty");
  }
};

inline json to_json(const SweepSpec& s) {
  return json{{"base", to_json(s.base)},
              {"learning_rates", s.learning_rates},
              {"betas", s.betas},
              {"steps", s.steps}};
}

inline SweepSpec sweep_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"base", "learning_rates", "betas", "steps"}, "sweep");
  SweepSpec s;
  s.base = experiment_spec_from_json(j.at("base"));
  s.learning_rates = j.contains("learning_rates")
                         ? j.at("learning_rates").get<std::vector<double>>()
                         : std::vector<double>{s.base.train.learning_rate};
  s.betas = j.contains("betas") ? j.at("betas").get<std::vector<double>>()
                                : std::vector<double>{s.base.train.beta};
  s.steps = j.contains("steps") ? j.at("steps").get<std::vector<int>>()
                                : std::vector<int>{s.base.train.steps};
  s.validate();
  return s;
}

}  // namespace preflab
