#include "config.hpp"

#include "lemmse/error.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lemmse::cli {

namespace {

[[noreturn]] void bad(const std::string &msg) { throw Error(ErrorCode::InvalidConfig, msg); }

template <class T> T get(const nlohmann::json &j, const char *key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception &) {
    bad(std::string("config key '") + key + "' has the wrong type");
  }
}

QuerySource parse_query_source(const std::string &s) {
  if (s == "file") {
    return QuerySource::File;
  }
  if (s == "synthetic") {
    return QuerySource::Synthetic;
  }
  if (s == "held-out") {
    return QuerySource::HeldOut;
  }
  bad("query_source must be file, synthetic or held-out, got '" + s + "'");
}

const std::set<std::string> kKeys = {
    "task",   "mask_side",    "blur_std", "pre_inverse", "tikhonov_lambda", "estimator",         "patch_side",
    "sigma",  "sigma_list",   "dataset",  "input",       "output",          "query_source",      "queries",
    "seed",   "epsilon",      "mc_samples", "top_k",     "deterministic",   "threads",           "memory_budget_mib",
    "oracle_epsilons", "csv"};

} // namespace

std::string to_string(Command c) {
  switch (c) {
  case Command::Estimate: return "estimate";
  case Command::Diagnose: return "diagnose";
  case Command::Oracle: return "oracle";
  case Command::Compare: return "compare";
  case Command::Sweep: return "sweep";
  }
  return "?";
}

std::string to_string(QuerySource q) {
  switch (q) {
  case QuerySource::File: return "file";
  case QuerySource::Synthetic: return "synthetic";
  case QuerySource::HeldOut: return "held-out";
  }
  return "?";
}

ExperimentConfig config_from_json(const nlohmann::json &j) {
  if (!j.is_object()) {
    bad("config must be a JSON object");
  }
  for (const auto &[key, _] : j.items()) {
    if (!kKeys.count(key)) {
      bad("unknown config key '" + key + "'");
    }
  }
  ExperimentConfig c;
  auto take = [&](const char *key, auto &field) {
    if (j.contains(key) && !j.at(key).is_null()) {
      using T = std::decay_t<decltype(field)>;
      field = get<T>(j.at(key), key);
    }
  };
  auto take_opt = [&](const char *key, auto &field) {
    if (j.contains(key) && !j.at(key).is_null()) {
      using T = typename std::decay_t<decltype(field)>::value_type;
      field = get<T>(j.at(key), key);
    }
  };
  take("task", c.task);
  take_opt("mask_side", c.mask_side);
  take_opt("blur_std", c.blur_std);
  take("pre_inverse", c.pre_inverse);
  take_opt("tikhonov_lambda", c.tikhonov_lambda);
  take("estimator", c.estimator);
  take_opt("patch_side", c.patch_side);
  take_opt("sigma", c.sigma);
  take("sigma_list", c.sigma_list);
  take("dataset", c.dataset);
  if (j.contains("input")) {
    if (j.at("input").is_string()) {
      c.input = {j.at("input").get<std::string>()};
    } else {
      take("input", c.input);
    }
  }
  take("output", c.output);
  if (j.contains("query_source") && !j.at("query_source").is_null()) {
    c.query_source = parse_query_source(get<std::string>(j.at("query_source"), "query_source"));
  }
  take_opt("queries", c.queries);
  take("seed", c.seed);
  take_opt("epsilon", c.epsilon);
  take("mc_samples", c.mc_samples);
  take("top_k", c.top_k);
  take("deterministic", c.deterministic);
  take("threads", c.threads);
  take("memory_budget_mib", c.memory_budget_mib);
  take("oracle_epsilons", c.oracle_epsilons);
  take("csv", c.csv);
  return c;
}

nlohmann::json to_json(const ExperimentConfig &c) {
  nlohmann::json j;
  auto opt = [](const auto &o) -> nlohmann::json { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  j["task"] = c.task;
  j["mask_side"] = opt(c.mask_side);
  j["blur_std"] = opt(c.blur_std);
  j["pre_inverse"] = c.pre_inverse;
  j["tikhonov_lambda"] = opt(c.tikhonov_lambda);
  j["estimator"] = c.estimator;
  j["patch_side"] = opt(c.patch_side);
  j["sigma"] = opt(c.sigma);
  j["sigma_list"] = c.sigma_list;
  j["dataset"] = c.dataset;
  j["input"] = c.input;
  j["output"] = c.output;
  j["query_source"] = c.query_source ? nlohmann::json(to_string(*c.query_source)) : nlohmann::json(nullptr);
  j["queries"] = opt(c.queries);
  j["seed"] = c.seed;
  j["epsilon"] = opt(c.epsilon);
  j["mc_samples"] = c.mc_samples;
  j["top_k"] = c.top_k;
  j["deterministic"] = c.deterministic;
  j["threads"] = c.threads;
  j["memory_budget_mib"] = c.memory_budget_mib;
  j["oracle_epsilons"] = c.oracle_epsilons;
  j["csv"] = c.csv;
  return j;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::UnreadableFile, "cannot open config '" + path + "'");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error &e) {
    bad("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void validate(const ExperimentConfig &c, Command cmd) {
  if (cmd == Command::Compare) {
    if (c.input.empty() || c.dataset.empty()) {
      bad("compare needs --input (estimates) and --dataset (references)");
    }
    return;
  }
  if (c.task == "inpaint") {
    if (!c.mask_side || *c.mask_side < 0) {
      bad("inpaint needs --mask-side >= 0");
    }
  } else if (c.task == "deconv") {
    if (!c.blur_std || !(*c.blur_std > 0.0) || !std::isfinite(*c.blur_std)) {
      bad("deconv needs --blur-std > 0");
    }
  } else if (c.task != "denoise") {
    bad("task must be denoise, inpaint or deconv, got '" + c.task + "'");
  }
  if (c.mask_side && c.task != "inpaint") {
    bad("--mask-side only applies to inpaint");
  }
  if (c.blur_std && c.task != "deconv") {
    bad("--blur-std only applies to deconv");
  }

  if (c.pre_inverse != "identity" && c.pre_inverse != "pinv" && c.pre_inverse != "tikhonov") {
    bad("pre-inverse must be identity, pinv or tikhonov, got '" + c.pre_inverse + "'");
  }
  if (c.pre_inverse == "tikhonov" && (!c.tikhonov_lambda || !(*c.tikhonov_lambda > 0.0))) {
    bad("tikhonov needs --tikhonov-lambda > 0");
  }
  if (c.tikhonov_lambda && c.pre_inverse != "tikhonov") {
    bad("--tikhonov-lambda only applies to the tikhonov pre-inverse");
  }

  EstimatorKind kind;
  try {
    kind = parse_estimator(c.estimator);
  } catch (const Error &) {
    bad("estimator must be mmse, aug-mmse, emmse, lemmse or lemmse-smooth, got '" + c.estimator + "'");
  }
  const bool patch = is_patch_estimator(kind);
  if (cmd == Command::Diagnose && !patch) {
    bad("diagnose works on the patch estimators (lemmse, lemmse-smooth)");
  }
  if (patch && cmd != Command::Oracle) {
    if (!c.patch_side) {
      bad("estimator '" + c.estimator + "' needs --patch-side");
    }
  }
  if (!patch && c.patch_side && cmd != Command::Oracle) {
    bad("--patch-side only applies to lemmse and lemmse-smooth");
  }
  if (c.patch_side && (*c.patch_side < 1 || *c.patch_side % 2 == 0)) {
    bad("--patch-side must be a positive odd integer");
  }
  if (kind == EstimatorKind::SmoothedLeMmse) {
    if (!c.epsilon || !(*c.epsilon >= 0.0)) {
      bad("lemmse-smooth needs --epsilon >= 0");
    }
    if (c.mc_samples < 1) {
      bad("--mc-samples must be >= 1");
    }
  } else if (c.epsilon && cmd != Command::Oracle) {
    bad("--epsilon only applies to lemmse-smooth (and to oracle)");
  }

  if (cmd == Command::Sweep) {
    if (c.sigma_list.empty()) {
      bad("sweep needs --sigma-list");
    }
    if (c.sigma) {
      bad("sweep takes --sigma-list, not --sigma");
    }
    for (double s : c.sigma_list) {
      if (!(s >= 0.0) || !std::isfinite(s)) {
        bad("every sigma in --sigma-list must be >= 0");
      }
    }
  } else {
    if (!c.sigma || !(*c.sigma >= 0.0) || !std::isfinite(*c.sigma)) {
      bad(to_string(cmd) + " needs --sigma >= 0");
    }
    if (!c.sigma_list.empty()) {
      bad("--sigma-list is for sweep; use --sigma");
    }
  }
  if (cmd == Command::Oracle) {
    for (double e : c.oracle_epsilons) {
      if (!(e > 0.0)) {
        bad("oracle epsilons must be positive");
      }
    }
    if (c.epsilon && !(*c.epsilon > 0.0)) {
      bad("oracle --epsilon must be positive");
    }
  }

  if (c.dataset.empty()) {
    bad("--dataset is required");
  }
  if (c.output.empty() && cmd != Command::Oracle) {
    bad("--output is required");
  }
  const QuerySource q = c.query_source.value_or(c.input.empty() ? QuerySource::HeldOut : QuerySource::Synthetic);
  if (q != QuerySource::HeldOut && c.input.empty()) {
    bad("query source '" + to_string(q) + "' needs --input");
  }
  if (q == QuerySource::HeldOut && !c.input.empty()) {
    bad("held-out queries come from the dataset; drop --input");
  }
  if (c.queries && *c.queries < 1) {
    bad("queries must be >= 1");
  }
  if (c.top_k < kFullRetention) {
    bad("--top-k must be >= -1 (-1 keeps every component)");
  }
  if (c.threads < 0) {
    bad("--threads must be >= 0 (0 uses every hardware thread)");
  }
  if (c.memory_budget_mib == 0) {
    bad("--memory-budget-mib must be positive");
  }
}

std::string config_hash(const ExperimentConfig &c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

EstimatorConfig estimator_config(const ExperimentConfig &c) {
  EstimatorConfig e;
  e.kind = parse_estimator(c.estimator);
  e.patch_side = c.patch_side.value_or(0);
  e.epsilon = c.epsilon.value_or(0.0);
  e.samples = c.mc_samples;
  e.seed = c.seed;
  return e;
}

EstimatorOptions estimator_options(const ExperimentConfig &c) {
  EstimatorOptions o;
  o.threads = c.threads;
  o.top_k = c.top_k;
  o.deterministic = c.deterministic;
  o.memory_budget_bytes = c.memory_budget_mib << 20;
  return o;
}

PreInverseKind pre_inverse_kind(const ExperimentConfig &c) {
  if (c.pre_inverse == "pinv") {
    return PreInverseKind::PseudoInverse;
  }
  if (c.pre_inverse == "tikhonov") {
    return PreInverseKind::Tikhonov;
  }
  return PreInverseKind::Identity;
}

LinearOperator make_operator(const ExperimentConfig &c, Index height, Index width) {
  if (c.task == "inpaint") {
    return make_center_mask(height, width, *c.mask_side);
  }
  if (c.task == "deconv") {
    return make_gaussian_blur(height, width, *c.blur_std);
  }
  return make_denoising(height, width);
}

} // namespace lemmse::cli
