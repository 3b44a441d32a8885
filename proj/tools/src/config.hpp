#pragma once

#include "lemmse/estimators.hpp"
#include "lemmse/operators.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lemmse::cli {

enum class Command { Estimate, Diagnose, Oracle, Compare, Sweep };
std::string to_string(Command c);

enum class QuerySource { File, Synthetic, HeldOut };
std::string to_string(QuerySource q);

/// Everything a run needs. Loaded from a JSON file, then overridden by flags.
/// Keys match the flag names with '-' replaced by '_'.
struct ExperimentConfig {
  std::string task = "denoise"; ///< denoise | inpaint | deconv
  std::optional<Index> mask_side;
  std::optional<double> blur_std;
  std::string pre_inverse = "identity"; ///< identity | pinv | tikhonov
  std::optional<double> tikhonov_lambda;
  std::string estimator = "lemmse";
  std::optional<Index> patch_side;
  std::optional<double> sigma;
  std::vector<double> sigma_list;
  std::string dataset;
  std::vector<std::string> input;
  std::string output;
  std::optional<QuerySource> query_source; ///< default: synthetic with --input, held-out without
  std::optional<Index> queries;            ///< held-out count; 1 for estimate, 50 per sigma for sweep
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  Index mc_samples = 8;
  Index top_k = 64;
  bool deterministic = true;
  int threads = 0;
  std::size_t memory_budget_mib = 4096;
  std::vector<double> oracle_epsilons = {1e-2, 1e-3, 1e-4};
  bool csv = false; ///< per-pixel CSV tables next to estimate outputs
};

ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const ExperimentConfig &c);
ExperimentConfig load_config(const std::string &path);

/// Shape-independent checks, run before any file is read. Throws InvalidConfig.
void validate(const ExperimentConfig &c, Command cmd);

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const ExperimentConfig &c);

EstimatorConfig estimator_config(const ExperimentConfig &c);
EstimatorOptions estimator_options(const ExperimentConfig &c);
PreInverseKind pre_inverse_kind(const ExperimentConfig &c);
LinearOperator make_operator(const ExperimentConfig &c, Index height, Index width);

} // namespace lemmse::cli
