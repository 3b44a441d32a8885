#include "commands.hpp"
#include "config.hpp"
#include "output.hpp"

#include "lemmse/error.hpp"
#include "lemmse/version.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <functional>
#include <iostream>

using namespace lemmse;
using namespace lemmse::cli;

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 bad arguments or config, 3 file I/O,
// 4 any other library error.
int exit_code(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidConfig:
  case ErrorCode::InvalidArgument: return 2;
  case ErrorCode::UnreadableFile:
  case ErrorCode::UnsupportedBitDepth:
  case ErrorCode::MixedShapes: return 3;
  default: return 4;
  }
}

void setup_logging() {
  auto logger = std::make_shared<spdlog::logger>("lemmse", std::make_shared<spdlog::sinks::stderr_sink_mt>());
  logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
  logger->set_level(spdlog::level::info);
  if (const char *env = std::getenv("LEMMSE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour "off" when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") {
      logger->set_level(level);
    }
  }
  spdlog::set_default_logger(logger);
}

// Flags that were given on the command line, applied over the config file.
struct Overrides {
  std::string config_path;
  std::vector<std::pair<CLI::Option *, std::function<void(ExperimentConfig &)>>> setters;

  void apply(ExperimentConfig &c) const {
    for (const auto &[opt, set] : setters) {
      if (opt->count() > 0) {
        set(c);
      }
    }
  }
};

struct Values {
  std::string task, pre_inverse, estimator, dataset, output, query_source;
  Index mask_side = 0, patch_side = 0, mc_samples = 0, top_k = 0, threads = 0, queries = 0;
  double blur_std = 0, tikhonov_lambda = 0, sigma = 0, epsilon = 0;
  std::vector<double> sigma_list;
  std::vector<std::string> input;
  std::uint64_t seed = 0;
  std::size_t memory_budget_mib = 0;
  bool deterministic = true, csv = false;
};

void add_flags(CLI::App *sub, Values &v, Overrides &o) {
  sub->add_option("--config", o.config_path, "JSON config file; flags override its keys");
  auto add = [&](CLI::Option *opt, std::function<void(ExperimentConfig &)> set) { o.setters.emplace_back(opt, std::move(set)); };
  add(sub->add_option("--task", v.task, "denoise | inpaint | deconv"), [&](auto &c) { c.task = v.task; });
  add(sub->add_option("--mask-side", v.mask_side, "side of the centered inpainting hole"), [&](auto &c) { c.mask_side = v.mask_side; });
  add(sub->add_option("--blur-std", v.blur_std, "std of the periodic Gaussian blur"), [&](auto &c) { c.blur_std = v.blur_std; });
  add(sub->add_option("--pre-inverse", v.pre_inverse, "identity | pinv | tikhonov"), [&](auto &c) { c.pre_inverse = v.pre_inverse; });
  add(sub->add_option("--tikhonov-lambda", v.tikhonov_lambda, "Tikhonov regularization"),
      [&](auto &c) { c.tikhonov_lambda = v.tikhonov_lambda; });
  add(sub->add_option("--estimator", v.estimator, "mmse | aug-mmse | emmse | lemmse | lemmse-smooth"),
      [&](auto &c) { c.estimator = v.estimator; });
  add(sub->add_option("--patch-side", v.patch_side, "odd patch side"), [&](auto &c) { c.patch_side = v.patch_side; });
  add(sub->add_option("--sigma", v.sigma, "noise std"), [&](auto &c) { c.sigma = v.sigma; });
  add(sub->add_option("--sigma-list", v.sigma_list, "comma separated noise levels (sweep)")->delimiter(','),
      [&](auto &c) { c.sigma_list = v.sigma_list; });
  add(sub->add_option("--dataset", v.dataset, "PNG directory, PNG file or NPY tensor"), [&](auto &c) { c.dataset = v.dataset; });
  add(sub->add_option("--input", v.input, "query images (repeatable; directories expand)"), [&](auto &c) { c.input = v.input; });
  add(sub->add_option("--output", v.output, "output directory"), [&](auto &c) { c.output = v.output; });
  add(sub->add_option("--query-source", v.query_source, "file | synthetic | held-out"), [&](auto &c) {
    nlohmann::json j = {{"query_source", v.query_source}};
    c.query_source = config_from_json(j).query_source;
  });
  add(sub->add_option("--queries", v.queries, "number of queries"), [&](auto &c) { c.queries = v.queries; });
  add(sub->add_option("--seed", v.seed, "base seed"), [&](auto &c) { c.seed = v.seed; });
  add(sub->add_option("--epsilon", v.epsilon, "smoothing scale (lemmse-smooth) or oracle epsilon"),
      [&](auto &c) { c.epsilon = v.epsilon; });
  add(sub->add_option("--mc-samples", v.mc_samples, "Monte-Carlo samples for lemmse-smooth"),
      [&](auto &c) { c.mc_samples = v.mc_samples; });
  add(sub->add_option("--top-k", v.top_k, "weights kept per output (-1 all, 0 none)"), [&](auto &c) { c.top_k = v.top_k; });
  add(sub->add_flag("--deterministic,!--no-deterministic", v.deterministic, "fixed-order reductions"),
      [&](auto &c) { c.deterministic = v.deterministic; });
  add(sub->add_option("--threads", v.threads, "worker threads (0 = hardware)"), [&](auto &c) { c.threads = v.threads; });
  add(sub->add_option("--memory-budget-mib", v.memory_budget_mib, "memory budget in MiB"),
      [&](auto &c) { c.memory_budget_mib = v.memory_budget_mib; });
  add(sub->add_flag("--csv", v.csv, "also write per-pixel CSV tables"), [&](auto &c) { c.csv = v.csv; });
}

int fail(const std::string &code, const std::string &message, int status, const std::string &output_dir) {
  const auto j = error_json(code, message);
  std::cout << j.dump() << std::endl;
  spdlog::error("{}", message);
  if (!output_dir.empty()) {
    std::error_code ec;
    fs::create_directories(output_dir, ec);
    if (!ec) {
      try {
        write_json(fs::path(output_dir) / "error.json", j);
      } catch (...) {
      }
    }
  }
  return status;
}

} // namespace

int main(int argc, char **argv) {
  setup_logging();

  CLI::App app{"Patch-local posterior mean estimators for linear inverse problems"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Values values;
  struct Sub {
    Command cmd;
    CLI::App *app;
    Overrides overrides;
  };
  std::vector<Sub> subs;
  subs.reserve(5);
  const std::pair<Command, const char *> table[] = {
      {Command::Estimate, "reconstruct query images"},
      {Command::Diagnose, "density, mass and patchwork maps for the patch estimators"},
      {Command::Oracle, "compare the fast estimators with dense reference formulas on a small grid"},
      {Command::Compare, "PSNR between estimates (--input) and references (--dataset)"},
      {Command::Sweep, "estimate over a list of noise levels, one subdirectory per sigma"},
  };
  for (const auto &[cmd, help] : table) {
    subs.push_back({cmd, app.add_subcommand(to_string(cmd), help), {}});
  }
  for (auto &s : subs) {
    add_flags(s.app, values, s.overrides);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail("invalid_argument", e.what(), 2, "");
  }

  const Sub *active = nullptr;
  for (const auto &s : subs) {
    if (s.app->parsed()) {
      active = &s;
    }
  }

  std::string output_dir;
  try {
    ExperimentConfig config;
    if (!active->overrides.config_path.empty()) {
      config = load_config(active->overrides.config_path);
    }
    active->overrides.apply(config);
    output_dir = config.output;
    validate(config, active->cmd);
    spdlog::debug("config {}", to_json(config).dump());

    switch (active->cmd) {
    case Command::Estimate: run_estimate(config); break;
    case Command::Diagnose: run_diagnose(config); break;
    case Command::Oracle: run_oracle(config); break;
    case Command::Compare: run_compare(config); break;
    case Command::Sweep: run_sweep(config); break;
    }
  } catch (const Error &e) {
    const std::string code(to_string(e.code()));
    std::string message = e.what();
    if (message.rfind(code + ": ", 0) == 0) {
      message.erase(0, code.size() + 2);
    }
    return fail(code, message, exit_code(e.code()), output_dir);
  } catch (const std::bad_alloc &) {
    return fail("out_of_memory", "allocation failed; lower --memory-budget-mib or the problem size", 4, output_dir);
  } catch (const std::exception &e) {
    return fail("internal", e.what(), 1, output_dir);
  }
  return 0;
}
