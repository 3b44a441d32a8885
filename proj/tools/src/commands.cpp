#include "commands.hpp"

#include "output.hpp"

#include "lemmse/diagnostics.hpp"
#include "lemmse/error.hpp"
#include "lemmse/io.hpp"
#include "lemmse/oracle.hpp"
#include "lemmse/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

namespace lemmse::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// JSON has no NaN/inf; write null instead.
nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

struct Query {
  std::string source;
  std::optional<ImageGrid> clean;
  ImageGrid y;
  std::optional<std::uint64_t> noise_seed;
  std::uint64_t smoothing_seed = 0;
};

// Dataset, operators and the clean or measured query images. Not movable:
// LeMmseEngine keeps references into it.
struct Workspace {
  Dataset dataset;
  std::vector<std::string> dataset_files;
  std::vector<std::string> input_files;
  QuerySource source = QuerySource::HeldOut;
  std::vector<std::pair<std::string, ImageGrid>> images; ///< clean (synthetic / held-out) or measured (file)
  std::unique_ptr<LinearOperator> A;
  std::unique_ptr<PreInverse> B;

  Index height() const { return dataset.shape().height; }
  Index width() const { return dataset.shape().width; }
  Index pixels() const { return height() * width(); }
};

std::unique_ptr<Workspace> load_workspace(const ExperimentConfig &c, Command cmd) {
  auto ws = std::make_unique<Workspace>();
  spdlog::info("reading dataset {}", c.dataset);
  Dataset all = ingest_dataset(c.dataset);
  ws->dataset_files = dataset_files(c.dataset);
  ws->source = c.query_source.value_or(c.input.empty() ? QuerySource::HeldOut : QuerySource::Synthetic);

  if (ws->source == QuerySource::HeldOut) {
    const Index q = c.queries.value_or(cmd == Command::Sweep ? 50 : 1);
    if (static_cast<std::size_t>(q) >= all.size()) {
      throw Error(ErrorCode::InvalidConfig, "held-out split of " + std::to_string(q) + " queries leaves no training images (dataset has " +
                                                std::to_string(all.size()) + ")");
    }
    const std::size_t keep = all.size() - static_cast<std::size_t>(q);
    std::vector<ImageGrid> train(all.items().begin(), all.items().begin() + static_cast<std::ptrdiff_t>(keep));
    for (std::size_t k = keep; k < all.size(); ++k) {
      const std::string name = k < ws->dataset_files.size() && ws->dataset_files.size() == all.size()
                                   ? ws->dataset_files[k]
                                   : c.dataset + "[" + std::to_string(k) + "]";
      ws->images.emplace_back(name, all[k]);
    }
    ws->dataset = Dataset(std::move(train));
  } else {
    ws->dataset = std::move(all);
    ws->input_files = expand_inputs(c.input);
    ws->images = read_images(ws->input_files);
    if (c.queries && static_cast<std::size_t>(*c.queries) < ws->images.size()) {
      ws->images.resize(static_cast<std::size_t>(*c.queries));
    }
  }
  for (const auto &[name, img] : ws->images) {
    if (img.shape() != ws->dataset.shape()) {
      throw Error(ErrorCode::ShapeMismatch, name + " does not match the dataset image shape");
    }
  }
  ws->A = std::make_unique<LinearOperator>(make_operator(c, ws->height(), ws->width()));
  ws->B = std::make_unique<PreInverse>(make_pre_inverse(pre_inverse_kind(c), *ws->A, c.tikhonov_lambda));
  spdlog::info("dataset {} images of {}x{}x{}, {} queries ({})", ws->dataset.size(), ws->dataset.shape().channels,
               ws->height(), ws->width(), ws->images.size(), to_string(ws->source));
  return ws;
}

// Measurement stream 2i and smoothing stream 2i+1 under `base`.
std::vector<Query> make_queries(const Workspace &ws, double sigma, std::uint64_t base) {
  std::vector<Query> out;
  for (std::size_t i = 0; i < ws.images.size(); ++i) {
    Query q;
    q.source = ws.images[i].first;
    q.smoothing_seed = derive_seed(base, 2 * i + 1);
    if (ws.source == QuerySource::File) {
      q.y = ws.images[i].second;
    } else {
      q.clean = ws.images[i].second;
      q.noise_seed = derive_seed(base, 2 * i);
      q.y = synthesize_measurement(*q.clean, *ws.A, sigma, *q.noise_seed);
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::string stem(std::size_t i, const char *what) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "q%03zu_%s", i, what);
  return buf;
}

nlohmann::json strata_summary(const EstimateReport &r) {
  if (r.stratum_rank.empty()) {
    return nullptr;
  }
  std::map<Index, Index> hist;
  for (Index k : r.stratum_rank) {
    ++hist[k];
  }
  nlohmann::json h = nlohmann::json::object();
  for (const auto &[rank, count] : hist) {
    h[std::to_string(rank)] = count;
  }
  const auto [amin, amax] = std::minmax_element(r.admissible_pixels.begin(), r.admissible_pixels.end());
  double amean = 0.0;
  for (Index a : r.admissible_pixels) {
    amean += static_cast<double>(a);
  }
  amean /= static_cast<double>(r.admissible_pixels.size());
  return {{"rank_histogram", h},
          {"admissible_pixels", {{"min", *amin}, {"mean", amean}, {"max", *amax}}}};
}

void write_pixel_csv(const fs::path &path, const EstimateReport &r, Index width) {
  std::ofstream out(path);
  out << "pixel,row,col,stratum_rank,admissible_pixels,log_normalizer,top_image,top_source,top_weight\n";
  const std::size_t n = r.per_pixel_log_normalizer.size();
  for (std::size_t p = 0; p < n; ++p) {
    out << p << "," << static_cast<Index>(p) / width << "," << static_cast<Index>(p) % width << ",";
    out << (p < r.stratum_rank.size() ? std::to_string(r.stratum_rank[p]) : "") << ",";
    out << (p < r.admissible_pixels.size() ? std::to_string(r.admissible_pixels[p]) : "") << ",";
    out << r.per_pixel_log_normalizer[p] << ",";
    if (p < r.top_k_weights.size() && !r.top_k_weights[p].empty()) {
      const auto &w = r.top_k_weights[p].front();
      out << w.image << "," << w.source << "," << w.weight;
    } else {
      out << ",,";
    }
    out << "\n";
  }
}

void write_weights_csv(const fs::path &path, const EstimateReport &r) {
  std::ofstream out(path);
  out << "output,rank,image,source,weight\n";
  for (std::size_t p = 0; p < r.top_k_weights.size(); ++p) {
    for (std::size_t k = 0; k < r.top_k_weights[p].size(); ++k) {
      const auto &w = r.top_k_weights[p][k];
      out << p << "," << k << "," << w.image << "," << w.source << "," << w.weight << "\n";
    }
  }
}

struct RunSummary {
  nlohmann::json queries = nlohmann::json::array();
  double psnr_measurement = 0.0;
  double psnr_reconstruction = 0.0;
  Index scored = 0;
  double seconds = 0.0;
};

// Runs the configured estimator on every query and writes the per-query
// artifacts plus report.json and manifest.json into `dir`.
RunSummary estimate_into(const fs::path &dir, const Workspace &ws, const ExperimentConfig &c, Command cmd, double sigma,
                         std::uint64_t base) {
  fs::create_directories(dir);
  const auto queries = make_queries(ws, sigma, base);
  const EstimatorOptions opts = estimator_options(c);
  EstimatorConfig ec = estimator_config(c);
  const NoiseModel noise{sigma};

  std::unique_ptr<LeMmseEngine> engine;
  if (ec.kind == EstimatorKind::LeMmse) {
    engine = std::make_unique<LeMmseEngine>(*ws.A, *ws.B, ws.dataset, PatchGeometry(ec.patch_side), opts);
    spdlog::debug("patch engine ready, cached={}", engine->cached());
  }

  RunSummary summary;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query &q = queries[i];
    ec.seed = q.smoothing_seed;
    const auto t0 = Clock::now();
    const EstimateReport r = engine ? engine->estimate(q.y, noise) : run_estimator(ec, q.y, *ws.A, *ws.B, ws.dataset, noise, opts);
    const double secs = seconds_since(t0);
    summary.seconds += secs;

    write_image_pair(dir, stem(i, "reconstruction"), r.reconstruction);
    write_image_pair(dir, stem(i, "measurement"), q.y);
    nlohmann::json files = {{"reconstruction", stem(i, "reconstruction") + ".npy"}, {"measurement", stem(i, "measurement") + ".npy"}};
    if (q.clean) {
      write_image_pair(dir, stem(i, "clean"), *q.clean);
      files["clean"] = stem(i, "clean") + ".npy";
    }
    if (r.standard_error) {
      write_npy(dir / (stem(i, "standard_error") + ".npy"), to_tensor(*r.standard_error));
      files["standard_error"] = stem(i, "standard_error") + ".npy";
    }
    if (c.csv && is_patch_estimator(ec.kind)) {
      write_pixel_csv(dir / (stem(i, "pixels") + ".csv"), r, ws.width());
      files["pixels"] = stem(i, "pixels") + ".csv";
    }
    if (c.csv && c.top_k != 0) {
      write_weights_csv(dir / (stem(i, "weights") + ".csv"), r);
      files["weights"] = stem(i, "weights") + ".csv";
    }

    nlohmann::json entry = {
        {"index", i},
        {"source", q.source},
        {"sigma", sigma},
        {"noise_seed", q.noise_seed ? nlohmann::json(*q.noise_seed) : nlohmann::json(nullptr)},
        {"smoothing_seed", ec.kind == EstimatorKind::SmoothedLeMmse ? nlohmann::json(q.smoothing_seed) : nlohmann::json(nullptr)},
        {"path", r.path},
        {"zero_noise", r.zero_noise},
        {"on_support_components", r.on_support_components},
        {"seconds", secs},
        {"strata", strata_summary(r)},
        {"files", files},
    };
    if (!r.per_pixel_log_normalizer.empty()) {
      double mean = 0.0;
      for (double v : r.per_pixel_log_normalizer) {
        mean += v;
      }
      entry["mean_log_normalizer"] = num(mean / static_cast<double>(r.per_pixel_log_normalizer.size()));
    }
    if (r.standard_error) {
      entry["mean_standard_error"] = r.standard_error->values().mean();
    }
    if (q.clean) {
      const double pm = psnr(q.y, *q.clean), pr = psnr(r.reconstruction, *q.clean);
      entry["psnr_measurement"] = num(pm);
      entry["psnr_reconstruction"] = num(pr);
      if (std::isfinite(pm) && std::isfinite(pr)) {
        summary.psnr_measurement += pm;
        summary.psnr_reconstruction += pr;
        ++summary.scored;
      }
      spdlog::info("query {} sigma {}: {:.2f} dB -> {:.2f} dB in {:.2f} s ({})", i, sigma, pm, pr, secs, r.path);
    } else {
      spdlog::info("query {} sigma {}: done in {:.2f} s ({})", i, sigma, secs, r.path);
    }
    summary.queries.push_back(entry);
  }

  nlohmann::json report = {
      {"estimator", c.estimator},
      {"sigma", sigma},
      {"seed_base", base},
      {"query_source", to_string(ws.source)},
      {"dataset_size", ws.dataset.size()},
      {"operator", to_string(ws.A->kind())},
      {"pre_inverse", to_string(ws.B->kind())},
      {"pre_inverse_cutoffs", ws.B->cutoff_count()},
      {"seconds", summary.seconds},
      {"queries", summary.queries},
  };
  if (summary.scored > 0) {
    report["mean_psnr_measurement"] = summary.psnr_measurement / static_cast<double>(summary.scored);
    report["mean_psnr_reconstruction"] = summary.psnr_reconstruction / static_cast<double>(summary.scored);
  }
  write_json(dir / "report.json", report);
  write_manifest(dir, cmd, c, ws.dataset_files, ws.input_files, {{"sigma", sigma}, {"seed_base", base}});
  return summary;
}

} // namespace

void run_estimate(const ExperimentConfig &c) {
  const auto ws = load_workspace(c, Command::Estimate);
  estimate_into(c.output, *ws, c, Command::Estimate, *c.sigma, c.seed);
}

void run_sweep(const ExperimentConfig &c) {
  const auto ws = load_workspace(c, Command::Sweep);
  const fs::path root(c.output);
  fs::create_directories(root);
  std::ofstream csv(root / "sweep.csv");
  csv << "sigma,directory,queries,mean_psnr_measurement,mean_psnr_reconstruction,seconds\n";
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t s = 0; s < c.sigma_list.size(); ++s) {
    const double sigma = c.sigma_list[s];
    char name[64];
    std::snprintf(name, sizeof name, "sigma_%g", sigma);
    const std::uint64_t base = derive_seed(c.seed, s + 1);
    spdlog::info("sweep {}/{}: sigma {}", s + 1, c.sigma_list.size(), sigma);
    const RunSummary r = estimate_into(root / name, *ws, c, Command::Sweep, sigma, base);
    const double pm = r.scored ? r.psnr_measurement / static_cast<double>(r.scored) : NAN;
    const double pr = r.scored ? r.psnr_reconstruction / static_cast<double>(r.scored) : NAN;
    csv << sigma << "," << name << "," << r.queries.size() << "," << pm << "," << pr << "," << r.seconds << "\n";
    rows.push_back({{"sigma", sigma},
                    {"directory", name},
                    {"queries", r.queries.size()},
                    {"mean_psnr_measurement", num(pm)},
                    {"mean_psnr_reconstruction", num(pr)},
                    {"seconds", r.seconds}});
  }
  write_json(root / "sweep.json", {{"estimator", c.estimator}, {"rows", rows}});
  write_manifest(root, Command::Sweep, c, ws->dataset_files, ws->input_files);
}

void run_diagnose(const ExperimentConfig &c) {
  const auto ws = load_workspace(c, Command::Diagnose);
  const fs::path dir(c.output);
  fs::create_directories(dir);
  const double sigma = *c.sigma;
  const NoiseModel noise{sigma};
  const PatchGeometry geom(*c.patch_side);
  const Index N = ws->pixels();
  const auto components = static_cast<double>(N) * static_cast<double>(ws->dataset.size());

  EstimatorOptions opts = estimator_options(c);
  // Mass counts need most of the weight retained; keep everything when it fits.
  if (components * static_cast<double>(N) <= 5e7) {
    opts.top_k = kFullRetention;
  }
  EstimatorConfig ec = estimator_config(c);
  const auto queries = make_queries(*ws, sigma, c.seed);
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query &q = queries[i];
    ec.seed = q.smoothing_seed;
    const auto t0 = Clock::now();
    const EstimateReport r = run_estimator(ec, q.y, *ws->A, *ws->B, ws->dataset, noise, opts);
    write_image_pair(dir, stem(i, "reconstruction"), r.reconstruction);
    write_image_pair(dir, stem(i, "measurement"), q.y);

    nlohmann::json entry = {{"index", i}, {"source", q.source}, {"sigma", sigma}, {"path", r.path}};
    entry["neg_log_measurement_density"] = num(neg_log_measurement_density(q.y, *ws->A, ws->dataset, noise));

    const DensityReport density = ec.kind == EstimatorKind::LeMmse
                                      ? patch_density_from_report(r, noise, ws->dataset.size(), N)
                                      : patch_density_map(q.y, *ws->A, *ws->B, ws->dataset, geom, noise, opts);
    {
      std::ofstream out(dir / (stem(i, "density") + ".csv"));
      out << "pixel,row,col,neg_log_density,neg_log_density_unnormalized\n";
      double mean = 0.0;
      for (Index p = 0; p < N; ++p) {
        const auto k = static_cast<std::size_t>(p);
        out << p << "," << p / ws->width() << "," << p % ws->width() << "," << density.neg_log_density[k] << ","
            << density.neg_log_density_unnormalized[k] << "\n";
        mean += density.neg_log_density[k];
      }
      entry["mean_neg_log_patch_density"] = num(mean / static_cast<double>(N));
    }

    try {
      const auto m50 = mass_concentration(r, 0.5), m90 = mass_concentration(r, 0.9), m99 = mass_concentration(r, 0.99);
      std::ofstream out(dir / (stem(i, "mass") + ".csv"));
      out << "pixel,count_50,count_90,count_99\n";
      for (std::size_t p = 0; p < m99.size(); ++p) {
        out << p << "," << m50[p] << "," << m90[p] << "," << m99[p] << "\n";
      }
      auto median = [](std::vector<Index> v) {
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        return v[v.size() / 2];
      };
      entry["median_mass_count"] = {{"q50", median(m50)}, {"q90", median(m90)}, {"q99", median(m99)}};
    } catch (const Error &e) {
      entry["median_mass_count"] = error_json(std::string(to_string(e.code())), e.what());
    }

    const auto labels = patchwork_source_map(r, 0.5);
    write_label_png(dir / (stem(i, "patchwork") + ".png"), labels, ws->height(), ws->width());
    {
      std::ofstream out(dir / (stem(i, "patchwork") + ".csv"));
      out << "pixel,image\n";
      Index labelled = 0;
      for (std::size_t p = 0; p < labels.size(); ++p) {
        out << p << "," << (labels[p] ? std::to_string(*labels[p]) : "") << "\n";
        labelled += labels[p] ? 1 : 0;
      }
      entry["patchwork_labelled_fraction"] = static_cast<double>(labelled) / static_cast<double>(labels.size());
    }

    if (q.clean && components * static_cast<double>(N) <= 2e7) {
      auto tradeoff_json = [&](const PreInverse &b) {
        const TradeoffReport t = pre_inverse_tradeoff(*ws->A, b, geom, *q.clean, ws->dataset, noise, {}, false, opts);
        return nlohmann::json{{"pre_inverse", to_string(b.kind())}, {"mean_noise", num(t.mean_noise)}, {"mean_signal", num(t.mean_signal)}};
      };
      entry["tradeoff"] = nlohmann::json::array({tradeoff_json(*ws->B)});
      if (ws->B->kind() != PreInverseKind::Identity) {
        entry["tradeoff"].push_back(tradeoff_json(make_pre_inverse(PreInverseKind::Identity, *ws->A)));
      }
    } else if (q.clean) {
      entry["tradeoff"] = "skipped: more than 2e7 (pixel pair, image) terms";
    }
    entry["seconds"] = seconds_since(t0);
    spdlog::info("diagnosed query {} in {:.2f} s", i, entry["seconds"].get<double>());
    entries.push_back(entry);
  }
  write_json(dir / "diagnostics.json", {{"estimator", c.estimator}, {"top_k", opts.top_k}, {"queries", entries}});
  write_manifest(dir, Command::Diagnose, c, ws->dataset_files, ws->input_files);
}

void run_oracle(const ExperimentConfig &c) {
  const auto ws = load_workspace(c, Command::Oracle);
  const double sigma = *c.sigma;
  const NoiseModel noise{sigma};
  const Index side = c.patch_side.value_or(std::min<Index>(3, std::min(ws->height(), ws->width()) | 1));
  const PatchGeometry geom(side);
  const std::vector<double> epsilons = c.epsilon ? std::vector<double>{*c.epsilon} : c.oracle_epsilons;
  const DenseProblem p = make_dense_problem(*ws->A, pre_inverse_kind(c), c.tikhonov_lambda, ws->dataset, sigma);
  EstimatorOptions opts = estimator_options(c);
  opts.top_k = 0;

  nlohmann::json rows = nlohmann::json::array();
  double worst = 0.0;
  for (const Query &q : make_queries(*ws, sigma, c.seed)) {
    const Vector &y = q.y.values();
    auto gap = [](const Vector &a, const Vector &b) { return (a - b).cwiseAbs().maxCoeff(); };
    const double g_mmse = gap(mmse(q.y, *ws->A, *ws->B, ws->dataset, noise, opts).reconstruction.values(), oracle_mmse(p, y));
    const double g_aug =
        gap(augmented_mmse(q.y, *ws->A, *ws->B, ws->dataset, noise, opts).reconstruction.values(), oracle_augmented_mmse(p, y));
    const double g_e = gap(e_mmse(q.y, *ws->A, *ws->B, ws->dataset, noise, opts).reconstruction.values(), oracle_e_mmse(p, y));
    const double g_le =
        gap(le_mmse(q.y, *ws->A, *ws->B, ws->dataset, geom, noise, opts).reconstruction.values(), oracle_le_mmse(p, y, geom));
    worst = std::max({worst, g_mmse, g_aug, g_e, g_le});
    nlohmann::json eps = nlohmann::json::array();
    for (const auto &e : oracle_epsilon_limit(p, y, geom, epsilons)) {
      eps.push_back({{"epsilon", e.epsilon}, {"gap", e.gap}});
    }
    rows.push_back({{"source", q.source},
                    {"gaps", {{"mmse", g_mmse}, {"aug-mmse", g_aug}, {"emmse", g_e}, {"lemmse", g_le}}},
                    {"epsilon_limit", eps}});
  }
  const nlohmann::json out = {{"sigma", sigma},
                              {"patch_side", side},
                              {"tolerance", 1e-8},
                              {"max_gap", worst},
                              {"agree", worst <= 1e-8},
                              {"queries", rows}};
  std::cout << out.dump(2) << std::endl;
  if (!c.output.empty()) {
    fs::create_directories(c.output);
    write_json(fs::path(c.output) / "oracle.json", out);
    write_manifest(c.output, Command::Oracle, c, ws->dataset_files, ws->input_files);
  }
}

void run_compare(const ExperimentConfig &c) {
  const std::vector<std::string> a_files = expand_inputs(c.input);
  const std::vector<std::string> b_files = expand_inputs({c.dataset});
  const auto a = read_images(a_files), b = read_images(b_files);
  if (a.size() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch, "compare needs equally many images: " + std::to_string(a.size()) + " vs " +
                                              std::to_string(b.size()));
  }
  nlohmann::json pairs = nlohmann::json::array();
  double total = 0.0;
  Index finite = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second.shape() != b[i].second.shape()) {
      throw Error(ErrorCode::ShapeMismatch, a[i].first + " and " + b[i].first + " differ in shape");
    }
    const double v = psnr(a[i].second, b[i].second);
    if (std::isfinite(v)) {
      total += v;
      ++finite;
    }
    pairs.push_back({{"estimate", a[i].first}, {"reference", b[i].first}, {"psnr", num(v)}});
  }
  const nlohmann::json out = {{"pairs", pairs},
                              {"count", a.size()},
                              {"identical_pairs", static_cast<Index>(a.size()) - finite},
                              {"mean_psnr_finite", finite ? num(total / static_cast<double>(finite)) : nlohmann::json(nullptr)}};
  std::cout << out.dump(2) << std::endl;
  if (!c.output.empty()) {
    fs::create_directories(c.output);
    write_json(fs::path(c.output) / "compare.json", out);
    std::ofstream csv(fs::path(c.output) / "compare.csv");
    csv << "estimate,reference,psnr\n";
    for (const auto &p : pairs) {
      csv << p["estimate"].get<std::string>() << "," << p["reference"].get<std::string>() << ","
          << (p["psnr"].is_null() ? std::string("inf") : std::to_string(p["psnr"].get<double>())) << "\n";
    }
    write_manifest(c.output, Command::Compare, c, b_files, a_files);
  }
}

} // namespace lemmse::cli
