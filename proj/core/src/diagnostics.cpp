#include "lemmse/diagnostics.hpp"

#include "lemmse/error.hpp"
#include "lemmse/io.hpp"
#include "lemmse/parallel.hpp"
#include "lemmse/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lemmse {

double neg_log_measurement_density(const ImageGrid &y, const LinearOperator &A, const Dataset &d, NoiseModel noise) {
  if (!(y.shape() == d.shape())) {
    throw Error(ErrorCode::ShapeMismatch, "measurement and dataset shapes differ");
  }
  if (!(noise.sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "density needs sigma > 0");
  }
  const double m = static_cast<double>(y.size());
  const double s2 = noise.sigma * noise.sigma;
  const double c = -0.5 * m * std::log(2.0 * std::numbers::pi * s2);
  std::vector<double> logs;
  logs.reserve(d.size());
  for (const auto &x : d.items()) {
    logs.push_back(c - 0.5 * (y.values() - A.apply(x).values()).squaredNorm() / s2);
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) {
    sum += std::exp(l - top);
  }
  return -(top + std::log(sum) - std::log(static_cast<double>(d.size())));
}

DensityReport patch_density_from_report(const EstimateReport &report, NoiseModel noise, std::size_t dataset_size,
                                        Index pixels) {
  DensityReport r;
  r.sigma = noise.sigma;
  r.dataset_size = dataset_size;
  r.pixels = pixels;
  const double count = std::log(static_cast<double>(dataset_size) * static_cast<double>(pixels));
  for (double lz : report.per_pixel_log_normalizer) {
    r.neg_log_density_unnormalized.push_back(-lz);
    r.neg_log_density.push_back(-(lz - count));
  }
  return r;
}

DensityReport patch_density_map(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                                const PatchGeometry &geom, NoiseModel noise, const EstimatorOptions &opts) {
  if (noise.zero_noise(opts.sigma_floor)) {
    throw Error(ErrorCode::InvalidArgument, "patch density needs sigma above the zero-noise floor");
  }
  const EstimateReport rep = le_mmse(y, A, B, d, geom, noise, opts);
  return patch_density_from_report(rep, noise, d.size(), y.pixels());
}

std::vector<Index> mass_concentration(const EstimateReport &report, double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "mass fraction must lie in (0, 1]");
  }
  if (report.top_k_weights.empty()) {
    throw Error(ErrorCode::InsufficientRetention, "report retains no weights");
  }
  constexpr double slack = 1e-9;
  std::vector<Index> out;
  out.reserve(report.top_k_weights.size());
  for (const auto &list : report.top_k_weights) {
    double total = 0.0;
    for (const auto &e : list) {
      total += e.weight;
    }
    if (total < q - slack) {
      throw Error(ErrorCode::InsufficientRetention,
                  "retained weights cover " + std::to_string(total) + " < " + std::to_string(q));
    }
    if (q == 1.0) {
      out.push_back(static_cast<Index>(std::count_if(list.begin(), list.end(), [](const WeightEntry &e) { return e.weight > 0.0; })));
      continue;
    }
    double acc = 0.0;
    Index k = 0;
    for (const auto &e : list) {
      acc += e.weight;
      ++k;
      if (acc >= q - 1e-12) {
        break;
      }
    }
    out.push_back(k);
  }
  return out;
}

std::vector<std::optional<Index>> patchwork_source_map(const EstimateReport &report, double threshold) {
  if (report.top_k_weights.empty()) {
    throw Error(ErrorCode::InsufficientRetention, "report retains no weights");
  }
  std::vector<std::optional<Index>> out;
  out.reserve(report.top_k_weights.size());
  for (const auto &list : report.top_k_weights) {
    if (list.empty()) {
      throw Error(ErrorCode::InsufficientRetention, "an output retains no weights");
    }
    const auto best = std::max_element(list.begin(), list.end(),
                                       [](const WeightEntry &a, const WeightEntry &b) { return a.weight < b.weight; });
    out.push_back(best->weight >= threshold ? std::optional<Index>(best->image) : std::nullopt);
  }
  return out;
}

TradeoffReport pre_inverse_tradeoff(const LinearOperator &A, const PreInverse &B, const PatchGeometry &geom,
                                    const ImageGrid &xbar, const Dataset &candidates, NoiseModel noise,
                                    const std::vector<std::pair<Index, Index>> &pairs, bool keep_entries,
                                    const EstimatorOptions &opts) {
  if (!(xbar.shape() == candidates.shape())) {
    throw Error(ErrorCode::ShapeMismatch, "reference and candidate shapes differ");
  }
  const Index C = xbar.channels(), N = xbar.pixels();
  const QMatrices q = build_q_matrices(B, geom, C, opts.rank_tolerance, opts.dense_limit);
  const RowMatrix ref = extract_all_patches(q.mean_image(A, B, xbar), geom);
  std::vector<RowMatrix> means;
  for (const auto &x : candidates.items()) {
    means.push_back(extract_all_patches(q.mean_image(A, B, x), geom));
  }
  // ||Q_n^+ Delta||^2 = Delta^T (Q_n Q_n^T)^+ Delta, and
  // trace(Q_n^+ Q_n' Q_n'^T Q_n^+T) = ||W_n U_n' Lambda_n'^(1/2)||_F^2.
  const auto &classes = q.classes();
  std::vector<Matrix> root(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto &f = classes[c].factor;
    root[c] = f.basis() * f.eigenvalues().cwiseSqrt().asDiagonal();
  }
  const double s2 = noise.sigma * noise.sigma;

  std::vector<std::pair<Index, Index>> todo = pairs;
  if (todo.empty()) {
    for (Index np = 0; np < N; ++np) {
      for (Index n = 0; n < N; ++n) {
        todo.emplace_back(np, n);
      }
    }
  }
  TradeoffReport r;
  r.per_pixel_min_signal.assign(static_cast<std::size_t>(N), std::numeric_limits<double>::infinity());
  r.per_pixel_mean_noise.assign(static_cast<std::size_t>(N), 0.0);
  std::vector<Index> noise_count(static_cast<std::size_t>(N), 0);
  double noise_total = 0.0, signal_total = 0.0;
  std::size_t signal_count = 0;
  for (const auto &[np, n] : todo) {
    if (np < 0 || np >= N || n < 0 || n >= N) {
      throw Error(ErrorCode::InvalidArgument, "pixel pair out of range");
    }
    const auto &fn = q.factor(n);
    const double noise_term =
        fn.rank() == 0 ? 0.0 : s2 * (fn.whitening_matrix() * root[static_cast<std::size_t>(q.class_of(np))]).squaredNorm();
    const Vector v = ref.row(np).transpose();
    for (std::size_t id = 0; id < candidates.size(); ++id) {
      const Vector delta = v - means[id].row(n).transpose();
      const double signal = fn.rank() == 0 ? 0.0 : fn.whiten(delta).squaredNorm();
      auto &mn = r.per_pixel_min_signal[static_cast<std::size_t>(np)];
      mn = std::min(mn, signal);
      signal_total += signal;
      ++signal_count;
      if (keep_entries) {
        r.entries.push_back({np, n, static_cast<Index>(id), signal, noise_term});
      }
    }
    r.per_pixel_mean_noise[static_cast<std::size_t>(np)] += noise_term;
    ++noise_count[static_cast<std::size_t>(np)];
    noise_total += noise_term;
  }
  for (Index np = 0; np < N; ++np) {
    const auto i = static_cast<std::size_t>(np);
    if (noise_count[i] > 0) {
      r.per_pixel_mean_noise[i] /= static_cast<double>(noise_count[i]);
    }
  }
  r.mean_noise = noise_total / static_cast<double>(todo.size());
  r.mean_signal = signal_count > 0 ? signal_total / static_cast<double>(signal_count) : 0.0;
  return r;
}

VarianceStudy variance_study(const ImageGrid &xbar, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                             const EstimatorConfig &config, NoiseModel noise, Index trials, std::uint64_t seed,
                             const EstimatorOptions &opts) {
  if (trials < 2) {
    throw Error(ErrorCode::InvalidArgument, "variance study needs at least two trials");
  }
  std::optional<LeMmseEngine> engine;
  if (config.kind == EstimatorKind::LeMmse) {
    engine.emplace(A, B, d, PatchGeometry(config.patch_side), opts);
  }
  VarianceStudy out;
  Vector sum = Vector::Zero(xbar.size());
  std::vector<Vector> results;
  for (Index k = 0; k < trials; ++k) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(k));
    out.seeds.push_back(s);
    const ImageGrid y = synthesize_measurement(xbar, A, noise.sigma, s);
    EstimateReport r = engine ? engine->estimate(y, noise) : run_estimator(config, y, A, B, d, noise, opts);
    sum += r.reconstruction.values();
    results.push_back(std::move(r.reconstruction.values()));
  }
  const double K = static_cast<double>(trials);
  const Vector mean = sum / K;
  Vector var = Vector::Zero(xbar.size());
  for (const auto &v : results) {
    var += (v - mean).cwiseAbs2();
  }
  out.mean = ImageGrid(xbar.shape(), mean);
  out.variance = ImageGrid(xbar.shape(), var / (K - 1.0));
  return out;
}

double psnr(const ImageGrid &a, const ImageGrid &b, double peak) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorCode::ShapeMismatch, "psnr needs equal shapes");
  }
  if (!(peak > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "psnr peak must be positive");
  }
  const double mse = (a.values() - b.values()).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(peak * peak / mse);
}

} // namespace lemmse
