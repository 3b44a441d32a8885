#pragma once

#include "lemmse/estimators.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace lemmse {

/// -log (1/|D|) sum_x N(y; A x, sigma^2 I), including every constant.
double neg_log_measurement_density(const ImageGrid &y, const LinearOperator &A, const Dataset &d, NoiseModel noise);

struct DensityReport {
  /// -log of the patch mixture with the 1/(|D| N) count factor; invariant to
  /// duplicating the dataset.
  std::vector<double> neg_log_density;
  /// -log of the plain sum over (x, n), without the count factor.
  std::vector<double> neg_log_density_unnormalized;
  double sigma = 0.0;
  std::size_t dataset_size = 0;
  Index pixels = 0;
};

DensityReport patch_density_map(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                                const PatchGeometry &geom, NoiseModel noise, const EstimatorOptions &opts = {});
/// Same map from an existing LE-MMSE report.
DensityReport patch_density_from_report(const EstimateReport &report, NoiseModel noise, std::size_t dataset_size,
                                        Index pixels);

/// Per output, the fewest highest-weight components covering mass q.
/// Throws InsufficientRetention when the retained weights cover less than q.
std::vector<Index> mass_concentration(const EstimateReport &report, double q);

/// Per output, the image whose best component carries at least `threshold`
/// of the weight; nullopt when none does.
std::vector<std::optional<Index>> patchwork_source_map(const EstimateReport &report, double threshold);

struct TradeoffEntry {
  Index query_pixel = 0;  ///< n'
  Index source_pixel = 0; ///< n
  Index image = 0;
  double signal = 0.0; ///< ||Q_n^+ Delta||^2
  double noise = 0.0;  ///< sigma^2 trace(Q_n^+ Q_n' Q_n'^T Q_n^+T)
};

struct TradeoffReport {
  std::vector<TradeoffEntry> entries;        ///< filled only when requested
  std::vector<double> per_pixel_min_signal;  ///< over (n, x) for each n'
  std::vector<double> per_pixel_mean_noise;  ///< over n for each n'
  double mean_noise = 0.0;
  double mean_signal = 0.0;
};

/// Both terms of E[eta^2] for y = A xbar + e against every candidate x.
/// `pairs` lists (n', n); empty means every pair on the grid.
TradeoffReport pre_inverse_tradeoff(const LinearOperator &A, const PreInverse &B, const PatchGeometry &geom,
                                    const ImageGrid &xbar, const Dataset &candidates, NoiseModel noise,
                                    const std::vector<std::pair<Index, Index>> &pairs = {}, bool keep_entries = false,
                                    const EstimatorOptions &opts = {});

struct VarianceStudy {
  ImageGrid mean;
  ImageGrid variance; ///< unbiased, over trials
  std::vector<std::uint64_t> seeds;
};

/// Runs the estimator on `trials` measurements A xbar + sigma z_k with
/// z_k drawn from derive_seed(seed, k).
VarianceStudy variance_study(const ImageGrid &xbar, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                             const EstimatorConfig &config, NoiseModel noise, Index trials, std::uint64_t seed,
                             const EstimatorOptions &opts = {});

/// 10 log10(peak^2 / MSE); +infinity when the images are equal.
double psnr(const ImageGrid &a, const ImageGrid &b, double peak = 1.0);

} // namespace lemmse
