#pragma once

#include "lemmse/accumulator.hpp"
#include "lemmse/grid.hpp"
#include "lemmse/operators.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lemmse {

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kTieTolerance = 1e-9;
inline constexpr Index kFullRetention = -1;

struct NoiseModel {
  double sigma = 0.0;

  bool zero_noise(double floor = kSigmaFloor) const { return sigma < floor; }
};

struct EstimatorOptions {
  int threads = 0; ///< <= 0 uses every hardware thread
  /// Components kept per output (per pixel for patch estimators); 0 disables,
  /// kFullRetention keeps all of them.
  Index top_k = 0;
  /// Fixes the dataset chunk count so results do not depend on `threads`.
  bool deterministic = true;
  Index deterministic_chunks = 16;
  std::size_t memory_budget_bytes = std::size_t{4} << 30;
  double rank_tolerance = kDefaultRankTolerance;
  double support_tolerance = kDefaultSupportTolerance;
  double sigma_floor = kSigmaFloor;
  double tie_tolerance = kTieTolerance;
  Index dense_limit = kDefaultDenseLimit;
  /// Query pixels per distance block; fixed so the arithmetic does not depend on threads.
  Index query_block = 64;
  /// Use FFT cross-correlation for E-MMSE / augmented MMSE when the whitening commutes with translations.
  bool fft_fast_path = true;
};

struct WeightEntry {
  Index image = 0;
  Index source = -1;
  double weight = 0.0;
};

struct EstimateReport {
  ImageGrid reconstruction;
  /// log of the unnormalized mixture density at the query: one entry per pixel
  /// for patch estimators, a single entry for whole-image estimators. NaN in
  /// the zero-noise limit.
  std::vector<double> per_pixel_log_normalizer;
  /// Normalized weights sorted descending; same indexing as the normalizer.
  std::vector<std::vector<WeightEntry>> top_k_weights;
  /// Rank of the stratum each output pixel was estimated in (patch estimators).
  std::vector<Index> stratum_rank;
  /// Number of admissible pixel locations per output pixel (patch estimators).
  std::vector<Index> admissible_pixels;
  /// Per-entry Monte-Carlo standard error (smoothed estimator only).
  std::optional<ImageGrid> standard_error;
  bool zero_noise = false;
  /// Components that passed the support test, summed over outputs.
  std::int64_t on_support_components = 0;
  std::string path; ///< which code path produced the result
};

EstimateReport mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d, NoiseModel noise,
                    const EstimatorOptions &opts = {});

/// MMSE over every cyclic shift of every dataset image, without materializing them.
EstimateReport augmented_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                              NoiseModel noise, const EstimatorOptions &opts = {});

EstimateReport e_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                      NoiseModel noise, const EstimatorOptions &opts = {});

/// LE-MMSE with the per-pixel factorizations and, when they fit in the memory
/// budget, the whitened dataset patches prepared once for repeated queries.
/// Keeps references to A, B and d; they must outlive the engine.
class LeMmseEngine {
public:
  LeMmseEngine(const LinearOperator &A, const PreInverse &B, const Dataset &d, const PatchGeometry &geom,
               const EstimatorOptions &opts = {});
  ~LeMmseEngine();
  LeMmseEngine(LeMmseEngine &&) noexcept;
  LeMmseEngine &operator=(LeMmseEngine &&) noexcept;

  EstimateReport estimate(const ImageGrid &y, NoiseModel noise) const;
  const QMatrices &q_matrices() const;
  bool cached() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

EstimateReport le_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                       const PatchGeometry &geom, NoiseModel noise, const EstimatorOptions &opts = {});

/// Average of le_mmse(y + epsilon * z_k) over `samples` standard normal draws
/// z_k seeded by derive_seed(seed, k). epsilon == 0 returns le_mmse(y).
EstimateReport smoothed_le_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                                const PatchGeometry &geom, NoiseModel noise, double epsilon, Index samples,
                                std::uint64_t seed, const EstimatorOptions &opts = {});

/// Closest on-support mean in Mahalanobis distance; ties within tie_tolerance
/// are averaged. Throws AllWeightsOffSupport.
Vector zero_noise_limit(const Vector &y, const std::vector<Vector> &means, const std::vector<Vector> &values,
                        const GaussianFactorization &fac, double support_tolerance = kDefaultSupportTolerance,
                        double tie_tolerance = kTieTolerance);

enum class EstimatorKind { Mmse, AugmentedMmse, EMmse, LeMmse, SmoothedLeMmse };

std::string to_string(EstimatorKind kind);
/// Accepts "mmse", "aug-mmse", "emmse", "lemmse", "lemmse-smooth".
EstimatorKind parse_estimator(const std::string &name);
bool is_patch_estimator(EstimatorKind kind);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::LeMmse;
  Index patch_side = 0;
  double epsilon = 0.0;
  Index samples = 1;
  std::uint64_t seed = 0;
};

EstimateReport run_estimator(const EstimatorConfig &config, const ImageGrid &y, const LinearOperator &A,
                             const PreInverse &B, const Dataset &d, NoiseModel noise, const EstimatorOptions &opts = {});

} // namespace lemmse
