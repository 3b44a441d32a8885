#pragma once

#include "lemmse/fft.hpp"
#include "lemmse/gaussian.hpp"
#include "lemmse/grid.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lemmse {

inline constexpr Index kDefaultDenseLimit = 4096;

enum class OperatorKind { Identity, InpaintMask, CircularConvolution };

/// How a single-channel N x N linear map is represented. Every operator in the
/// library acts identically and independently on each channel.
enum class Structure { Identity, Diagonal, Circulant, Dense };

std::string to_string(OperatorKind kind);
std::string to_string(Structure s);

/// Forward operator A of y = A x + e, acting on an H x W periodic grid.
class LinearOperator {
public:
  OperatorKind kind() const { return kind_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index pixels() const { return height_ * width_; }

  /// 1 keeps a pixel, 0 zeroes it (inpainting only).
  const std::vector<double> &mask() const { return mask_; }
  /// Centred periodic kernel with k[0] at offset (0, 0) (convolution only).
  const std::vector<double> &kernel() const { return kernel_; }
  /// Unnormalized DFT of the kernel (convolution only).
  const Spectrum &symbol() const { return symbol_; }
  double std() const { return std_; }
  Index mask_side() const { return mask_side_; }

  ImageGrid apply(const ImageGrid &x) const;
  ImageGrid adjoint(const ImageGrid &y) const;
  std::vector<double> apply_channel(std::span<const double> x) const;
  std::vector<double> adjoint_channel(std::span<const double> y) const;

  /// Single-channel N x N matrix; refuses N > dense_limit.
  Matrix dense(Index dense_limit = kDefaultDenseLimit) const;

  bool commutes_with_translations() const { return kind_ != OperatorKind::InpaintMask; }
  std::string describe() const;

  friend LinearOperator make_denoising(Index height, Index width);
  friend LinearOperator make_center_mask(Index height, Index width, Index side);
  friend LinearOperator make_gaussian_blur(Index height, Index width, double std);

private:
  LinearOperator(OperatorKind kind, Index height, Index width);

  OperatorKind kind_;
  Index height_;
  Index width_;
  std::vector<double> mask_;
  std::vector<double> kernel_;
  Spectrum symbol_;
  std::shared_ptr<const Fft2d> fft_;
  double std_ = 0.0;
  Index mask_side_ = 0;
};

LinearOperator make_denoising(Index height, Index width);
/// Zeroes a side x side square whose top-left corner sits at
/// (floor((H - side) / 2), floor((W - side) / 2)).
LinearOperator make_center_mask(Index height, Index width, Index side);
/// Periodic Gaussian kernel exp(-(dr^2 + dc^2) / (2 std^2)) normalized to sum 1.
LinearOperator make_gaussian_blur(Index height, Index width, double std);

/// Single-channel model of the covariance B B^T, used to whiten differences of
/// pre-inverted measurements. whiten(d) has squared norm d^T (B B^T)^+ d.
class CovarianceModel {
public:
  Structure structure() const { return structure_; }
  Index dim() const { return dim_; }
  Index rank() const { return rank_; }
  double log_pseudo_det() const { return log_pseudo_det_; }
  /// True when whitening commutes with every translation.
  bool translation_invariant() const { return structure_ == Structure::Identity || structure_ == Structure::Circulant; }

  /// Whitened coordinates of a single-channel vector.
  Vector whiten(std::span<const double> d) const;
  /// Squared norm of the component of d outside Im(B B^T).
  double residual_sq(std::span<const double> d) const;
  /// Component of d outside Im(B B^T).
  Vector off_support_part(std::span<const double> d) const;

  friend class PreInverse;

private:
  Structure structure_ = Structure::Identity;
  Index dim_ = 0;
  Index rank_ = 0;
  double log_pseudo_det_ = 0.0;
  std::vector<double> scale_;       // diagonal: 1/|b_j| or 0; circulant: 1/|b_k| or 0
  std::vector<double> off_support_; // 1 where the diagonal/frequency is cut
  std::shared_ptr<const Fft2d> fft_;
  std::shared_ptr<const GaussianFactorization> dense_;
};

enum class PreInverseKind { Identity, PseudoInverse, Tikhonov, CustomDense };
std::string to_string(PreInverseKind kind);

/// Pre-inverse B applied to the measurement before estimation.
class PreInverse {
public:
  PreInverseKind kind() const { return kind_; }
  Structure structure() const { return structure_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index pixels() const { return height_ * width_; }
  double lambda() const { return lambda_; }
  /// Number of diagonal entries or frequencies zeroed by the rank cutoff.
  Index cutoff_count() const { return cutoff_count_; }

  const std::vector<double> &diagonal() const { return diagonal_; }
  const Spectrum &symbol() const { return symbol_; }
  /// Real-space circulant kernel b with (B x)[i] = sum_j b[i - j] x[j].
  std::vector<double> circulant_kernel() const;

  ImageGrid apply(const ImageGrid &y) const;
  std::vector<double> apply_channel(std::span<const double> y) const;
  Matrix dense(Index dense_limit = kDefaultDenseLimit) const;

  bool commutes_with_translations() const {
    return structure_ == Structure::Identity || structure_ == Structure::Circulant;
  }

  /// Rows {B[i, :] : i in window} as a P x N single-channel matrix.
  Matrix rows(const std::vector<Index> &window, Index dense_limit = kDefaultDenseLimit) const;

  CovarianceModel covariance(double rank_tolerance = kDefaultRankTolerance,
                             Index dense_limit = kDefaultDenseLimit) const;
  std::string describe() const;

  friend PreInverse make_pre_inverse(PreInverseKind kind, const LinearOperator &forward, std::optional<double> lambda,
                                     double rank_tolerance, Index dense_limit);
  friend PreInverse make_custom_pre_inverse(Matrix b, Index height, Index width);

private:
  PreInverse(PreInverseKind kind, Structure structure, Index height, Index width);

  PreInverseKind kind_;
  Structure structure_;
  Index height_;
  Index width_;
  double lambda_ = 0.0;
  Index cutoff_count_ = 0;
  std::vector<double> diagonal_;
  Spectrum symbol_;
  Matrix dense_;
  std::shared_ptr<const Fft2d> fft_;
};

/// identity -> B = I; inpainting pseudo-inverse -> B = A; convolution
/// pseudo-inverse -> 1/a_hat above rank_tolerance * max|a_hat|, else 0;
/// Tikhonov -> conj(a_hat) / (|a_hat|^2 + lambda) (mask: m / (m + lambda)).
PreInverse make_pre_inverse(PreInverseKind kind, const LinearOperator &forward, std::optional<double> lambda = std::nullopt,
                            double rank_tolerance = kDefaultRankTolerance, Index dense_limit = kDefaultDenseLimit);
PreInverse make_custom_pre_inverse(Matrix b, Index height, Index width);

/// Per-pixel rank of Q_n = Pi_n B and the partition of pixels by rank.
struct RankStrata {
  std::vector<Index> rank;
  std::map<Index, std::vector<Index>> strata;

  bool constant_rank() const { return strata.size() == 1; }
};

/// Pixels whose Q_n Q_n^T coincide exactly share one factorization.
struct CovarianceClass {
  GaussianFactorization factor; ///< of Q_n Q_n^T over the C*P patch entries, unit noise
  std::vector<Index> pixels;
};

/// Everything the local estimator needs about Q_n = Pi_n B for every pixel.
class QMatrices {
public:
  const PatchGeometry &geometry() const { return geom_; }
  Index channels() const { return channels_; }
  Index pixels() const { return static_cast<Index>(class_of_.size()); }
  Index patch_dim() const { return channels_ * geom_.size(); }

  const std::vector<CovarianceClass> &classes() const { return classes_; }
  Index class_of(Index n) const { return class_of_[static_cast<std::size_t>(n)]; }
  const GaussianFactorization &factor(Index n) const { return classes_[static_cast<std::size_t>(class_of(n))].factor; }
  const RankStrata &strata() const { return strata_; }
  /// Single factorization shared by all pixels (identity or circulant B).
  bool shared() const { return classes_.size() == 1; }

  /// Q_n A x for every n, as the image B A x whose patches are the means.
  ImageGrid mean_image(const LinearOperator &forward, const PreInverse &pre, const ImageGrid &x) const;

  friend QMatrices build_q_matrices(const PreInverse &pre, const PatchGeometry &geom, Index channels,
                                    double rank_tolerance, Index dense_limit);

private:
  QMatrices(PatchGeometry geom, Index channels) : geom_(std::move(geom)), channels_(channels) {}

  PatchGeometry geom_;
  Index channels_;
  std::vector<CovarianceClass> classes_;
  std::vector<Index> class_of_;
  RankStrata strata_;
};

QMatrices build_q_matrices(const PreInverse &pre, const PatchGeometry &geom, Index channels = 1,
                           double rank_tolerance = kDefaultRankTolerance, Index dense_limit = kDefaultDenseLimit);

/// Minimal-rank stratum whose supports contain v, and its admissible members.
struct StratumChoice {
  Index rank = 0;
  std::vector<Index> classes; ///< admissible covariance classes of that rank
  std::vector<Index> pixels;  ///< admissible pixels, ascending
};

/// Throws EmptyStratum when v lies off every support.
StratumChoice stratum_of(const Vector &v, const QMatrices &q, double support_tolerance = kDefaultSupportTolerance);

/// True when v lies on Im(factor) within the relative support tolerance.
bool on_support(const Vector &v, const GaussianFactorization &factor, double support_tolerance);

} // namespace lemmse
