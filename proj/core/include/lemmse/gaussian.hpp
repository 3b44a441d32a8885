#pragma once

#include "lemmse/grid.hpp"

namespace lemmse {

inline constexpr double kDefaultRankTolerance = 1e-10;
inline constexpr double kDefaultSupportTolerance = 1e-6;

/// Spectral form U diag(lambda) U^T of a positive semi-definite covariance,
/// truncated to the eigenpairs with lambda_i > rank_tolerance * lambda_1.
///
/// A rank-0 factorization is a point mass: its support is the mean itself.
class GaussianFactorization {
public:
  GaussianFactorization() = default;
  GaussianFactorization(Matrix basis, Vector eigenvalues, double rank_tolerance);

  /// Covariance Q Q^T from the SVD of Q, lambda_i = s_i^2. Never forms Q Q^T.
  static GaussianFactorization from_factor(const Matrix &factor, double rank_tolerance = kDefaultRankTolerance);

  Index dim() const { return basis_.rows(); }
  Index rank() const { return eigenvalues_.size(); }
  const Matrix &basis() const { return basis_; }
  const Vector &eigenvalues() const { return eigenvalues_; }
  double log_pseudo_det() const { return log_pseudo_det_; }
  double rank_tolerance() const { return rank_tolerance_; }

  /// diag(lambda)^{-1/2} U^T v, so ||whiten(v)||^2 is the Mahalanobis form.
  Vector whiten(const Vector &v) const;
  /// Rows are whitening functionals: whitening_matrix() * v == whiten(v).
  const Matrix &whitening_matrix() const { return whitening_; }
  /// ||(I - U U^T) v||.
  double off_support_residual(const Vector &v) const;

  /// Factorization of s * Sigma for s > 0.
  GaussianFactorization scaled(double s) const;
  /// Factorization of I_copies (x) Sigma (block diagonal, blocks identical).
  GaussianFactorization block_diagonal(Index copies) const;

  Matrix covariance() const;

private:
  Matrix basis_;
  Vector eigenvalues_;
  Matrix whitening_;
  double log_pseudo_det_ = 0.0;
  double rank_tolerance_ = kDefaultRankTolerance;
};

/// Symmetric eigendecomposition of cov, truncated at rank_tolerance * lambda_max.
/// Throws NonSymmetric or NegativeEigenvalueBeyondTolerance.
GaussianFactorization factorize(const Matrix &cov, double rank_tolerance = kDefaultRankTolerance);

/// Log of the degenerate Gaussian density on its affine support; -inf when
/// ||(I - U U^T)(v - mean)|| > support_tolerance * (1 + ||v - mean||).
double log_density(const Vector &v, const Vector &mean, const GaussianFactorization &fac,
                   double support_tolerance = kDefaultSupportTolerance);

/// Sum_i <u_i, v - mean>^2 / lambda_i over the retained eigenpairs only.
double mahalanobis_sq(const Vector &v, const Vector &mean, const GaussianFactorization &fac);

/// Singular triplet B = U diag(s) V^T.
struct SingularTriplet {
  Matrix u;
  Vector s;
  Matrix v;

  static SingularTriplet of(const Matrix &b);
  Matrix reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

/// Factorization of B_eps B_eps^T with B_eps = U diag(s + eps) V^T, i.e. the
/// eigenvalues are (s_i + eps)^2 with eigenvectors U. Throws NonPositiveEpsilon.
GaussianFactorization epsilon_regularized_factorization(const SingularTriplet &b, double epsilon,
                                                        double rank_tolerance = kDefaultRankTolerance);

/// B_eps itself.
Matrix epsilon_regularized(const SingularTriplet &b, double epsilon);

} // namespace lemmse
