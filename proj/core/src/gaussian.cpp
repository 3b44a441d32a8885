#include "lemmse/gaussian.hpp"

#include "lemmse/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lemmse {

namespace {

// Keeps the leading columns whose eigenvalue passes the relative cutoff.
// Eigenvalues must already be sorted in descending order.
GaussianFactorization truncate(const Matrix &vectors, const Vector &values, double rank_tolerance) {
  Index r = 0;
  if (values.size() > 0 && values[0] > 0.0) {
    const double cutoff = rank_tolerance * values[0];
    while (r < values.size() && values[r] > cutoff) {
      ++r;
    }
  }
  return GaussianFactorization(vectors.leftCols(r), values.head(r), rank_tolerance);
}

} // namespace

GaussianFactorization::GaussianFactorization(Matrix basis, Vector eigenvalues, double rank_tolerance)
    : basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)), rank_tolerance_(rank_tolerance) {
  if (basis_.cols() != eigenvalues_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "basis columns must match eigenvalue count");
  }
  log_pseudo_det_ = eigenvalues_.array().log().sum();
  whitening_ = eigenvalues_.array().rsqrt().matrix().asDiagonal() * basis_.transpose();
}

GaussianFactorization GaussianFactorization::from_factor(const Matrix &factor, double rank_tolerance) {
  if (factor.rows() == 0) {
    return GaussianFactorization(Matrix(0, 0), Vector(0), rank_tolerance);
  }
  if (factor.cols() == 0) {
    return GaussianFactorization(Matrix(factor.rows(), 0), Vector(0), rank_tolerance);
  }
  Eigen::JacobiSVD<Matrix> svd(factor, Eigen::ComputeThinU);
  const Vector lambda = svd.singularValues().array().square().matrix();
  return truncate(svd.matrixU(), lambda, rank_tolerance);
}

Vector GaussianFactorization::whiten(const Vector &v) const {
  if (v.size() != dim()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match factorization dimension");
  }
  return whitening_ * v;
}

double GaussianFactorization::off_support_residual(const Vector &v) const {
  if (v.size() != dim()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match factorization dimension");
  }
  if (rank() == 0) {
    return v.norm();
  }
  const Vector coeff = basis_.transpose() * v;
  return (v - basis_ * coeff).norm();
}

GaussianFactorization GaussianFactorization::scaled(double s) const {
  if (!(s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "covariance scale must be positive");
  }
  return GaussianFactorization(basis_, eigenvalues_ * s, rank_tolerance_);
}

GaussianFactorization GaussianFactorization::block_diagonal(Index copies) const {
  if (copies == 1) {
    return *this;
  }
  const Index d = dim(), r = rank();
  Matrix basis = Matrix::Zero(d * copies, r * copies);
  Vector values(r * copies);
  for (Index c = 0; c < copies; ++c) {
    basis.block(c * d, c * r, d, r) = basis_;
    values.segment(c * r, r) = eigenvalues_;
  }
  // Keep descending order across blocks so the invariant on lambda_1 holds.
  std::vector<Index> order(static_cast<std::size_t>(r * copies));
  for (Index i = 0; i < r * copies; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });
  Matrix sorted_basis(d * copies, r * copies);
  Vector sorted_values(r * copies);
  for (Index i = 0; i < r * copies; ++i) {
    sorted_basis.col(i) = basis.col(order[static_cast<std::size_t>(i)]);
    sorted_values[i] = values[order[static_cast<std::size_t>(i)]];
  }
  return GaussianFactorization(std::move(sorted_basis), std::move(sorted_values), rank_tolerance_);
}

Matrix GaussianFactorization::covariance() const { return basis_ * eigenvalues_.asDiagonal() * basis_.transpose(); }

GaussianFactorization factorize(const Matrix &cov, double rank_tolerance) {
  if (cov.rows() != cov.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance must be square");
  }
  const Index d = cov.rows();
  if (d == 0) {
    return GaussianFactorization(Matrix(0, 0), Vector(0), rank_tolerance);
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::NonSymmetric, "covariance is not symmetric within 1e-10 relative");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()));
  // Eigen returns ascending order.
  const Vector asc = eig.eigenvalues();
  const double lambda_max = asc[d - 1];
  const double negative_floor = -std::max(rank_tolerance, 1e-12) * std::max(lambda_max, 0.0) * 10.0;
  if (asc[0] < negative_floor || (lambda_max <= 0.0 && asc[0] < -1e-300)) {
    throw Error(ErrorCode::NegativeEigenvalueBeyondTolerance, "covariance has a negative eigenvalue beyond tolerance");
  }
  const Vector values = asc.reverse();
  const Matrix vectors = eig.eigenvectors().rowwise().reverse();
  return truncate(vectors, values, rank_tolerance);
}

double mahalanobis_sq(const Vector &v, const Vector &mean, const GaussianFactorization &fac) {
  if (v.size() != fac.dim() || mean.size() != fac.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match factorization dimension");
  }
  if (fac.rank() == 0) {
    return 0.0;
  }
  return fac.whiten(v - mean).squaredNorm();
}

double log_density(const Vector &v, const Vector &mean, const GaussianFactorization &fac, double support_tolerance) {
  if (v.size() != fac.dim() || mean.size() != fac.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length does not match factorization dimension");
  }
  const Vector diff = v - mean;
  if (fac.off_support_residual(diff) > support_tolerance * (1.0 + diff.norm())) {
    return -std::numeric_limits<double>::infinity();
  }
  const double r = static_cast<double>(fac.rank());
  const double quad = fac.rank() == 0 ? 0.0 : fac.whiten(diff).squaredNorm();
  return -0.5 * r * std::log(2.0 * std::numbers::pi) - 0.5 * fac.log_pseudo_det() - 0.5 * quad;
}

SingularTriplet SingularTriplet::of(const Matrix &b) {
  // Symmetric positive semi-definite operators (masks, symmetric blurs) get
  // U = V so that lifting the zero singular values stays symmetric.
  if (b.rows() == b.cols() && b.rows() > 0) {
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    if ((b - b.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(b);
      const Vector asc = eig.eigenvalues();
      if (asc[0] >= -1e-14 * scale) {
        SingularTriplet t;
        t.s = asc.reverse().cwiseMax(0.0);
        t.u = eig.eigenvectors().rowwise().reverse();
        t.v = t.u;
        return t;
      }
    }
  }
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SingularTriplet t;
  t.u = svd.matrixU();
  t.v = svd.matrixV();
  const Index k = std::min(b.rows(), b.cols());
  t.s = svd.singularValues().head(k);
  if (t.u.cols() > k) {
    t.u = t.u.leftCols(k).eval();
  }
  if (t.v.cols() > k) {
    t.v = t.v.leftCols(k).eval();
  }
  return t;
}

GaussianFactorization epsilon_regularized_factorization(const SingularTriplet &b, double epsilon, double rank_tolerance) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be positive");
  }
  const Vector lifted = (b.s.array() + epsilon).square().matrix();
  // Every direction has variance >= eps^2, so nothing is truncated here.
  return GaussianFactorization(b.u, lifted, rank_tolerance);
}

Matrix epsilon_regularized(const SingularTriplet &b, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be positive");
  }
  const Vector lifted = b.s.array() + epsilon;
  return b.u * lifted.asDiagonal() * b.v.transpose();
}

} // namespace lemmse
