#pragma once

#include "lemmse/estimators.hpp"

#include <optional>
#include <vector>

namespace lemmse {

inline constexpr Index kOracleLimit = 256;

/// Dense single-channel matrices plus the dataset as flat (channel, row, col)
/// vectors. Every channel sees the same A and B.
struct DenseProblem {
  Matrix A; ///< N x N
  Matrix B; ///< N x N
  std::vector<Vector> dataset;
  Index channels = 1;
  Index height = 1;
  Index width = 1;
  double sigma = 0.0;

  Index pixels() const { return height * width; }
};

struct OracleOptions {
  double rank_tolerance = kDefaultRankTolerance;
  double support_tolerance = kDefaultSupportTolerance;
  double sigma_floor = kSigmaFloor;
  double tie_tolerance = kTieTolerance;
};

/// Builds A entry by entry from the operator definition and B independently
/// of PreInverse: pseudo-inverses from an SVD of dense A with the same
/// relative cutoff, Tikhonov as A^T (A A^T + lambda I)^-1.
DenseProblem make_dense_problem(const LinearOperator &A, PreInverseKind kind, std::optional<double> lambda,
                                const Dataset &d, double sigma, const OracleOptions &opts = {});
/// Uses B as given.
DenseProblem make_dense_problem(const LinearOperator &A, const Matrix &B, const Dataset &d, double sigma);

Vector oracle_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts = {});
/// MMSE over the materialized orbit {T_g x}.
Vector oracle_augmented_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts = {});
Vector oracle_e_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts = {});
Vector oracle_le_mmse(const DenseProblem &p, const Vector &y, const PatchGeometry &geom, const OracleOptions &opts = {});

struct EpsilonGap {
  double epsilon = 0.0;
  double gap = 0.0; ///< max |x_eps - x_stratified|
};

/// LE-MMSE with B replaced by U (S + eps) V^T, against the stratified estimator.
std::vector<EpsilonGap> oracle_epsilon_limit(const DenseProblem &p, const Vector &y, const PatchGeometry &geom,
                                             const std::vector<double> &epsilons, const OracleOptions &opts = {});

/// Dense permutation matrix of T_g on an H x W grid.
Matrix translation_matrix(Translation g, Index height, Index width);

} // namespace lemmse
