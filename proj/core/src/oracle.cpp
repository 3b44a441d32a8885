#include "lemmse/oracle.hpp"

#include "lemmse/error.hpp"

#include <Eigen/SVD>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lemmse {

namespace {

void check_size(Index n) {
  if (n > kOracleLimit) {
    throw Error(ErrorCode::SizeLimitExceeded,
                "oracle handles N <= " + std::to_string(kOracleLimit) + ", got " + std::to_string(n));
  }
}

// I_C (x) M
Matrix lift(const Matrix &m, Index channels) {
  Matrix out = Matrix::Zero(m.rows() * channels, m.cols() * channels);
  for (Index c = 0; c < channels; ++c) {
    out.block(c * m.rows(), c * m.cols(), m.rows(), m.cols()) = m;
  }
  return out;
}

// Weighted mean of `values` with weights exp(logs), single pass after the max.
Vector softmax_mean(const std::vector<double> &logs, const std::vector<Vector> &values) {
  const double top = *std::max_element(logs.begin(), logs.end());
  if (top == -std::numeric_limits<double>::infinity()) {
    throw Error(ErrorCode::AllWeightsOffSupport, "every component is off support");
  }
  Vector acc = Vector::Zero(values.front().size());
  double total = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double w = std::exp(logs[i] - top);
    total += w;
    acc += w * values[i];
  }
  return acc / total;
}

void check_problem(const DenseProblem &p, const Vector &y) {
  check_size(p.pixels());
  if (y.size() != p.channels * p.pixels()) {
    throw Error(ErrorCode::ShapeMismatch, "measurement length does not match C*N");
  }
  if (p.dataset.empty()) {
    throw Error(ErrorCode::InvalidArgument, "empty dataset");
  }
}

// Whole-image mixture with components (mean_i, value_i) around z.
Vector whole_image_mixture(const DenseProblem &p, const Vector &z, const std::vector<Vector> &means,
                           const std::vector<Vector> &values, const OracleOptions &opts) {
  const GaussianFactorization unit = GaussianFactorization::from_factor(p.B, opts.rank_tolerance).block_diagonal(p.channels);
  if (p.sigma < opts.sigma_floor) {
    return zero_noise_limit(z, means, values, unit, opts.support_tolerance, opts.tie_tolerance);
  }
  const GaussianFactorization fac = unit.scaled(p.sigma * p.sigma);
  std::vector<double> logs;
  for (const auto &m : means) {
    logs.push_back(log_density(z, m, fac, opts.support_tolerance));
  }
  return softmax_mean(logs, values);
}

} // namespace

Matrix translation_matrix(Translation g, Index height, Index width) {
  const Index n = height * width;
  Matrix t = Matrix::Zero(n, n);
  const Translation back = inverse(g, height, width);
  for (Index i = 0; i < n; ++i) {
    t(i, shift_index(i, back, height, width)) = 1.0;
  }
  return t;
}

DenseProblem make_dense_problem(const LinearOperator &A, const Matrix &B, const Dataset &d, double sigma) {
  const Index H = A.height(), W = A.width(), N = H * W;
  check_size(N);
  if (B.rows() != N || B.cols() != N) {
    throw Error(ErrorCode::ShapeMismatch, "B must be N x N");
  }
  if (d.shape().height != H || d.shape().width != W) {
    throw Error(ErrorCode::ShapeMismatch, "dataset grid does not match the operator");
  }
  DenseProblem p;
  p.height = H;
  p.width = W;
  p.channels = d.shape().channels;
  p.sigma = sigma;
  p.A = Matrix::Zero(N, N);
  switch (A.kind()) {
  case OperatorKind::Identity: p.A.setIdentity(); break;
  case OperatorKind::InpaintMask:
    for (Index i = 0; i < N; ++i) {
      p.A(i, i) = A.mask()[static_cast<std::size_t>(i)];
    }
    break;
  case OperatorKind::CircularConvolution:
    // (A x)[i] = sum_j k[i - j] x[j]
    for (Index i = 0; i < N; ++i) {
      for (Index j = 0; j < N; ++j) {
        const Index dr = ((i / W - j / W) % H + H) % H;
        const Index dc = ((i % W - j % W) % W + W) % W;
        p.A(i, j) = A.kernel()[static_cast<std::size_t>(dr * W + dc)];
      }
    }
    break;
  }
  p.B = B;
  for (const auto &x : d.items()) {
    p.dataset.push_back(x.values());
  }
  return p;
}

DenseProblem make_dense_problem(const LinearOperator &A, PreInverseKind kind, std::optional<double> lambda,
                                const Dataset &d, double sigma, const OracleOptions &opts) {
  const Index N = A.pixels();
  check_size(N);
  DenseProblem p = make_dense_problem(A, Matrix::Identity(N, N), d, sigma);
  switch (kind) {
  case PreInverseKind::Identity: break;
  case PreInverseKind::PseudoInverse: {
    Eigen::JacobiSVD<Matrix> svd(p.A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector s = svd.singularValues();
    Vector inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
      if (s[i] > opts.rank_tolerance * s[0]) {
        inv[i] = 1.0 / s[i];
      }
    }
    p.B = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    break;
  }
  case PreInverseKind::Tikhonov: {
    if (!lambda || !(*lambda > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "tikhonov pre-inverse requires lambda > 0");
    }
    const Matrix gram = p.A * p.A.transpose() + *lambda * Matrix::Identity(N, N);
    p.B = p.A.transpose() * gram.inverse();
    break;
  }
  case PreInverseKind::CustomDense:
    throw Error(ErrorCode::UnsupportedCombination, "custom_dense pre-inverse needs an explicit matrix");
  }
  return p;
}

Vector oracle_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts) {
  check_problem(p, y);
  const Matrix A = lift(p.A, p.channels), B = lift(p.B, p.channels);
  const Vector z = B * y;
  std::vector<Vector> means;
  for (const auto &x : p.dataset) {
    means.push_back(B * (A * x));
  }
  return whole_image_mixture(p, z, means, p.dataset, opts);
}

Vector oracle_augmented_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts) {
  check_problem(p, y);
  const Matrix A = lift(p.A, p.channels), B = lift(p.B, p.channels);
  const Vector z = B * y;
  std::vector<Vector> means, values;
  for (const auto &x : p.dataset) {
    for (Index g = 0; g < p.pixels(); ++g) {
      const Matrix T = lift(translation_matrix(translation_from_index(g, p.height, p.width), p.height, p.width), p.channels);
      const Vector xg = T * x;
      means.push_back(B * (A * xg));
      values.push_back(xg);
    }
  }
  return whole_image_mixture(p, z, means, values, opts);
}

Vector oracle_e_mmse(const DenseProblem &p, const Vector &y, const OracleOptions &opts) {
  check_problem(p, y);
  const Matrix A = lift(p.A, p.channels), B = lift(p.B, p.channels);
  const Vector z = B * y;
  const GaussianFactorization unit = GaussianFactorization::from_factor(p.B, opts.rank_tolerance).block_diagonal(p.channels);
  const bool zero = p.sigma < opts.sigma_floor;
  const GaussianFactorization fac = zero ? unit : unit.scaled(p.sigma * p.sigma);
  NearestAccumulator near(z.size(), opts.tie_tolerance);
  std::vector<double> logs;
  std::vector<Vector> values;
  for (const auto &x : p.dataset) {
    const Vector m = B * (A * x);
    for (Index g = 0; g < p.pixels(); ++g) {
      const Matrix T = lift(translation_matrix(translation_from_index(g, p.height, p.width), p.height, p.width), p.channels);
      const Vector u = T.transpose() * z;
      const Vector xg = T * x;
      if (zero) {
        if (std::isfinite(log_density(u, m, unit, opts.support_tolerance))) {
          near.accumulate(mahalanobis_sq(u, m, unit), xg);
        }
        continue;
      }
      logs.push_back(log_density(u, m, fac, opts.support_tolerance));
      values.push_back(xg);
    }
  }
  return zero ? near.finalize() : softmax_mean(logs, values);
}

Vector oracle_le_mmse(const DenseProblem &p, const Vector &y, const PatchGeometry &geom, const OracleOptions &opts) {
  check_problem(p, y);
  const Index C = p.channels, N = p.pixels(), P = geom.size();
  const Matrix A = lift(p.A, C), B = lift(p.B, C);
  const bool zero = p.sigma < opts.sigma_floor;

  // Q_n = Pi_n B with Pi_n selecting the C*P window entries.
  std::vector<Matrix> Q(static_cast<std::size_t>(N));
  std::vector<GaussianFactorization> unit(static_cast<std::size_t>(N));
  for (Index n = 0; n < N; ++n) {
    const auto win = geom.window(n, p.height, p.width);
    Matrix sel = Matrix::Zero(C * P, C * N);
    for (Index c = 0; c < C; ++c) {
      for (Index a = 0; a < P; ++a) {
        sel(c * P + a, c * N + win[static_cast<std::size_t>(a)]) = 1.0;
      }
    }
    Q[static_cast<std::size_t>(n)] = sel * B;
    unit[static_cast<std::size_t>(n)] = GaussianFactorization::from_factor(Q[static_cast<std::size_t>(n)], opts.rank_tolerance);
  }
  std::vector<std::vector<Vector>> ax(p.dataset.size());
  for (std::size_t i = 0; i < p.dataset.size(); ++i) {
    const Vector a = A * p.dataset[i];
    for (Index n = 0; n < N; ++n) {
      ax[i].push_back(Q[static_cast<std::size_t>(n)] * a);
    }
  }

  Vector out(C * N);
  for (Index np = 0; np < N; ++np) {
    const Vector v = Q[static_cast<std::size_t>(np)] * y;
    Index best = std::numeric_limits<Index>::max();
    std::vector<char> on(static_cast<std::size_t>(N), 0);
    for (Index n = 0; n < N; ++n) {
      const auto &f = unit[static_cast<std::size_t>(n)];
      if (f.off_support_residual(v) <= opts.support_tolerance * (1.0 + v.norm())) {
        on[static_cast<std::size_t>(n)] = 1;
        best = std::min(best, f.rank());
      }
    }
    if (best == std::numeric_limits<Index>::max()) {
      throw Error(ErrorCode::EmptyStratum, "query patch lies off every support");
    }
    std::vector<double> logs;
    std::vector<Vector> values;
    NearestAccumulator near(C, opts.tie_tolerance);
    for (Index n = 0; n < N; ++n) {
      const auto &f = unit[static_cast<std::size_t>(n)];
      if (!on[static_cast<std::size_t>(n)] || f.rank() != best) {
        continue;
      }
      const GaussianFactorization fs = zero ? f : f.scaled(p.sigma * p.sigma);
      for (std::size_t i = 0; i < p.dataset.size(); ++i) {
        const Vector &m = ax[i][static_cast<std::size_t>(n)];
        Vector value(C);
        for (Index c = 0; c < C; ++c) {
          value[c] = p.dataset[i][c * N + n];
        }
        const double l = log_density(v, m, fs, opts.support_tolerance);
        if (zero) {
          if (std::isfinite(l)) {
            near.accumulate(mahalanobis_sq(v, m, f), value);
          }
          continue;
        }
        logs.push_back(l);
        values.push_back(std::move(value));
      }
    }
    const Vector px = zero ? near.finalize() : softmax_mean(logs, values);
    for (Index c = 0; c < C; ++c) {
      out[c * N + np] = px[c];
    }
  }
  return out;
}

std::vector<EpsilonGap> oracle_epsilon_limit(const DenseProblem &p, const Vector &y, const PatchGeometry &geom,
                                             const std::vector<double> &epsilons, const OracleOptions &opts) {
  if (epsilons.empty()) {
    throw Error(ErrorCode::InvalidArgument, "epsilon list is empty");
  }
  check_problem(p, y);
  const Vector reference = oracle_le_mmse(p, y, geom, opts);
  const SingularTriplet triplet = SingularTriplet::of(p.B);
  // The lifted B is full rank by construction; a relative rank cutoff would
  // drop the eps^2 directions unevenly across windows once eps^2 < tol.
  OracleOptions full = opts;
  full.rank_tolerance = 0.0;
  std::vector<EpsilonGap> out;
  for (double eps : epsilons) {
    DenseProblem lifted = p;
    lifted.B = epsilon_regularized(triplet, eps);
    const Vector xe = oracle_le_mmse(lifted, y, geom, full);
    out.push_back({eps, (xe - reference).cwiseAbs().maxCoeff()});
  }
  return out;
}

} // namespace lemmse
