#include "lemmse/operators.hpp"

#include "lemmse/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lemmse {

namespace {

Index wrap(Index v, Index m) {
  const Index r = v % m;
  return r < 0 ? r + m : r;
}

// Signed periodic distance of index i from 0 on a ring of length m.
Index signed_offset(Index i, Index m) { return i <= m / 2 ? i : i - m; }

void check_limit(Index n, Index dense_limit) {
  if (n > dense_limit) {
    throw Error(ErrorCode::DenseLimitExceeded,
                "dense materialization needs N = " + std::to_string(n) + " <= " + std::to_string(dense_limit));
  }
}

void check_channel(std::span<const double> x, Index n) {
  if (static_cast<Index>(x.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "channel length " + std::to_string(x.size()) + " != " + std::to_string(n));
  }
}

// out[c] = f(in[c]) for every channel.
template <class F> ImageGrid per_channel(const ImageGrid &in, Index height, Index width, F &&f) {
  if (in.height() != height || in.width() != width) {
    throw Error(ErrorCode::ShapeMismatch, "image is " + std::to_string(in.height()) + "x" + std::to_string(in.width()) +
                                              ", operator expects " + std::to_string(height) + "x" +
                                              std::to_string(width));
  }
  ImageGrid out(in.shape());
  for (Index c = 0; c < in.channels(); ++c) {
    const auto r = f(in.channel(c));
    std::copy(r.begin(), r.end(), out.channel(c).begin());
  }
  return out;
}

// Dense circulant matrix with M[i, j] = k[i - j].
Matrix circulant_dense(const std::vector<double> &k, Index height, Index width) {
  const Index n = height * width;
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index ri = i / width, ci = i % width;
    for (Index j = 0; j < n; ++j) {
      const Index d = wrap(ri - j / width, height) * width + wrap(ci - j % width, width);
      m(i, j) = k[static_cast<std::size_t>(d)];
    }
  }
  return m;
}

} // namespace

std::string to_string(OperatorKind kind) {
  switch (kind) {
  case OperatorKind::Identity: return "identity";
  case OperatorKind::InpaintMask: return "inpaint_mask";
  case OperatorKind::CircularConvolution: return "circular_convolution";
  }
  return "unknown";
}

std::string to_string(Structure s) {
  switch (s) {
  case Structure::Identity: return "identity";
  case Structure::Diagonal: return "diagonal";
  case Structure::Circulant: return "circulant";
  case Structure::Dense: return "dense";
  }
  return "unknown";
}

std::string to_string(PreInverseKind kind) {
  switch (kind) {
  case PreInverseKind::Identity: return "identity";
  case PreInverseKind::PseudoInverse: return "pseudo_inverse";
  case PreInverseKind::Tikhonov: return "tikhonov";
  case PreInverseKind::CustomDense: return "custom_dense";
  }
  return "unknown";
}

// ---- forward operators ----

LinearOperator::LinearOperator(OperatorKind kind, Index height, Index width)
    : kind_(kind), height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
}

LinearOperator make_denoising(Index height, Index width) {
  return LinearOperator(OperatorKind::Identity, height, width);
}

LinearOperator make_center_mask(Index height, Index width, Index side) {
  if (side < 0) {
    throw Error(ErrorCode::InvalidArgument, "mask side must be non-negative");
  }
  if (side > std::min(height, width)) {
    throw Error(ErrorCode::SideTooLarge,
                "mask side " + std::to_string(side) + " exceeds min(H, W) = " + std::to_string(std::min(height, width)));
  }
  LinearOperator op(OperatorKind::InpaintMask, height, width);
  op.mask_side_ = side;
  op.mask_.assign(static_cast<std::size_t>(height * width), 1.0);
  const Index top = (height - side) / 2, left = (width - side) / 2;
  for (Index r = top; r < top + side; ++r) {
    for (Index c = left; c < left + side; ++c) {
      op.mask_[static_cast<std::size_t>(r * width + c)] = 0.0;
    }
  }
  return op;
}

LinearOperator make_gaussian_blur(Index height, Index width, double std) {
  if (!(std > 0.0) || !std::isfinite(std)) {
    throw Error(ErrorCode::NonPositiveStd, "blur std must be positive and finite");
  }
  LinearOperator op(OperatorKind::CircularConvolution, height, width);
  op.std_ = std;
  op.kernel_.resize(static_cast<std::size_t>(height * width));
  double total = 0.0;
  for (Index r = 0; r < height; ++r) {
    const double dr = static_cast<double>(signed_offset(r, height));
    for (Index c = 0; c < width; ++c) {
      const double dc = static_cast<double>(signed_offset(c, width));
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * std * std));
      op.kernel_[static_cast<std::size_t>(r * width + c)] = v;
      total += v;
    }
  }
  for (auto &v : op.kernel_) {
    v /= total;
  }
  op.fft_ = Fft2d::get(height, width);
  op.symbol_ = op.fft_->forward(op.kernel_);
  return op;
}

std::vector<double> LinearOperator::apply_channel(std::span<const double> x) const {
  check_channel(x, pixels());
  switch (kind_) {
  case OperatorKind::Identity: return {x.begin(), x.end()};
  case OperatorKind::InpaintMask: {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = mask_[i] * x[i];
    }
    return out;
  }
  case OperatorKind::CircularConvolution: return apply_symbol(*fft_, x, symbol_);
  }
  return {};
}

std::vector<double> LinearOperator::adjoint_channel(std::span<const double> y) const {
  if (kind_ != OperatorKind::CircularConvolution) {
    return apply_channel(y);
  }
  check_channel(y, pixels());
  Spectrum conj_symbol(symbol_.size());
  for (std::size_t k = 0; k < symbol_.size(); ++k) {
    conj_symbol[k] = std::conj(symbol_[k]);
  }
  return apply_symbol(*fft_, y, conj_symbol);
}

ImageGrid LinearOperator::apply(const ImageGrid &x) const {
  return per_channel(x, height_, width_, [&](std::span<const double> ch) { return apply_channel(ch); });
}

ImageGrid LinearOperator::adjoint(const ImageGrid &y) const {
  return per_channel(y, height_, width_, [&](std::span<const double> ch) { return adjoint_channel(ch); });
}

Matrix LinearOperator::dense(Index dense_limit) const {
  check_limit(pixels(), dense_limit);
  switch (kind_) {
  case OperatorKind::Identity: return Matrix::Identity(pixels(), pixels());
  case OperatorKind::InpaintMask: return Eigen::Map<const Vector>(mask_.data(), pixels()).asDiagonal();
  case OperatorKind::CircularConvolution: return circulant_dense(kernel_, height_, width_);
  }
  return {};
}

std::string LinearOperator::describe() const {
  std::ostringstream os;
  os << to_string(kind_) << " " << height_ << "x" << width_;
  if (kind_ == OperatorKind::InpaintMask) {
    os << " side=" << mask_side_;
  } else if (kind_ == OperatorKind::CircularConvolution) {
    os << " std=" << std_;
  }
  return os.str();
}

// ---- covariance model of B B^T ----

Vector CovarianceModel::whiten(std::span<const double> d) const {
  check_channel(d, dim_);
  switch (structure_) {
  case Structure::Identity: return Eigen::Map<const Vector>(d.data(), dim_);
  case Structure::Diagonal: {
    Vector out(dim_);
    for (Index i = 0; i < dim_; ++i) {
      out[i] = scale_[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(i)];
    }
    return out;
  }
  case Structure::Circulant: {
    Spectrum s(scale_.begin(), scale_.end());
    const auto out = apply_symbol(*fft_, d, s);
    return Eigen::Map<const Vector>(out.data(), dim_);
  }
  case Structure::Dense: return dense_->whiten(Eigen::Map<const Vector>(d.data(), dim_));
  }
  return {};
}

double CovarianceModel::residual_sq(std::span<const double> d) const {
  check_channel(d, dim_);
  switch (structure_) {
  case Structure::Identity: return 0.0;
  case Structure::Diagonal: {
    double acc = 0.0;
    for (Index i = 0; i < dim_; ++i) {
      const double v = d[static_cast<std::size_t>(i)];
      acc += off_support_[static_cast<std::size_t>(i)] * v * v;
    }
    return acc;
  }
  case Structure::Circulant: {
    if (rank_ == dim_) {
      return 0.0;
    }
    Spectrum s(off_support_.begin(), off_support_.end());
    const auto out = apply_symbol(*fft_, d, s);
    double acc = 0.0;
    for (double v : out) {
      acc += v * v;
    }
    return acc;
  }
  case Structure::Dense: {
    const double r = dense_->off_support_residual(Eigen::Map<const Vector>(d.data(), dim_));
    return r * r;
  }
  }
  return 0.0;
}

Vector CovarianceModel::off_support_part(std::span<const double> d) const {
  check_channel(d, dim_);
  const Eigen::Map<const Vector> dv(d.data(), dim_);
  switch (structure_) {
  case Structure::Identity: return Vector::Zero(dim_);
  case Structure::Diagonal: return dv.cwiseProduct(Eigen::Map<const Vector>(off_support_.data(), dim_));
  case Structure::Circulant: {
    if (rank_ == dim_) {
      return Vector::Zero(dim_);
    }
    Spectrum s(off_support_.begin(), off_support_.end());
    const auto out = apply_symbol(*fft_, d, s);
    return Eigen::Map<const Vector>(out.data(), dim_);
  }
  case Structure::Dense: {
    const Matrix &u = dense_->basis();
    return dv - u * (u.transpose() * dv);
  }
  }
  return {};
}

// ---- pre-inverses ----

PreInverse::PreInverse(PreInverseKind kind, Structure structure, Index height, Index width)
    : kind_(kind), structure_(structure), height_(height), width_(width) {}

PreInverse make_pre_inverse(PreInverseKind kind, const LinearOperator &forward, std::optional<double> lambda,
                            double rank_tolerance, Index dense_limit) {
  (void)dense_limit;
  const Index H = forward.height(), W = forward.width();
  const auto N = static_cast<std::size_t>(H * W);
  switch (kind) {
  case PreInverseKind::Identity: return PreInverse(kind, Structure::Identity, H, W);
  case PreInverseKind::CustomDense:
    throw Error(ErrorCode::UnsupportedCombination, "custom_dense pre-inverse needs an explicit matrix");
  case PreInverseKind::PseudoInverse:
  case PreInverseKind::Tikhonov: break;
  }
  const bool tikhonov = kind == PreInverseKind::Tikhonov;
  double lam = 0.0;
  if (tikhonov) {
    if (!lambda || !(*lambda > 0.0) || !std::isfinite(*lambda)) {
      throw Error(ErrorCode::InvalidArgument, "tikhonov pre-inverse requires lambda > 0");
    }
    lam = *lambda;
  }
  switch (forward.kind()) {
  case OperatorKind::Identity: {
    if (!tikhonov) {
      return PreInverse(kind, Structure::Identity, H, W);
    }
    PreInverse b(kind, Structure::Diagonal, H, W);
    b.lambda_ = lam;
    b.diagonal_.assign(N, 1.0 / (1.0 + lam));
    return b;
  }
  case OperatorKind::InpaintMask: {
    PreInverse b(kind, Structure::Diagonal, H, W);
    b.lambda_ = lam;
    b.diagonal_.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double m = forward.mask()[i];
      b.diagonal_[i] = tikhonov ? m / (m * m + lam) : m;
      if (m == 0.0) {
        ++b.cutoff_count_;
      }
    }
    if (tikhonov) {
      b.cutoff_count_ = 0;
    }
    return b;
  }
  case OperatorKind::CircularConvolution: {
    PreInverse b(kind, Structure::Circulant, H, W);
    b.lambda_ = lam;
    b.fft_ = Fft2d::get(H, W);
    const Spectrum &a = forward.symbol();
    double amax = 0.0;
    for (const auto &v : a) {
      amax = std::max(amax, std::abs(v));
    }
    b.symbol_.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
      const double mag2 = std::norm(a[k]);
      if (tikhonov) {
        b.symbol_[k] = std::conj(a[k]) / (mag2 + lam);
      } else if (std::abs(a[k]) > rank_tolerance * amax) {
        b.symbol_[k] = std::conj(a[k]) / mag2;
      } else {
        b.symbol_[k] = 0.0;
        ++b.cutoff_count_;
      }
    }
    return b;
  }
  }
  throw Error(ErrorCode::UnsupportedCombination, "no pre-inverse for this operator");
}

PreInverse make_custom_pre_inverse(Matrix b, Index height, Index width) {
  const Index n = height * width;
  if (b.rows() != n || b.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "custom pre-inverse must be N x N with N = H*W");
  }
  if (!b.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "custom pre-inverse has non-finite entries");
  }
  PreInverse p(PreInverseKind::CustomDense, Structure::Dense, height, width);
  p.dense_ = std::move(b);
  return p;
}

std::vector<double> PreInverse::circulant_kernel() const {
  if (structure_ != Structure::Circulant) {
    throw Error(ErrorCode::InvalidArgument, "pre-inverse is not circulant");
  }
  return fft_->inverse_real(symbol_);
}

std::vector<double> PreInverse::apply_channel(std::span<const double> y) const {
  check_channel(y, pixels());
  switch (structure_) {
  case Structure::Identity: return {y.begin(), y.end()};
  case Structure::Diagonal: {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      out[i] = diagonal_[i] * y[i];
    }
    return out;
  }
  case Structure::Circulant: return apply_symbol(*fft_, y, symbol_);
  case Structure::Dense: {
    const Vector out = dense_ * Eigen::Map<const Vector>(y.data(), pixels());
    return {out.data(), out.data() + out.size()};
  }
  }
  return {};
}

ImageGrid PreInverse::apply(const ImageGrid &y) const {
  return per_channel(y, height_, width_, [&](std::span<const double> ch) { return apply_channel(ch); });
}

Matrix PreInverse::dense(Index dense_limit) const {
  switch (structure_) {
  case Structure::Identity: check_limit(pixels(), dense_limit); return Matrix::Identity(pixels(), pixels());
  case Structure::Diagonal:
    check_limit(pixels(), dense_limit);
    return Eigen::Map<const Vector>(diagonal_.data(), pixels()).asDiagonal();
  case Structure::Circulant: check_limit(pixels(), dense_limit); return circulant_dense(circulant_kernel(), height_, width_);
  case Structure::Dense: return dense_;
  }
  return {};
}

Matrix PreInverse::rows(const std::vector<Index> &window, Index dense_limit) const {
  (void)dense_limit;
  const Index n = pixels();
  const auto p = static_cast<Index>(window.size());
  Matrix q = Matrix::Zero(p, n);
  switch (structure_) {
  case Structure::Identity:
    for (Index a = 0; a < p; ++a) {
      q(a, window[static_cast<std::size_t>(a)]) = 1.0;
    }
    break;
  case Structure::Diagonal:
    for (Index a = 0; a < p; ++a) {
      const Index i = window[static_cast<std::size_t>(a)];
      q(a, i) = diagonal_[static_cast<std::size_t>(i)];
    }
    break;
  case Structure::Circulant: {
    const auto k = circulant_kernel();
    for (Index a = 0; a < p; ++a) {
      const Index i = window[static_cast<std::size_t>(a)];
      const Index ri = i / width_, ci = i % width_;
      for (Index j = 0; j < n; ++j) {
        q(a, j) = k[static_cast<std::size_t>(wrap(ri - j / width_, height_) * width_ + wrap(ci - j % width_, width_))];
      }
    }
    break;
  }
  case Structure::Dense:
    for (Index a = 0; a < p; ++a) {
      q.row(a) = dense_.row(window[static_cast<std::size_t>(a)]);
    }
    break;
  }
  return q;
}

CovarianceModel PreInverse::covariance(double rank_tolerance, Index dense_limit) const {
  CovarianceModel m;
  m.structure_ = structure_;
  m.dim_ = pixels();
  const auto n = static_cast<std::size_t>(pixels());
  // Diagonal and circulant share the same spectral bookkeeping.
  auto spectral = [&](const std::vector<double> &mag) {
    const double top = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
    m.scale_.assign(n, 0.0);
    m.off_support_.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double lam = mag[i] * mag[i];
      if (top > 0.0 && lam > rank_tolerance * top * top) {
        m.scale_[i] = 1.0 / mag[i];
        m.off_support_[i] = 0.0;
        m.log_pseudo_det_ += std::log(lam);
        ++m.rank_;
      }
    }
  };
  switch (structure_) {
  case Structure::Identity: m.rank_ = m.dim_; break;
  case Structure::Diagonal: {
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) {
      mag[i] = std::abs(diagonal_[i]);
    }
    spectral(mag);
    break;
  }
  case Structure::Circulant: {
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) {
      mag[i] = std::abs(symbol_[i]);
    }
    spectral(mag);
    m.fft_ = fft_;
    break;
  }
  case Structure::Dense: {
    check_limit(pixels(), dense_limit);
    auto f = std::make_shared<GaussianFactorization>(GaussianFactorization::from_factor(dense_, rank_tolerance));
    m.rank_ = f->rank();
    m.log_pseudo_det_ = f->log_pseudo_det();
    m.dense_ = std::move(f);
    break;
  }
  }
  return m;
}

std::string PreInverse::describe() const {
  std::ostringstream os;
  os << to_string(kind_) << " (" << to_string(structure_) << ")";
  if (kind_ == PreInverseKind::Tikhonov) {
    os << " lambda=" << lambda_;
  }
  if (cutoff_count_ > 0) {
    os << " cutoff=" << cutoff_count_;
  }
  return os.str();
}

// ---- per-pixel Q_n ----

ImageGrid QMatrices::mean_image(const LinearOperator &forward, const PreInverse &pre, const ImageGrid &x) const {
  return pre.apply(forward.apply(x));
}

QMatrices build_q_matrices(const PreInverse &pre, const PatchGeometry &geom, Index channels, double rank_tolerance,
                           Index dense_limit) {
  if (channels <= 0) {
    throw Error(ErrorCode::InvalidArgument, "channel count must be positive");
  }
  const Index H = pre.height(), W = pre.width(), N = H * W, P = geom.size();
  QMatrices q(geom, channels);
  q.class_of_.assign(static_cast<std::size_t>(N), 0);

  auto add_class = [&](const Matrix &factor) {
    CovarianceClass cls{GaussianFactorization::from_factor(factor, rank_tolerance).block_diagonal(channels), {}};
    q.classes_.push_back(std::move(cls));
    return static_cast<Index>(q.classes_.size() - 1);
  };

  switch (pre.structure()) {
  case Structure::Identity:
  case Structure::Circulant: {
    const Matrix q0 = pre.structure() == Structure::Identity ? Matrix(Matrix::Identity(P, P))
                                                             : pre.rows(geom.window(0, H, W), dense_limit);
    add_class(q0);
    break;
  }
  case Structure::Diagonal: {
    std::map<std::vector<double>, Index> seen;
    for (Index n = 0; n < N; ++n) {
      const auto win = geom.window(n, H, W);
      std::vector<double> key(static_cast<std::size_t>(P));
      for (Index a = 0; a < P; ++a) {
        key[static_cast<std::size_t>(a)] = pre.diagonal()[static_cast<std::size_t>(win[static_cast<std::size_t>(a)])];
      }
      auto it = seen.find(key);
      if (it == seen.end()) {
        const Matrix d = Eigen::Map<const Vector>(key.data(), P).asDiagonal();
        it = seen.emplace(std::move(key), add_class(d)).first;
      }
      q.class_of_[static_cast<std::size_t>(n)] = it->second;
    }
    break;
  }
  case Structure::Dense: {
    check_limit(N, dense_limit);
    std::map<std::vector<double>, Index> seen;
    for (Index n = 0; n < N; ++n) {
      const Matrix qn = pre.rows(geom.window(n, H, W), dense_limit);
      const Matrix gram = qn * qn.transpose();
      std::vector<double> key(gram.data(), gram.data() + gram.size());
      auto it = seen.find(key);
      if (it == seen.end()) {
        it = seen.emplace(std::move(key), add_class(qn)).first;
      }
      q.class_of_[static_cast<std::size_t>(n)] = it->second;
    }
    break;
  }
  }

  q.strata_.rank.resize(static_cast<std::size_t>(N));
  for (Index n = 0; n < N; ++n) {
    auto &cls = q.classes_[static_cast<std::size_t>(q.class_of_[static_cast<std::size_t>(n)])];
    cls.pixels.push_back(n);
    const Index r = cls.factor.rank();
    q.strata_.rank[static_cast<std::size_t>(n)] = r;
    q.strata_.strata[r].push_back(n);
  }
  return q;
}

bool on_support(const Vector &v, const GaussianFactorization &factor, double support_tolerance) {
  return factor.off_support_residual(v) <= support_tolerance * (1.0 + v.norm());
}

StratumChoice stratum_of(const Vector &v, const QMatrices &q, double support_tolerance) {
  if (v.size() != q.patch_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "patch vector length does not match C*P");
  }
  StratumChoice choice;
  bool found = false;
  const auto &classes = q.classes();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const Index r = classes[c].factor.rank();
    if (found && r > choice.rank) {
      continue;
    }
    if (!on_support(v, classes[c].factor, support_tolerance)) {
      continue;
    }
    if (!found || r < choice.rank) {
      choice.rank = r;
      choice.classes.clear();
      found = true;
    }
    choice.classes.push_back(static_cast<Index>(c));
  }
  if (!found) {
    throw Error(ErrorCode::EmptyStratum, "patch lies off the support of every Q_n");
  }
  for (Index c : choice.classes) {
    const auto &px = classes[static_cast<std::size_t>(c)].pixels;
    choice.pixels.insert(choice.pixels.end(), px.begin(), px.end());
  }
  std::sort(choice.pixels.begin(), choice.pixels.end());
  return choice;
}

} // namespace lemmse
