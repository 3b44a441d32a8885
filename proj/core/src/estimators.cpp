#include "lemmse/estimators.hpp"

#include "lemmse/error.hpp"
#include "lemmse/fft.hpp"
#include "lemmse/parallel.hpp"
#include "lemmse/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace lemmse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Chunk {
  std::size_t begin;
  std::size_t end;
};

int worker_count(const EstimatorOptions &o) { return o.threads > 0 ? o.threads : default_thread_count(); }

// Contiguous dataset chunks. The count depends only on the options, so the
// merge tree is fixed for a given configuration.
std::vector<Chunk> make_chunks(std::size_t count, const EstimatorOptions &o) {
  std::size_t k = o.deterministic ? static_cast<std::size_t>(std::max<Index>(1, o.deterministic_chunks))
                                  : static_cast<std::size_t>(worker_count(o));
  k = std::clamp<std::size_t>(k, 1, std::max<std::size_t>(count, 1));
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({count * i / k, count * (i + 1) / k});
  }
  return out;
}

void check_inputs(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d) {
  if (!(y.shape() == d.shape())) {
    throw Error(ErrorCode::ShapeMismatch, "measurement and dataset shapes differ");
  }
  if (A.height() != y.height() || A.width() != y.width() || B.height() != y.height() || B.width() != y.width()) {
    throw Error(ErrorCode::ShapeMismatch, "operator grid does not match the measurement");
  }
  if (!y.all_finite()) {
    throw Error(ErrorCode::InvalidArgument, "measurement has non-finite values");
  }
}

void check_noise(NoiseModel noise) {
  if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma)) {
    throw Error(ErrorCode::InvalidArgument, "sigma must be finite and non-negative");
  }
}

// ---------------------------------------------------------------------------
// Whole-image mixtures (MMSE, augmented MMSE, E-MMSE)

struct GlobalSetup {
  bool zero = false;
  double sigma = 0.0;
  double log_const = 0.0;
  double support_tolerance = kDefaultSupportTolerance;
};

GlobalSetup global_setup(const CovarianceModel &cov, Index channels, NoiseModel noise, const EstimatorOptions &o) {
  GlobalSetup s;
  s.zero = noise.zero_noise(o.sigma_floor);
  s.sigma = noise.sigma;
  s.support_tolerance = o.support_tolerance;
  if (!s.zero) {
    const double r = static_cast<double>(channels * cov.rank());
    s.log_const = -0.5 * r * std::log(2.0 * std::numbers::pi * noise.sigma * noise.sigma) -
                  0.5 * static_cast<double>(channels) * cov.log_pseudo_det();
  }
  return s;
}

struct GlobalState {
  WeightedMeanAccumulator acc;
  NearestAccumulator near;
  TopK top;
  std::int64_t on_support = 0;

  GlobalState(Index dim, const EstimatorOptions &o) : acc(dim), near(dim, o.tie_tolerance), top(o.top_k) {}

  void merge(const GlobalState &other) {
    acc.merge(other.acc);
    near.merge(other.near);
    top.merge(other.top);
    on_support += other.on_support;
  }

  void insert(const GlobalSetup &s, double maha, const double *value, Index image, Index source) {
    ++on_support;
    if (s.zero) {
      near.accumulate(maha, value, 1, image, source);
      return;
    }
    const double l = s.log_const - 0.5 * maha / (s.sigma * s.sigma);
    acc.accumulate(l, value, 1);
    if (top.enabled() && l > top.threshold()) {
      top.push({l, image, source});
    }
  }
};

// Support test and Mahalanobis form of a whole-image difference.
struct Distance {
  bool on_support;
  double maha;
};

Distance whole_image_distance(const CovarianceModel &cov, const ImageGrid &diff, double tol) {
  double res = 0.0, maha = 0.0;
  for (Index c = 0; c < diff.channels(); ++c) {
    res += cov.residual_sq(diff.channel(c));
    maha += cov.whiten(diff.channel(c)).squaredNorm();
  }
  const double dn = diff.values().norm();
  return {std::sqrt(res) <= tol * (1.0 + dn), maha};
}

EstimateReport finish_global(std::vector<GlobalState> &states, const Shape &shape, const GlobalSetup &s,
                             std::string path) {
  GlobalState &total = states.front();
  for (std::size_t i = 1; i < states.size(); ++i) {
    total.merge(states[i]);
  }
  EstimateReport r;
  r.zero_noise = s.zero;
  r.on_support_components = total.on_support;
  r.path = std::move(path);
  std::vector<WeightEntry> entries;
  if (s.zero) {
    r.reconstruction = ImageGrid(shape, total.near.finalize());
    r.per_pixel_log_normalizer = {kNaN};
    if (total.top.enabled()) {
      for (const auto &c : total.near.winners()) {
        entries.push_back({c.image, c.source, std::exp(c.log_weight)});
      }
    }
  } else {
    r.reconstruction = ImageGrid(shape, total.acc.finalize());
    const double lz = total.acc.log_normalizer();
    r.per_pixel_log_normalizer = {lz};
    for (const auto &c : total.top.sorted()) {
      entries.push_back({c.image, c.source, std::exp(c.log_weight - lz)});
    }
  }
  if (total.top.enabled()) {
    r.top_k_weights.push_back(std::move(entries));
  }
  return r;
}

// Mixture over (x, g) with Mahalanobis terms ||W z - T_g W m_x||^2, i.e. a
// whitening that commutes with translations. One cross-correlation per image
// and channel gives every g at once; the weighted sum of T_g x is a circular
// convolution of the weights with x.
void translation_mixture_fft(GlobalState &st, const GlobalSetup &s, const ImageGrid &z, const CovarianceModel &cov,
                             const LinearOperator &A, const PreInverse &B, const Dataset &d, Chunk ch) {
  const Index C = z.channels(), H = z.height(), W = z.width(), N = H * W;
  const auto fft = Fft2d::get(H, W);
  const bool check_support = cov.rank() < cov.dim();
  std::vector<Vector> wz(static_cast<std::size_t>(C)), rz(static_cast<std::size_t>(C));
  double wz2 = 0.0, rz2 = 0.0;
  for (Index c = 0; c < C; ++c) {
    wz[static_cast<std::size_t>(c)] = cov.whiten(z.channel(c));
    wz2 += wz[static_cast<std::size_t>(c)].squaredNorm();
    if (check_support) {
      rz[static_cast<std::size_t>(c)] = cov.off_support_part(z.channel(c));
      rz2 += rz[static_cast<std::size_t>(c)].squaredNorm();
    }
  }
  const double z2 = z.values().squaredNorm();
  auto span_of = [](const Vector &v) { return std::span<const double>(v.data(), static_cast<std::size_t>(v.size())); };

  std::vector<double> maha(static_cast<std::size_t>(N)), logw(static_cast<std::size_t>(N));
  std::vector<char> support(static_cast<std::size_t>(N), 1);
  for (std::size_t id = ch.begin; id < ch.end; ++id) {
    const ImageGrid &x = d[id];
    const ImageGrid m = B.apply(A.apply(x));
    std::fill(maha.begin(), maha.end(), 0.0);
    double wm2 = 0.0;
    for (Index c = 0; c < C; ++c) {
      const Vector wm = cov.whiten(m.channel(c));
      wm2 += wm.squaredNorm();
      const auto corr = cross_correlate(*fft, span_of(wz[static_cast<std::size_t>(c)]), span_of(wm));
      for (Index g = 0; g < N; ++g) {
        maha[static_cast<std::size_t>(g)] -= 2.0 * corr[static_cast<std::size_t>(g)];
      }
    }
    for (auto &v : maha) {
      v = std::max(0.0, v + wz2 + wm2);
    }
    if (check_support) {
      std::vector<double> res(static_cast<std::size_t>(N), rz2), dist(static_cast<std::size_t>(N), z2);
      const double m2 = m.values().squaredNorm();
      for (Index c = 0; c < C; ++c) {
        const Vector rm = cov.off_support_part(m.channel(c));
        const auto rc = cross_correlate(*fft, span_of(rz[static_cast<std::size_t>(c)]), span_of(rm));
        const auto dc = cross_correlate(*fft, z.channel(c), m.channel(c));
        const double rm2 = rm.squaredNorm();
        for (Index g = 0; g < N; ++g) {
          res[static_cast<std::size_t>(g)] += rm2 - 2.0 * rc[static_cast<std::size_t>(g)];
          dist[static_cast<std::size_t>(g)] -= 2.0 * dc[static_cast<std::size_t>(g)];
        }
      }
      for (Index g = 0; g < N; ++g) {
        const double r = std::sqrt(std::max(0.0, res[static_cast<std::size_t>(g)]));
        const double dn = std::sqrt(std::max(0.0, dist[static_cast<std::size_t>(g)] + m2));
        support[static_cast<std::size_t>(g)] = r <= s.support_tolerance * (1.0 + dn);
      }
    }

    const auto image = static_cast<Index>(id);
    if (s.zero) {
      for (Index g = 0; g < N; ++g) {
        if (!support[static_cast<std::size_t>(g)]) {
          continue;
        }
        ++st.on_support;
        if (st.near.accepts(maha[static_cast<std::size_t>(g)])) {
          const ImageGrid xg = translate(x, translation_from_index(g, H, W));
          st.near.accumulate(maha[static_cast<std::size_t>(g)], xg.values().data(), 1, image, g);
        }
      }
      continue;
    }
    double block_max = kNegInf;
    Index inserted = 0;
    for (Index g = 0; g < N; ++g) {
      const auto gi = static_cast<std::size_t>(g);
      logw[gi] = support[gi] ? s.log_const - 0.5 * maha[gi] / (s.sigma * s.sigma) : kNegInf;
      block_max = std::max(block_max, logw[gi]);
      inserted += support[gi] ? 1 : 0;
    }
    if (inserted == 0) {
      continue;
    }
    st.on_support += inserted;
    st.acc.rebase(block_max);
    const double ref = st.acc.reference();
    std::vector<double> e(static_cast<std::size_t>(N));
    double wsum = 0.0;
    for (Index g = 0; g < N; ++g) {
      e[static_cast<std::size_t>(g)] = std::exp(logw[static_cast<std::size_t>(g)] - ref);
      wsum += e[static_cast<std::size_t>(g)];
    }
    Vector vs(C * N);
    for (Index c = 0; c < C; ++c) {
      const auto conv = circular_convolve(*fft, e, x.channel(c));
      std::copy(conv.begin(), conv.end(), vs.data() + c * N);
    }
    st.acc.add_reduced(wsum, vs, inserted);
    if (st.top.enabled()) {
      for (Index g = 0; g < N; ++g) {
        if (logw[static_cast<std::size_t>(g)] > st.top.threshold()) {
          st.top.push({logw[static_cast<std::size_t>(g)], image, g});
        }
      }
    }
  }
}

template <class Body>
EstimateReport run_global(const ImageGrid &y, const Dataset &d, NoiseModel noise, const EstimatorOptions &opts,
                          const CovarianceModel &cov, Body &&body, std::string path) {
  const GlobalSetup s = global_setup(cov, y.channels(), noise, opts);
  const auto chunks = make_chunks(d.size(), opts);
  std::vector<GlobalState> states(chunks.size(), GlobalState(y.size(), opts));
  parallel_for(chunks.size(), worker_count(opts), [&](std::size_t i) { body(states[i], s, chunks[i]); });
  return finish_global(states, y.shape(), s, std::move(path));
}

// ---------------------------------------------------------------------------
// LE-MMSE

struct ClassData {
  Matrix whitening; // r x CP
  double log_pseudo_det = 0.0;
  Index rank = 0;
  std::vector<Index> pixels;
};

struct ImagePatches {
  std::vector<Matrix> whitened; // per class: |pixels| x r
  std::vector<Vector> norms;    // per class: squared norms of the rows above
  std::vector<Matrix> values;   // per class: |pixels| x C
};

} // namespace

struct LeMmseEngine::Impl {
  const LinearOperator *A;
  const PreInverse *B;
  const Dataset *d;
  PatchGeometry geom;
  EstimatorOptions opts;
  QMatrices q;
  std::vector<ClassData> classes;
  std::vector<ImagePatches> cache;

  Impl(const LinearOperator &a, const PreInverse &b, const Dataset &data, const PatchGeometry &g,
       const EstimatorOptions &o)
      : A(&a), B(&b), d(&data), geom(g), opts(o),
        q(build_q_matrices(b, g, data.shape().channels, o.rank_tolerance, o.dense_limit)) {}

  ImagePatches prepare(std::size_t id) const {
    const ImageGrid &x = (*d)[id];
    const ImageGrid m = q.mean_image(*A, *B, x);
    const RowMatrix patches = extract_all_patches(m, geom);
    const Index C = x.channels(), N = x.pixels();
    ImagePatches out;
    for (const auto &cls : classes) {
      const auto n = static_cast<Index>(cls.pixels.size());
      RowMatrix gathered(n, patches.cols());
      Matrix values(n, C);
      for (Index j = 0; j < n; ++j) {
        const Index p = cls.pixels[static_cast<std::size_t>(j)];
        gathered.row(j) = patches.row(p);
        for (Index c = 0; c < C; ++c) {
          values(j, c) = x.values()[c * N + p];
        }
      }
      Matrix w = gathered * cls.whitening.transpose();
      out.norms.push_back(w.rowwise().squaredNorm());
      out.whitened.push_back(std::move(w));
      out.values.push_back(std::move(values));
    }
    return out;
  }
};

LeMmseEngine::LeMmseEngine(const LinearOperator &A, const PreInverse &B, const Dataset &d, const PatchGeometry &geom,
                           const EstimatorOptions &opts)
    : impl_(std::make_unique<Impl>(A, B, d, geom, opts)) {
  if (A.height() != d.shape().height || A.width() != d.shape().width || B.height() != d.shape().height ||
      B.width() != d.shape().width) {
    throw Error(ErrorCode::ShapeMismatch, "operator grid does not match the dataset");
  }
  auto &im = *impl_;
  for (const auto &cls : im.q.classes()) {
    ClassData cd;
    cd.whitening = cls.factor.whitening_matrix();
    cd.log_pseudo_det = cls.factor.log_pseudo_det();
    cd.rank = cls.factor.rank();
    cd.pixels = cls.pixels;
    im.classes.push_back(std::move(cd));
  }
  // Whitened patches plus values and norms, per image.
  std::size_t per_image = 0;
  for (const auto &cls : im.classes) {
    per_image += cls.pixels.size() * static_cast<std::size_t>(cls.rank + 1 + d.shape().channels);
  }
  const std::size_t bytes = per_image * sizeof(double) * d.size();
  if (bytes <= opts.memory_budget_bytes) {
    im.cache.resize(d.size());
    parallel_for(d.size(), worker_count(opts), [&](std::size_t i) { im.cache[i] = im.prepare(i); });
  }
}

LeMmseEngine::~LeMmseEngine() = default;
LeMmseEngine::LeMmseEngine(LeMmseEngine &&) noexcept = default;
LeMmseEngine &LeMmseEngine::operator=(LeMmseEngine &&) noexcept = default;

const QMatrices &LeMmseEngine::q_matrices() const { return impl_->q; }
bool LeMmseEngine::cached() const { return !impl_->cache.empty(); }

EstimateReport LeMmseEngine::estimate(const ImageGrid &y, NoiseModel noise) const {
  const Impl &im = *impl_;
  check_inputs(y, *im.A, *im.B, *im.d);
  check_noise(noise);
  const EstimatorOptions &o = im.opts;
  const Index C = y.channels(), N = y.pixels();
  const bool zero = noise.zero_noise(o.sigma_floor);
  const double inv2s2 = zero ? 0.0 : 0.5 / (noise.sigma * noise.sigma);

  const ImageGrid z = im.B->apply(y);
  const RowMatrix V = extract_all_patches(z, im.geom);

  // Stratum of every query pixel, then query pixels grouped by their
  // admissible class set.
  std::vector<StratumChoice> choice(static_cast<std::size_t>(N));
  parallel_for(static_cast<std::size_t>(N), worker_count(o), [&](std::size_t n) {
    choice[n] = stratum_of(V.row(static_cast<Index>(n)).transpose(), im.q, o.support_tolerance);
  });
  std::map<std::vector<Index>, std::vector<Index>> groups;
  for (Index n = 0; n < N; ++n) {
    groups[choice[static_cast<std::size_t>(n)].classes].push_back(n);
  }

  struct QueryBlock {
    std::vector<Index> pixels;
    std::vector<Index> classes;
    std::vector<Matrix> whitened; // per listed class: b x r
    std::vector<Vector> norms;
  };
  std::vector<QueryBlock> blocks;
  for (const auto &[cls_list, pixels] : groups) {
    for (std::size_t start = 0; start < pixels.size(); start += static_cast<std::size_t>(o.query_block)) {
      QueryBlock qb;
      const std::size_t stop = std::min(pixels.size(), start + static_cast<std::size_t>(o.query_block));
      qb.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(start), pixels.begin() + static_cast<std::ptrdiff_t>(stop));
      qb.classes = cls_list;
      RowMatrix vb(static_cast<Index>(qb.pixels.size()), V.cols());
      for (std::size_t i = 0; i < qb.pixels.size(); ++i) {
        vb.row(static_cast<Index>(i)) = V.row(qb.pixels[i]);
      }
      for (Index c : cls_list) {
        Matrix w = vb * im.classes[static_cast<std::size_t>(c)].whitening.transpose();
        qb.norms.push_back(w.rowwise().squaredNorm());
        qb.whitened.push_back(std::move(w));
      }
      blocks.push_back(std::move(qb));
    }
  }

  std::vector<double> class_const(im.classes.size(), 0.0);
  if (!zero) {
    for (std::size_t c = 0; c < im.classes.size(); ++c) {
      const double r = static_cast<double>(im.classes[c].rank);
      class_const[c] = -0.5 * r * std::log(2.0 * std::numbers::pi * noise.sigma * noise.sigma) -
                       0.5 * im.classes[c].log_pseudo_det;
    }
  }

  struct PixelState {
    std::vector<WeightedMeanAccumulator> acc;
    std::vector<NearestAccumulator> near;
    std::vector<TopK> top;
    std::int64_t on_support = 0;
  };
  const auto chunks = make_chunks(im.d->size(), o);
  std::vector<PixelState> states(chunks.size());

  parallel_for(chunks.size(), worker_count(o), [&](std::size_t ci) {
    PixelState &st = states[ci];
    if (zero) {
      st.near.assign(static_cast<std::size_t>(N), NearestAccumulator(C, o.tie_tolerance));
    } else {
      st.acc.assign(static_cast<std::size_t>(N), WeightedMeanAccumulator(C));
    }
    st.top.assign(static_cast<std::size_t>(N), TopK(o.top_k));
    Matrix dist;
    Vector row_max;
    for (std::size_t id = chunks[ci].begin; id < chunks[ci].end; ++id) {
      ImagePatches local;
      const ImagePatches &ip = im.cache.empty() ? (local = im.prepare(id)) : im.cache[id];
      const auto image = static_cast<Index>(id);
      for (const auto &qb : blocks) {
        const auto b = static_cast<Index>(qb.pixels.size());
        for (std::size_t k = 0; k < qb.classes.size(); ++k) {
          const auto cls = static_cast<std::size_t>(qb.classes[k]);
          const Matrix &mw = ip.whitened[cls];
          const Vector &m2 = ip.norms[cls];
          const Matrix &vals = ip.values[cls];
          const auto &src = im.classes[cls].pixels;
          const Index n = mw.rows();
          if (n == 0) {
            continue;
          }
          dist.resize(b, n);
          dist.noalias() = -2.0 * (qb.whitened[k] * mw.transpose());
          dist.colwise() += qb.norms[k];
          dist.rowwise() += m2.transpose();
          dist = dist.cwiseMax(0.0);
          st.on_support += static_cast<std::int64_t>(b * n);
          if (zero) {
            for (Index i = 0; i < b; ++i) {
              auto &near = st.near[static_cast<std::size_t>(qb.pixels[static_cast<std::size_t>(i)])];
              for (Index j = 0; j < n; ++j) {
                if (near.accepts(dist(i, j))) {
                  near.accumulate(dist(i, j), vals.data() + j, vals.rows(), image, src[static_cast<std::size_t>(j)]);
                }
              }
            }
            continue;
          }
          // log weights, in place
          dist.array() = class_const[cls] - inv2s2 * dist.array();
          row_max = dist.rowwise().maxCoeff();
          Vector refs(b);
          for (Index i = 0; i < b; ++i) {
            auto &acc = st.acc[static_cast<std::size_t>(qb.pixels[static_cast<std::size_t>(i)])];
            acc.rebase(row_max[i]);
            refs[i] = acc.reference();
          }
          if (o.top_k != 0) {
            for (Index i = 0; i < b; ++i) {
              auto &top = st.top[static_cast<std::size_t>(qb.pixels[static_cast<std::size_t>(i)])];
              for (Index j = 0; j < n; ++j) {
                if (dist(i, j) > top.threshold()) {
                  top.push({dist(i, j), image, src[static_cast<std::size_t>(j)]});
                }
              }
            }
          }
          dist.colwise() -= refs;
          dist = dist.array().exp().matrix();
          const Vector wsum = dist.rowwise().sum();
          const Matrix vsum = dist * vals;
          for (Index i = 0; i < b; ++i) {
            st.acc[static_cast<std::size_t>(qb.pixels[static_cast<std::size_t>(i)])].add_reduced(
                wsum[i], vsum.row(i).transpose(), n);
          }
        }
      }
    }
  });

  PixelState &total = states.front();
  for (std::size_t ci = 1; ci < states.size(); ++ci) {
    for (Index n = 0; n < N; ++n) {
      const auto ni = static_cast<std::size_t>(n);
      if (zero) {
        total.near[ni].merge(states[ci].near[ni]);
      } else {
        total.acc[ni].merge(states[ci].acc[ni]);
      }
      total.top[ni].merge(states[ci].top[ni]);
    }
    total.on_support += states[ci].on_support;
  }

  EstimateReport r;
  r.zero_noise = zero;
  r.on_support_components = total.on_support;
  r.path = im.q.shared() ? "le_mmse/shared" : "le_mmse/stratified";
  r.reconstruction = ImageGrid(y.shape());
  r.per_pixel_log_normalizer.resize(static_cast<std::size_t>(N));
  r.stratum_rank.resize(static_cast<std::size_t>(N));
  r.admissible_pixels.resize(static_cast<std::size_t>(N));
  if (o.top_k != 0) {
    r.top_k_weights.resize(static_cast<std::size_t>(N));
  }
  for (Index n = 0; n < N; ++n) {
    const auto ni = static_cast<std::size_t>(n);
    r.stratum_rank[ni] = choice[ni].rank;
    r.admissible_pixels[ni] = static_cast<Index>(choice[ni].pixels.size());
    Vector value;
    if (zero) {
      value = total.near[ni].finalize();
      r.per_pixel_log_normalizer[ni] = kNaN;
      if (o.top_k != 0) {
        for (const auto &c : total.near[ni].winners()) {
          r.top_k_weights[ni].push_back({c.image, c.source, std::exp(c.log_weight)});
        }
      }
    } else {
      value = total.acc[ni].finalize();
      const double lz = total.acc[ni].log_normalizer();
      r.per_pixel_log_normalizer[ni] = lz;
      if (o.top_k != 0) {
        for (const auto &c : total.top[ni].sorted()) {
          r.top_k_weights[ni].push_back({c.image, c.source, std::exp(c.log_weight - lz)});
        }
      }
    }
    for (Index c = 0; c < C; ++c) {
      r.reconstruction.values()[c * N + n] = value[c];
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

EstimateReport mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d, NoiseModel noise,
                    const EstimatorOptions &opts) {
  check_inputs(y, A, B, d);
  check_noise(noise);
  const CovarianceModel cov = B.covariance(opts.rank_tolerance, opts.dense_limit);
  const ImageGrid z = B.apply(y);
  return run_global(
      y, d, noise, opts, cov,
      [&](GlobalState &st, const GlobalSetup &s, Chunk ch) {
        for (std::size_t id = ch.begin; id < ch.end; ++id) {
          const ImageGrid m = B.apply(A.apply(d[id]));
          ImageGrid diff(z.shape(), z.values() - m.values());
          const Distance dd = whole_image_distance(cov, diff, s.support_tolerance);
          if (dd.on_support) {
            st.insert(s, dd.maha, d[id].values().data(), static_cast<Index>(id), -1);
          }
        }
      },
      "mmse");
}

EstimateReport augmented_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                              NoiseModel noise, const EstimatorOptions &opts) {
  check_inputs(y, A, B, d);
  check_noise(noise);
  const CovarianceModel cov = B.covariance(opts.rank_tolerance, opts.dense_limit);
  const ImageGrid z = B.apply(y);
  const Index H = y.height(), W = y.width(), N = H * W;
  if (opts.fft_fast_path && A.commutes_with_translations() && B.commutes_with_translations()) {
    return run_global(
        y, d, noise, opts, cov,
        [&](GlobalState &st, const GlobalSetup &s, Chunk ch) { translation_mixture_fft(st, s, z, cov, A, B, d, ch); },
        "augmented_mmse/fft");
  }
  return run_global(
      y, d, noise, opts, cov,
      [&](GlobalState &st, const GlobalSetup &s, Chunk ch) {
        for (std::size_t id = ch.begin; id < ch.end; ++id) {
          for (Index g = 0; g < N; ++g) {
            const ImageGrid xg = translate(d[id], translation_from_index(g, H, W));
            const ImageGrid m = B.apply(A.apply(xg));
            ImageGrid diff(z.shape(), z.values() - m.values());
            const Distance dd = whole_image_distance(cov, diff, s.support_tolerance);
            if (dd.on_support) {
              st.insert(s, dd.maha, xg.values().data(), static_cast<Index>(id), g);
            }
          }
        }
      },
      "augmented_mmse/direct");
}

EstimateReport e_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                      NoiseModel noise, const EstimatorOptions &opts) {
  check_inputs(y, A, B, d);
  check_noise(noise);
  const CovarianceModel cov = B.covariance(opts.rank_tolerance, opts.dense_limit);
  const ImageGrid z = B.apply(y);
  const Index H = y.height(), W = y.width(), N = H * W;
  if (opts.fft_fast_path && cov.translation_invariant()) {
    return run_global(
        y, d, noise, opts, cov,
        [&](GlobalState &st, const GlobalSetup &s, Chunk ch) { translation_mixture_fft(st, s, z, cov, A, B, d, ch); },
        "e_mmse/fft");
  }
  return run_global(
      y, d, noise, opts, cov,
      [&](GlobalState &st, const GlobalSetup &s, Chunk ch) {
        for (std::size_t id = ch.begin; id < ch.end; ++id) {
          const ImageGrid m = B.apply(A.apply(d[id]));
          for (Index g = 0; g < N; ++g) {
            const Translation t = translation_from_index(g, H, W);
            const ImageGrid u = translate(z, inverse(t, H, W));
            ImageGrid diff(z.shape(), u.values() - m.values());
            const Distance dd = whole_image_distance(cov, diff, s.support_tolerance);
            if (dd.on_support) {
              const ImageGrid xg = translate(d[id], t);
              st.insert(s, dd.maha, xg.values().data(), static_cast<Index>(id), g);
            }
          }
        }
      },
      "e_mmse/direct");
}

EstimateReport le_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                       const PatchGeometry &geom, NoiseModel noise, const EstimatorOptions &opts) {
  return LeMmseEngine(A, B, d, geom, opts).estimate(y, noise);
}

namespace {

EstimateReport smooth_with(const LeMmseEngine &engine, const ImageGrid &y, NoiseModel noise, double epsilon,
                           Index samples, std::uint64_t seed) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::InvalidArgument, "smoothing epsilon must be finite and non-negative");
  }
  if (samples < 1) {
    throw Error(ErrorCode::InvalidArgument, "smoothing needs at least one sample");
  }
  if (epsilon == 0.0) {
    EstimateReport r = engine.estimate(y, noise);
    r.standard_error = ImageGrid(y.shape());
    r.path = "lemmse_smooth/exact";
    return r;
  }
  Vector sum = Vector::Zero(y.size());
  Vector sum_sq = Vector::Zero(y.size());
  EstimateReport first;
  for (Index k = 0; k < samples; ++k) {
    NormalStream stream(derive_seed(seed, static_cast<std::uint64_t>(k)));
    ImageGrid yk(y.shape(), y.values() + epsilon * stream.vector(y.size()));
    EstimateReport rk = engine.estimate(yk, noise);
    sum += rk.reconstruction.values();
    sum_sq += rk.reconstruction.values().cwiseAbs2();
    if (k == 0) {
      first = std::move(rk);
    }
  }
  const double K = static_cast<double>(samples);
  EstimateReport r;
  r.reconstruction = ImageGrid(y.shape(), sum / K);
  Vector se = Vector::Zero(y.size());
  if (samples > 1) {
    const Vector var = ((sum_sq - sum.cwiseAbs2() / K) / (K - 1.0)).cwiseMax(0.0);
    se = (var / K).cwiseSqrt();
  }
  r.standard_error = ImageGrid(y.shape(), se);
  r.stratum_rank = std::move(first.stratum_rank);
  r.admissible_pixels = std::move(first.admissible_pixels);
  r.zero_noise = first.zero_noise;
  r.on_support_components = first.on_support_components;
  r.path = "lemmse_smooth/monte_carlo";
  return r;
}

} // namespace

EstimateReport smoothed_le_mmse(const ImageGrid &y, const LinearOperator &A, const PreInverse &B, const Dataset &d,
                                const PatchGeometry &geom, NoiseModel noise, double epsilon, Index samples,
                                std::uint64_t seed, const EstimatorOptions &opts) {
  const LeMmseEngine engine(A, B, d, geom, opts);
  return smooth_with(engine, y, noise, epsilon, samples, seed);
}

Vector zero_noise_limit(const Vector &y, const std::vector<Vector> &means, const std::vector<Vector> &values,
                        const GaussianFactorization &fac, double support_tolerance, double tie_tolerance) {
  if (means.size() != values.size()) {
    throw Error(ErrorCode::DimensionMismatch, "means and values must pair up");
  }
  if (values.empty()) {
    throw Error(ErrorCode::AllWeightsOffSupport, "no components");
  }
  NearestAccumulator near(values.front().size(), tie_tolerance);
  for (std::size_t i = 0; i < means.size(); ++i) {
    const Vector diff = y - means[i];
    if (fac.off_support_residual(diff) > support_tolerance * (1.0 + diff.norm())) {
      continue;
    }
    near.accumulate(mahalanobis_sq(y, means[i], fac), values[i], static_cast<Index>(i), -1);
  }
  return near.finalize();
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
  case EstimatorKind::Mmse: return "mmse";
  case EstimatorKind::AugmentedMmse: return "aug-mmse";
  case EstimatorKind::EMmse: return "emmse";
  case EstimatorKind::LeMmse: return "lemmse";
  case EstimatorKind::SmoothedLeMmse: return "lemmse-smooth";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string &name) {
  for (auto k : {EstimatorKind::Mmse, EstimatorKind::AugmentedMmse, EstimatorKind::EMmse, EstimatorKind::LeMmse,
                 EstimatorKind::SmoothedLeMmse}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown estimator '" + name + "'");
}

bool is_patch_estimator(EstimatorKind kind) {
  return kind == EstimatorKind::LeMmse || kind == EstimatorKind::SmoothedLeMmse;
}

EstimateReport run_estimator(const EstimatorConfig &config, const ImageGrid &y, const LinearOperator &A,
                             const PreInverse &B, const Dataset &d, NoiseModel noise, const EstimatorOptions &opts) {
  switch (config.kind) {
  case EstimatorKind::Mmse: return mmse(y, A, B, d, noise, opts);
  case EstimatorKind::AugmentedMmse: return augmented_mmse(y, A, B, d, noise, opts);
  case EstimatorKind::EMmse: return e_mmse(y, A, B, d, noise, opts);
  case EstimatorKind::LeMmse: return le_mmse(y, A, B, d, PatchGeometry(config.patch_side), noise, opts);
  case EstimatorKind::SmoothedLeMmse:
    return smoothed_le_mmse(y, A, B, d, PatchGeometry(config.patch_side), noise, config.epsilon, config.samples,
                            config.seed, opts);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown estimator");
}

} // namespace lemmse
