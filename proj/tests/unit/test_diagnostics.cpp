#include "lemmse/diagnostics.hpp"
#include "lemmse/error.hpp"
#include "lemmse/io.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace lemmse;
using lemmse::testing::for_seeds;
using lemmse::testing::Gen;
using lemmse::testing::max_abs;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

EstimateReport report_with(std::vector<std::vector<double>> weights) {
  EstimateReport r;
  for (auto &list : weights) {
    std::vector<WeightEntry> entries;
    for (std::size_t i = 0; i < list.size(); ++i) {
      entries.push_back({static_cast<Index>(i), 0, list[i]});
    }
    std::sort(entries.begin(), entries.end(), [](const auto &a, const auto &b) { return a.weight > b.weight; });
    r.top_k_weights.push_back(std::move(entries));
  }
  return r;
}

Dataset duplicated(const Dataset &d) {
  std::vector<ImageGrid> items = d.items();
  items.insert(items.end(), d.items().begin(), d.items().end());
  return Dataset(std::move(items));
}

} // namespace

TEST(MeasurementDensity, SingleComponentClosedForm) {
  Gen gen(1);
  const auto a = make_gaussian_blur(4, 4, 1.0);
  const Dataset d = gen.dataset(1, {2, 4, 4});
  const ImageGrid y = gen.image({2, 4, 4});
  const double sigma = 0.3;
  const double m = 32.0;
  const double want = 0.5 * m * std::log(kTwoPi * sigma * sigma) +
                      (y.values() - a.apply(d[0]).values()).squaredNorm() / (2 * sigma * sigma);
  EXPECT_NEAR(neg_log_measurement_density(y, a, d, NoiseModel{sigma}), want, 1e-10 * std::abs(want));
}

TEST(MeasurementDensity, ExtraComponentsOnlyAddMass) {
  Gen gen(2);
  const auto a = make_denoising(4, 4);
  const Dataset d = gen.dataset(5, {1, 4, 4});
  const ImageGrid y = d[2];
  const double sigma = 0.2;
  const double at_zero = 8.0 * std::log(kTwoPi * sigma * sigma);
  EXPECT_LE(neg_log_measurement_density(y, a, d, NoiseModel{sigma}), at_zero + std::log(5.0) + 1e-12);
}

TEST(MeasurementDensity, MatchesDirectSum) {
  Gen gen(3);
  const auto a = make_center_mask(8, 8, 3);
  const Dataset d = gen.dataset(8, {1, 8, 8});
  const ImageGrid y = a.apply(gen.image({1, 8, 8}));
  const double sigma = 0.2;
  double total = 0.0;
  for (const auto &x : d.items()) {
    const double r2 = (y.values() - a.apply(x).values()).squaredNorm();
    total += std::exp(-r2 / (2 * sigma * sigma)) / std::pow(kTwoPi * sigma * sigma, 32.0);
  }
  const double want = -std::log(total / 8.0);
  EXPECT_NEAR(neg_log_measurement_density(y, a, d, NoiseModel{sigma}), want, 1e-10 * std::abs(want));
}

TEST(MeasurementDensity, RelabelingInvariantAndDuplicateDecreases) {
  Gen gen(4);
  const auto a = make_denoising(3, 3);
  const Dataset d = gen.dataset(4, {1, 3, 3});
  ImageGrid y = d[1];
  y.values().array() += 0.05;
  const NoiseModel noise{0.2};
  std::vector<ImageGrid> rev(d.items().rbegin(), d.items().rend());
  const double base = neg_log_measurement_density(y, a, d, noise);
  EXPECT_NEAR(neg_log_measurement_density(y, a, Dataset(rev), noise), base, 1e-12);
  std::vector<ImageGrid> more = d.items();
  more.push_back(d[1]);
  EXPECT_LT(neg_log_measurement_density(y, a, Dataset(more), noise), base);
}

TEST(PatchDensity, InvariantToDuplication) {
  Gen gen(5);
  const auto a = make_gaussian_blur(6, 6, 1.0);
  const auto b = make_pre_inverse(PreInverseKind::PseudoInverse, a);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  const ImageGrid y = a.apply(gen.image({1, 6, 6}));
  const PatchGeometry geom(3);
  const NoiseModel noise{0.2};
  const auto once = patch_density_map(y, a, b, d, geom, noise);
  const auto twice = patch_density_map(y, a, b, duplicated(d), geom, noise);
  for (std::size_t n = 0; n < 36; ++n) {
    EXPECT_NEAR(once.neg_log_density[n], twice.neg_log_density[n], 1e-10);
    EXPECT_NEAR(once.neg_log_density_unnormalized[n] - std::log(2.0), twice.neg_log_density_unnormalized[n], 1e-10);
    EXPECT_TRUE(std::isfinite(once.neg_log_density[n]));
  }
}

TEST(PatchDensity, SingleConstantImageClosedForm) {
  const Index h = 4, w = 4;
  const auto a = make_denoising(h, w);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const Dataset d({ImageGrid::constant({1, h, w}, 0.4)});
  Gen gen(6);
  const ImageGrid y = gen.image({1, h, w});
  const double sigma = 0.3;
  const auto map = patch_density_map(y, a, b, d, PatchGeometry(1), NoiseModel{sigma});
  for (Index n = 0; n < h * w; ++n) {
    const double want = 0.5 * std::log(kTwoPi * sigma * sigma) + std::pow(y.values()[n] - 0.4, 2) / (2 * sigma * sigma);
    EXPECT_NEAR(map.neg_log_density[static_cast<std::size_t>(n)], want, 1e-12);
  }
}

TEST(PatchDensity, FlatAtLargeSigma) {
  Gen gen(7);
  const auto a = make_denoising(8, 8);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const Dataset d = gen.dataset(6, {1, 8, 8});
  const ImageGrid y = gen.image({1, 8, 8});
  const auto map = patch_density_map(y, a, b, d, PatchGeometry(3), NoiseModel{1.0});
  const auto [lo, hi] = std::minmax_element(map.neg_log_density.begin(), map.neg_log_density.end());
  double mean = 0.0;
  for (double v : map.neg_log_density) {
    mean += v / 64.0;
  }
  EXPECT_LE(*hi - *lo, 0.05 * std::abs(mean));
}

TEST(PatchDensity, FromReportMatchesMap) {
  Gen gen(8);
  const auto a = make_center_mask(6, 6, 2);
  const auto b = make_pre_inverse(PreInverseKind::PseudoInverse, a);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  const ImageGrid y = a.apply(gen.image({1, 6, 6}));
  const NoiseModel noise{0.2};
  const auto r = le_mmse(y, a, b, d, PatchGeometry(3), noise);
  const auto x = patch_density_from_report(r, noise, d.size(), 36);
  const auto m = patch_density_map(y, a, b, d, PatchGeometry(3), noise);
  EXPECT_EQ(x.neg_log_density, m.neg_log_density);
}

TEST(MassConcentration, UniformWeights) {
  for (int k : {1, 7, 50, 101}) {
    const auto r = report_with({std::vector<double>(static_cast<std::size_t>(k), 1.0 / k)});
    EXPECT_EQ(mass_concentration(r, 0.99)[0], static_cast<Index>(std::ceil(0.99 * k - 1e-9))) << k;
  }
}

TEST(MassConcentration, PointMass) {
  const auto r = report_with({{1.0, 0.0, 0.0}});
  EXPECT_EQ(mass_concentration(r, 0.99)[0], 1);
  EXPECT_EQ(mass_concentration(r, 1.0)[0], 1);
}

TEST(MassConcentration, FullMassCountsPositiveWeights) {
  for_seeds(20, 10, [](Gen &gen) {
    std::vector<double> w;
    Index positive = 0;
    for (int i = 0; i < 12; ++i) {
      const double v = gen.uniform() < 0.3 ? 0.0 : gen.uniform();
      positive += v > 0 ? 1 : 0;
      w.push_back(v);
    }
    double total = 0.0;
    for (double v : w) {
      total += v;
    }
    if (total == 0.0) {
      return;
    }
    for (double &v : w) {
      v /= total;
    }
    EXPECT_EQ(mass_concentration(report_with({w}), 1.0)[0], positive);
  });
}

TEST(MassConcentration, InsufficientRetention) {
  const auto r = report_with({{0.5, 0.3}});
  try {
    mass_concentration(r, 0.99);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientRetention);
  }
}

TEST(Patchwork, ZeroNoiseLabelsNearestSource) {
  Gen gen(30);
  const auto a = make_denoising(6, 6);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  const ImageGrid y = gen.image({1, 6, 6});
  EstimatorOptions opts;
  opts.top_k = 8;
  const auto r = le_mmse(y, a, b, d, PatchGeometry(3), NoiseModel{0.0}, opts);
  const auto labels = patchwork_source_map(r, 0.5);
  for (std::size_t n = 0; n < 36; ++n) {
    ASSERT_TRUE(labels[n].has_value());
    EXPECT_EQ(*labels[n], r.top_k_weights[n][0].image);
  }
}

TEST(Patchwork, UnattainableThreshold) {
  const auto r = report_with({{1.0}, {0.6, 0.4}});
  for (const auto &l : patchwork_source_map(r, 1.0 + 1e-9)) {
    EXPECT_FALSE(l.has_value());
  }
}

TEST(Patchwork, SelfRetrieval) {
  Gen gen(31);
  const auto a = make_denoising(6, 6);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const Dataset d = gen.dataset(4, {1, 6, 6});
  EstimatorOptions opts;
  opts.top_k = 4;
  const auto r = le_mmse(d[2], a, b, d, PatchGeometry(3), NoiseModel{1e-3}, opts);
  for (const auto &l : patchwork_source_map(r, 0.5)) {
    ASSERT_TRUE(l.has_value());
    EXPECT_EQ(*l, 2);
  }
}

TEST(Patchwork, StableUnderSmallPerturbations) {
  const auto base = report_with({{0.7, 0.3}, {0.45, 0.55}, {0.2, 0.2, 0.6}});
  auto moved = base;
  for (auto &list : moved.top_k_weights) {
    list[0].weight += 0.01;
  }
  const auto x = patchwork_source_map(base, 0.5), y = patchwork_source_map(moved, 0.5);
  EXPECT_EQ(x, y);
}

TEST(Tradeoff, IdentityNoiseTermIsSigmaSquaredTimesPatchDim) {
  Gen gen(40);
  const Index h = 6, w = 6;
  const auto a = make_denoising(h, w);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const PatchGeometry geom(3);
  const ImageGrid xbar = gen.image({2, h, w});
  const Dataset cand = gen.dataset(2, {2, h, w});
  const double sigma = 0.3;
  const auto rep = pre_inverse_tradeoff(a, b, geom, xbar, cand, NoiseModel{sigma}, {}, true);
  for (const auto &e : rep.entries) {
    EXPECT_NEAR(e.noise, sigma * sigma * 2 * 9, 1e-12);
    EXPECT_LE(e.noise, sigma * sigma * 2 * 9 + 1e-12);
  }
}

TEST(Tradeoff, SignalVanishesOnMatchingPatch) {
  Gen gen(41);
  const auto a = make_gaussian_blur(6, 6, 1.0);
  const auto b = make_pre_inverse(PreInverseKind::PseudoInverse, a);
  const ImageGrid xbar = gen.image({1, 6, 6});
  const Dataset cand({xbar, gen.image({1, 6, 6})});
  std::vector<std::pair<Index, Index>> pairs;
  for (Index n = 0; n < 36; ++n) {
    pairs.emplace_back(n, n);
  }
  const auto rep = pre_inverse_tradeoff(a, b, PatchGeometry(3), xbar, cand, NoiseModel{0.1}, pairs, true);
  for (const auto &e : rep.entries) {
    EXPECT_GE(e.signal, 0.0);
    EXPECT_GE(e.noise, 0.0);
    if (e.image == 0) {
      EXPECT_NEAR(e.signal, 0.0, 1e-18);
    }
  }
}

TEST(Tradeoff, SignalMatchesDensePseudoInverse) {
  Gen gen(42);
  const Index h = 5, w = 5;
  const auto a = make_center_mask(h, w, 2);
  const auto b = make_pre_inverse(PreInverseKind::PseudoInverse, a);
  const PatchGeometry geom(3);
  const ImageGrid xbar = gen.image({1, h, w});
  const Dataset cand = gen.dataset(1, {1, h, w});
  const double sigma = 0.2;
  const auto rep = pre_inverse_tradeoff(a, b, geom, xbar, cand, NoiseModel{sigma}, {}, true);
  const Matrix ad = a.dense();
  for (const auto &e : rep.entries) {
    const Matrix qn = b.rows(geom.window(e.source_pixel, h, w));
    const Matrix qp = b.rows(geom.window(e.query_pixel, h, w));
    const Eigen::JacobiSVD<Matrix> svd(qn * qn.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vector s = svd.singularValues();
    for (Index i = 0; i < s.size(); ++i) {
      s[i] = s[i] > 1e-10 * std::max(s[0], 1e-300) ? 1.0 / s[i] : 0.0;
    }
    const Matrix gplus = svd.matrixV() * s.asDiagonal() * svd.matrixU().transpose();
    const Vector delta = qp * ad * xbar.values() - qn * ad * cand[0].values();
    EXPECT_NEAR(e.signal, delta.dot(gplus * delta), 1e-9);
    EXPECT_NEAR(e.noise, sigma * sigma * (gplus * qp * qp.transpose()).trace(), 1e-9);
  }
}

TEST(Tradeoff, InpaintingAwareHasLowerNoise) {
  Gen gen(43);
  const Index h = 16, w = 16;
  const auto a = make_center_mask(h, w, 6);
  const PatchGeometry geom(3);
  const ImageGrid xbar = gen.image({1, h, w});
  const Dataset cand = gen.dataset(1, {1, h, w});
  std::vector<std::pair<Index, Index>> pairs;
  for (Index n = 0; n < h * w; ++n) {
    pairs.emplace_back(n, n);
  }
  const NoiseModel noise{0.2};
  const auto aware = pre_inverse_tradeoff(a, make_pre_inverse(PreInverseKind::PseudoInverse, a), geom, xbar, cand,
                                          noise, pairs);
  const auto agnostic =
      pre_inverse_tradeoff(a, make_pre_inverse(PreInverseKind::Identity, a), geom, xbar, cand, noise, pairs);
  EXPECT_LE(aware.mean_noise, agnostic.mean_noise);
}

TEST(VarianceStudy, ZeroSigmaHasZeroVariance) {
  Gen gen(50);
  const auto a = make_center_mask(6, 6, 2);
  const auto b = make_pre_inverse(PreInverseKind::PseudoInverse, a);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::LeMmse;
  cfg.patch_side = 3;
  const auto study = variance_study(gen.image({1, 6, 6}), a, b, d, cfg, NoiseModel{0.0}, 4, 1);
  EXPECT_EQ(study.variance.values().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(study.seeds.size(), 4u);
}

TEST(VarianceStudy, ReproducibleAndNeedsTwoTrials) {
  Gen gen(51);
  const auto a = make_denoising(5, 5);
  const auto b = make_pre_inverse(PreInverseKind::Identity, a);
  const Dataset d = gen.dataset(3, {1, 5, 5});
  const ImageGrid xbar = gen.image({1, 5, 5});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::Mmse;
  const auto s1 = variance_study(xbar, a, b, d, cfg, NoiseModel{0.2}, 5, 3);
  const auto s2 = variance_study(xbar, a, b, d, cfg, NoiseModel{0.2}, 5, 3);
  EXPECT_EQ(s1.variance.values(), s2.variance.values());
  EXPECT_GT(s1.variance.values().maxCoeff(), 0.0);
  EXPECT_THROW(variance_study(xbar, a, b, d, cfg, NoiseModel{0.2}, 1, 3), Error);
}

TEST(VarianceStudy, InpaintingAwareLowersMaskedVariance) {
  Gen gen(52);
  const Index h = 16, w = 16;
  const auto a = make_center_mask(h, w, 6);
  const Dataset d = gen.dataset(10, {1, h, w});
  const ImageGrid xbar = gen.image({1, h, w});
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::LeMmse;
  cfg.patch_side = 3;
  const NoiseModel noise{0.2};
  const auto aware = variance_study(xbar, a, make_pre_inverse(PreInverseKind::PseudoInverse, a), d, cfg, noise, 8, 5);
  const auto agnostic = variance_study(xbar, a, make_pre_inverse(PreInverseKind::Identity, a), d, cfg, noise, 8, 5);
  double va = 0.0, vi = 0.0;
  for (Index n = 0; n < h * w; ++n) {
    if (a.mask()[static_cast<std::size_t>(n)] == 0.0) {
      va += aware.variance.values()[n];
      vi += agnostic.variance.values()[n];
    }
  }
  EXPECT_LT(va, vi);
}

TEST(Psnr, Examples) {
  Gen gen(60);
  const ImageGrid a = gen.image({2, 4, 4});
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
  ImageGrid b = a;
  b.values().array() += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  b = a;
  b.values().array() += 0.5;
  EXPECT_NEAR(psnr(a, b), 6.0206, 1e-4);
  EXPECT_THROW(psnr(a, gen.image({1, 4, 4})), Error);
}

TEST(Psnr, SymmetricAndTranslationInvariant) {
  for_seeds(70, 10, [](Gen &gen) {
    const ImageGrid a = gen.image({1, 5, 6}), b = gen.image({1, 5, 6});
    const Translation g = gen.translation(5, 6);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_NEAR(psnr(translate(a, g), translate(b, g)), psnr(a, b), 1e-12);
  });
}
