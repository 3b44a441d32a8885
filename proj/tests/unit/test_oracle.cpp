#include "lemmse/error.hpp"
#include "lemmse/io.hpp"
#include "lemmse/oracle.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

using namespace lemmse;
using lemmse::testing::for_seeds;
using lemmse::testing::Gen;
using lemmse::testing::max_abs;
using lemmse::testing::Task;

namespace {

struct Case {
  Task task;
  PreInverseKind kind;
};

const std::vector<Case> kCases = {
    {Task::Denoise, PreInverseKind::Identity}, {Task::Denoise, PreInverseKind::PseudoInverse},
    {Task::Inpaint, PreInverseKind::Identity}, {Task::Inpaint, PreInverseKind::PseudoInverse},
    {Task::Deconv, PreInverseKind::Identity},  {Task::Deconv, PreInverseKind::PseudoInverse},
};

} // namespace

// 20 seeds x 3 tasks x 2 pre-inverses, every estimator against its oracle.
TEST(Oracle, AgreesWithOptimizedEstimators) {
  for (const auto &c : kCases) {
    SCOPED_TRACE(std::string(lemmse::testing::task_name(c.task)) + "/" + to_string(c.kind));
    for_seeds(1000, 20, [&](Gen &gen) {
      const Index h = 8, w = 8;
      const auto a = lemmse::testing::make_task(c.task, h, w);
      const auto b = make_pre_inverse(c.kind, a);
      const Dataset d = gen.dataset(static_cast<std::size_t>(gen.integer(2, 6)), {1, h, w});
      const double sigma = gen.uniform(0.05, 0.8);
      const ImageGrid y = synthesize_measurement(gen.image({1, h, w}), a, sigma, gen.bits());
      const PatchGeometry geom(2 * gen.integer(0, 2) + 1);
      const auto p = make_dense_problem(a, c.kind, std::nullopt, d, sigma);
      const NoiseModel noise{sigma};
      EXPECT_LE(max_abs(mmse(y, a, b, d, noise).reconstruction.values(), oracle_mmse(p, y.values())), 1e-8);
      EXPECT_LE(max_abs(e_mmse(y, a, b, d, noise).reconstruction.values(), oracle_e_mmse(p, y.values())), 1e-8);
      EXPECT_LE(max_abs(augmented_mmse(y, a, b, d, noise).reconstruction.values(), oracle_augmented_mmse(p, y.values())),
                1e-8);
      EXPECT_LE(max_abs(le_mmse(y, a, b, d, geom, noise).reconstruction.values(), oracle_le_mmse(p, y.values(), geom)),
                1e-8);
    });
  }
}

TEST(Oracle, MultichannelTikhonov) {
  for_seeds(1100, 6, [](Gen &gen) {
    const Index h = 5, w = 6;
    const auto task = static_cast<Task>(gen.integer(0, 2));
    const auto a = lemmse::testing::make_task(task, h, w, 2, 0.9);
    const double lambda = gen.uniform(0.01, 0.3);
    const auto b = make_pre_inverse(PreInverseKind::Tikhonov, a, lambda);
    const Dataset d = gen.dataset(3, {3, h, w});
    const double sigma = gen.uniform(0.1, 0.5);
    const ImageGrid y = synthesize_measurement(gen.image({3, h, w}), a, sigma, gen.bits());
    const auto p = make_dense_problem(a, PreInverseKind::Tikhonov, lambda, d, sigma);
    const NoiseModel noise{sigma};
    const PatchGeometry geom(3);
    EXPECT_LE(max_abs(mmse(y, a, b, d, noise).reconstruction.values(), oracle_mmse(p, y.values())), 1e-8);
    EXPECT_LE(max_abs(e_mmse(y, a, b, d, noise).reconstruction.values(), oracle_e_mmse(p, y.values())), 1e-8);
    EXPECT_LE(max_abs(le_mmse(y, a, b, d, geom, noise).reconstruction.values(), oracle_le_mmse(p, y.values(), geom)),
              1e-8);
  });
}

TEST(Oracle, CustomDensePreInverse) {
  Gen gen(1200);
  const Index h = 4, w = 4;
  const auto a = make_center_mask(h, w, 2);
  const Matrix bm = a.dense() + 0.1 * gen.matrix(16, 16);
  const auto b = make_custom_pre_inverse(bm, h, w);
  const Dataset d = gen.dataset(3, {1, h, w});
  const ImageGrid y = synthesize_measurement(gen.image({1, h, w}), a, 0.2, 4);
  const auto p = make_dense_problem(a, bm, d, 0.2);
  const PatchGeometry geom(3);
  EXPECT_LE(max_abs(le_mmse(y, a, b, d, geom, NoiseModel{0.2}).reconstruction.values(),
                    oracle_le_mmse(p, y.values(), geom)),
            1e-8);
  EXPECT_LE(max_abs(mmse(y, a, b, d, NoiseModel{0.2}).reconstruction.values(), oracle_mmse(p, y.values())), 1e-8);
}

TEST(Oracle, FullWindowLocalEqualsEquivariant) {
  for (Index side : {3, 5}) {
    Gen gen(1300 + static_cast<std::uint64_t>(side));
    const auto a = make_denoising(side, side);
    const Dataset d = gen.dataset(3, {1, side, side});
    const Vector y = gen.vector(side * side);
    const auto p = make_dense_problem(a, PreInverseKind::Identity, std::nullopt, d, 0.3);
    EXPECT_LE(max_abs(oracle_le_mmse(p, y, PatchGeometry(side)), oracle_e_mmse(p, y)), 1e-12) << side;
  }
}

TEST(Oracle, ZeroNoiseMatchesNearestNeighbour) {
  Gen gen(1400);
  const auto a = make_center_mask(6, 6, 2);
  const Dataset d = gen.dataset(4, {1, 6, 6});
  const ImageGrid y = a.apply(gen.image({1, 6, 6}));
  const auto p = make_dense_problem(a, PreInverseKind::PseudoInverse, std::nullopt, d, 0.0);
  std::vector<Vector> means, values;
  for (const auto &x : d.items()) {
    means.push_back(p.B * p.A * x.values());
    values.push_back(x.values());
  }
  const auto fac = GaussianFactorization::from_factor(p.B);
  EXPECT_EQ(oracle_mmse(p, y.values()), zero_noise_limit(p.B * y.values(), means, values, fac));
}

// Lifting B = I only rescales every window, which the weights ignore.
TEST(Oracle, EpsilonLimitIdentityIsExact) {
  Gen gen(1500);
  const auto a = make_denoising(6, 6);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  const ImageGrid y = synthesize_measurement(gen.image({1, 6, 6}), a, 0.1, 2);
  const auto p = make_dense_problem(a, PreInverseKind::Identity, std::nullopt, d, 0.1);
  const auto table = oracle_epsilon_limit(p, y.values(), PatchGeometry(3), {1e-6});
  ASSERT_EQ(table.size(), 1u);
  EXPECT_LE(table[0].gap, 1e-8);
}

// A generic full-rank B moves the estimate to first order in eps.
TEST(Oracle, EpsilonLimitFullRankIsLinear) {
  Gen gen(1550);
  const auto a = make_gaussian_blur(6, 6, 0.7);
  const Dataset d = gen.dataset(3, {1, 6, 6});
  const ImageGrid y = synthesize_measurement(gen.image({1, 6, 6}), a, 0.1, 2);
  const auto p = make_dense_problem(a, PreInverseKind::PseudoInverse, std::nullopt, d, 0.1);
  const auto table = oracle_epsilon_limit(p, y.values(), PatchGeometry(3), {1e-5, 1e-6, 1e-7});
  EXPECT_NEAR(table[1].gap / table[0].gap, 0.1, 0.02);
  EXPECT_NEAR(table[2].gap / table[1].gap, 0.1, 0.02);
  EXPECT_LE(table[2].gap, 1e-6);
}

TEST(Oracle, EpsilonLimitInpaintingConverges) {
  Gen gen(1600);
  const auto a = make_center_mask(8, 8, 3);
  const Dataset d = gen.dataset(4, {1, 8, 8});
  const double sigma = 0.8;
  const ImageGrid y = synthesize_measurement(gen.image({1, 8, 8}), a, sigma, 3);
  const auto p = make_dense_problem(a, PreInverseKind::PseudoInverse, std::nullopt, d, sigma);
  const auto table = oracle_epsilon_limit(p, y.values(), PatchGeometry(3), {1e-4, 1e-6, 1e-8, 1e-12});
  ASSERT_EQ(table.size(), 4u);
  for (std::size_t i = 1; i < table.size(); ++i) {
    EXPECT_LT(table[i].gap, table[i - 1].gap);
  }
  EXPECT_LT(table.back().gap, 1e-7);
}

TEST(Oracle, EpsilonListMustBeNonEmpty) {
  Gen gen(1700);
  const auto a = make_denoising(4, 4);
  const auto p = make_dense_problem(a, PreInverseKind::Identity, std::nullopt, gen.dataset(2, {1, 4, 4}), 0.1);
  EXPECT_THROW(oracle_epsilon_limit(p, gen.vector(16), PatchGeometry(1), {}), Error);
}

TEST(Oracle, RefusesLargeGrids) {
  Gen gen(1800);
  const auto a = make_denoising(17, 16);
  try {
    make_dense_problem(a, PreInverseKind::Identity, std::nullopt, gen.dataset(1, {1, 17, 16}), 0.1);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::SizeLimitExceeded);
  }
}

TEST(Oracle, TranslationMatrixMatchesTranslate) {
  for_seeds(1900, 10, [](Gen &gen) {
    const Index h = gen.integer(1, 6), w = gen.integer(1, 6);
    const ImageGrid x = gen.image({1, h, w});
    const Translation g = gen.translation(h, w);
    EXPECT_EQ(Vector(translation_matrix(g, h, w) * x.values()), translate(x, g).values());
  });
}

TEST(Oracle, DenseMatricesMatchOperators) {
  const auto a = make_gaussian_blur(6, 6, 1.3);
  Gen gen(2000);
  const auto p = make_dense_problem(a, PreInverseKind::Tikhonov, 0.05, gen.dataset(1, {1, 6, 6}), 0.1);
  EXPECT_LE((p.A - a.dense()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((p.B - make_pre_inverse(PreInverseKind::Tikhonov, a, 0.05).dense()).cwiseAbs().maxCoeff(), 1e-8);
}
