#include "lemmse/accumulator.hpp"
#include "lemmse/error.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lemmse;
using lemmse::testing::for_seeds;
using lemmse::testing::Gen;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Vector scalar(double v) { return Vector::Constant(1, v); }
} // namespace

TEST(WeightedMean, HandComputedMean) {
  WeightedMeanAccumulator acc(1);
  acc.accumulate(std::log(1.0), scalar(1.0));
  acc.accumulate(std::log(3.0), scalar(2.0));
  EXPECT_NEAR(acc.finalize()[0], 7.0 / 4.0, 1e-15);
  EXPECT_NEAR(acc.log_normalizer(), std::log(4.0), 1e-15);
}

TEST(WeightedMean, MinusInfinityIgnored) {
  WeightedMeanAccumulator acc(2);
  acc.accumulate(-kInf, Vector::Ones(2));
  EXPECT_EQ(acc.count(), 0);
  EXPECT_EQ(acc.log_normalizer(), -kInf);
  try {
    acc.finalize();
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::AllWeightsOffSupport);
  }
}

TEST(WeightedMean, DoubleInsertEqualsLogTwo) {
  for_seeds(1, 20, [](Gen &gen) {
    const Vector x = gen.gaussian_vector(3);
    const double l = gen.uniform(-50, 50);
    WeightedMeanAccumulator a(3), b(3);
    const Vector other = gen.gaussian_vector(3);
    a.accumulate(0.0, other);
    b.accumulate(0.0, other);
    a.accumulate(l, x);
    a.accumulate(l, x);
    b.accumulate(l + std::log(2.0), x);
    EXPECT_LE((a.finalize() - b.finalize()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(a.log_normalizer(), b.log_normalizer(), 1e-12);
  });
}

TEST(WeightedMean, StableOverHugeLogRange) {
  WeightedMeanAccumulator acc(1);
  acc.accumulate(-2e4, scalar(5.0));
  acc.accumulate(1e4, scalar(1.0));
  acc.accumulate(1e4 - std::log(3.0), scalar(2.0));
  EXPECT_NEAR(acc.finalize()[0], (1.0 + 2.0 / 3.0) / (1.0 + 1.0 / 3.0), 1e-12);
  EXPECT_TRUE(std::isfinite(acc.log_normalizer()));
}

TEST(WeightedMean, DimensionMismatch) {
  WeightedMeanAccumulator acc(2);
  try {
    acc.accumulate(0.0, Vector::Zero(3));
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(WeightedMean, MergeMatchesSinglePass) {
  for_seeds(30, 30, [](Gen &gen) {
    const Index dim = gen.integer(1, 4), count = gen.integer(2, 40);
    std::vector<double> logs;
    std::vector<Vector> values;
    for (Index i = 0; i < count; ++i) {
      logs.push_back(gen.uniform(-300, 300));
      values.push_back(gen.gaussian_vector(dim));
    }
    WeightedMeanAccumulator whole(dim), left(dim), right(dim);
    const Index split = gen.integer(0, count);
    for (Index i = 0; i < count; ++i) {
      whole.accumulate(logs[static_cast<std::size_t>(i)], values[static_cast<std::size_t>(i)]);
      (i < split ? left : right).accumulate(logs[static_cast<std::size_t>(i)], values[static_cast<std::size_t>(i)]);
    }
    left.merge(right);
    const Vector a = whole.finalize(), b = left.finalize();
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    EXPECT_EQ(left.count(), count);
  });
}

TEST(WeightedMean, MeanIsInsideHull) {
  for_seeds(60, 20, [](Gen &gen) {
    WeightedMeanAccumulator acc(1);
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < 10; ++i) {
      const double v = gen.uniform(-1, 1);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      acc.accumulate(gen.uniform(-20, 20), scalar(v));
    }
    EXPECT_GE(acc.finalize()[0], lo);
    EXPECT_LE(acc.finalize()[0], hi);
  });
}

TEST(WeightedMean, BlockInsertMatchesStreaming) {
  Gen gen(90);
  WeightedMeanAccumulator a(2), b(2);
  std::vector<double> logs{3.0, 1.0, 4.5};
  std::vector<Vector> vals{gen.gaussian_vector(2), gen.gaussian_vector(2), gen.gaussian_vector(2)};
  for (std::size_t i = 0; i < 3; ++i) {
    a.accumulate(logs[i], vals[i]);
  }
  b.rebase(4.5);
  for (std::size_t i = 0; i < 3; ++i) {
    b.add(std::exp(logs[i] - b.reference()), vals[i].data());
  }
  b.note_inserted(3);
  EXPECT_LE((a.finalize() - b.finalize()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(a.log_normalizer(), b.log_normalizer(), 1e-14);
}

TEST(TopK, KeepsLargest) {
  TopK top(3);
  for (Index i = 0; i < 10; ++i) {
    top.push({static_cast<double>(i % 7), i, -1});
  }
  const auto s = top.sorted();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].log_weight, 6.0);
  EXPECT_EQ(s[1].log_weight, 5.0);
  EXPECT_EQ(s[2].log_weight, 4.0);
}

TEST(TopK, TiesBreakOnImageThenSource) {
  TopK top(2);
  top.push({1.0, 3, 0});
  top.push({1.0, 1, 5});
  top.push({1.0, 1, 2});
  const auto s = top.sorted();
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].image, 1);
  EXPECT_EQ(s[0].source, 2);
  EXPECT_EQ(s[1].image, 1);
  EXPECT_EQ(s[1].source, 5);
}

TEST(TopK, MergeEqualsSingleHeap) {
  for_seeds(100, 20, [](Gen &gen) {
    const Index k = gen.integer(1, 6);
    TopK whole(k), a(k), b(k);
    for (Index i = 0; i < 30; ++i) {
      const Component c{std::round(gen.uniform(0, 10)), gen.integer(0, 4), i};
      whole.push(c);
      (gen.uniform() < 0.5 ? a : b).push(c);
    }
    a.merge(b);
    const auto x = whole.sorted(), y = a.sorted();
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_EQ(x[i].log_weight, y[i].log_weight);
      EXPECT_EQ(x[i].image, y[i].image);
      EXPECT_EQ(x[i].source, y[i].source);
    }
  });
}

TEST(TopK, FullRetentionAndDisabled) {
  TopK all(-1), none(0);
  for (int i = 0; i < 50; ++i) {
    all.push({static_cast<double>(i), 0, i});
    none.push({static_cast<double>(i), 0, i});
  }
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(none.size(), 0u);
  EXPECT_FALSE(none.enabled());
}

TEST(Nearest, UniqueNearestWins) {
  NearestAccumulator acc(1, 1e-9);
  acc.accumulate(2.0, scalar(1.0), 0, 0);
  acc.accumulate(0.5, scalar(7.0), 1, 0);
  acc.accumulate(3.0, scalar(9.0), 2, 0);
  EXPECT_EQ(acc.finalize()[0], 7.0);
  ASSERT_EQ(acc.winners().size(), 1u);
  EXPECT_EQ(acc.winners()[0].image, 1);
}

TEST(Nearest, TiesAveraged) {
  NearestAccumulator acc(1, 1e-9);
  acc.accumulate(1.0, scalar(2.0), 0, 0);
  acc.accumulate(1.0, scalar(4.0), 1, 0);
  acc.accumulate(1.0 + 1e-13, scalar(6.0), 2, 0);
  EXPECT_NEAR(acc.finalize()[0], 4.0, 1e-15);
  EXPECT_EQ(acc.winners().size(), 3u);
}

TEST(Nearest, LaterCloserCandidateEvictsEarlierTies) {
  NearestAccumulator acc(1, 1e-9);
  acc.accumulate(1.0, scalar(2.0), 0, 0);
  acc.accumulate(1.0, scalar(4.0), 1, 0);
  acc.accumulate(0.1, scalar(8.0), 2, 0);
  EXPECT_EQ(acc.finalize()[0], 8.0);
}

TEST(Nearest, MergeOrderIndependent) {
  for_seeds(130, 20, [](Gen &gen) {
    NearestAccumulator whole(1, 1e-9), a(1, 1e-9), b(1, 1e-9);
    for (Index i = 0; i < 20; ++i) {
      const double d = std::round(gen.uniform(0, 5));
      const Vector v = scalar(gen.uniform());
      whole.accumulate(d, v, i, 0);
      (i % 2 ? a : b).accumulate(d, v, i, 0);
    }
    b.merge(a);
    EXPECT_NEAR(whole.finalize()[0], b.finalize()[0], 1e-15);
  });
}

TEST(Nearest, EmptyThrows) {
  NearestAccumulator acc(2, 1e-9);
  EXPECT_THROW(acc.finalize(), Error);
}
