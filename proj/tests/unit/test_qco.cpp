#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "teformer/errors.hpp"
#include "teformer/qco.hpp"

using namespace teformer;
using namespace teformer::testing;
using V = Var<double>;

namespace {

TEST(Levels, UniformOnClosedInterval) {
  auto l = qco::level_values(5);
  ASSERT_EQ(l.size(), 5u);
  const std::vector<double> want{-1.0, -0.5, 0.0, 0.5, 1.0};
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(l[i], want[i]);
}

TEST(Similarity, MatchesDirectCosine) {
  std::mt19937_64 rng(1);
  auto x = random_var({2, 4, 3, 5}, rng, 1.0, false);
  auto s = qco::similarity_map(x);
  ASSERT_EQ(s.shape(), (Shape{2, 1, 3, 5}));
  for (int n = 0; n < 2; ++n) {
    std::vector<double> mean(4, 0.0);
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 15; ++i) mean[c] += x.at(n, c, i / 5, i % 5) / 15.0;
    for (int i = 0; i < 15; ++i) {
      double dot = 0, a = 0, b = 0;
      for (int c = 0; c < 4; ++c) {
        const double v = x.at(n, c, i / 5, i % 5);
        dot += v * mean[c], a += v * v, b += mean[c] * mean[c];
      }
      EXPECT_NEAR(s.at(n, 0, i / 5, i % 5), dot / std::sqrt(a * b), 1e-12);
    }
  }
}

TEST(Similarity, DegenerateInputGivesZeroAndFlag) {
  V x({1, 3, 2, 2}, 0.0);
  x.at(0, 0, 0, 0) = 1.0, x.at(0, 0, 0, 1) = -1.0;  // zero mean feature
  bool degenerate = false;
  auto s = qco::similarity_map(x, &degenerate);
  EXPECT_TRUE(degenerate);
  for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

TEST(SoftQuantize, HandComputedWeights) {
  // N = 5 gives spacing 0.5; s = 0.2 sits 0.4 of the way from level 0 to 0.5.
  V s({1, 1, 1, 3}, std::vector<double>{0.2, -1.0, 0.75});
  auto b = qco::soft_quantize(s, 5);
  ASSERT_EQ(b.shape(), (Shape{1, 5, 1, 3}));
  const double want[3][5] = {{0, 0, 0.6, 0.4, 0}, {1, 0, 0, 0, 0}, {0, 0, 0, 0.5, 0.5}};
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 5; ++n) EXPECT_NEAR(b.at(0, n, 0, i), want[i][n], 1e-12) << i << "," << n;
}

TEST(QcoInvariants, RowSumsCountsAdjacencyAndPermutation) {
  std::mt19937_64 rng(42);
  nn::ParamStore<double> store(3);
  qco::Quantizer<double> quant(store, "q", 8, 6);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_var({1, 5, 4 + trial % 3, 6}, rng, 1.0, false);
    auto r = quant(x);
    const Shape es = r.encoding.shape();
    for (int i = 0; i < es.h * es.w; ++i) {
      double row = 0;
      for (int n = 0; n < es.c; ++n) row += r.encoding.at(0, n, i / es.w, i % es.w);
      ASSERT_NEAR(row, 1.0, 1e-12);
    }
    double total = 0;
    for (double c : r.counts.data()) total += c;
    ASSERT_NEAR(total, 1.0, 1e-12);
    for (int i = 0; i < 8; ++i) {
      double row = 0;
      for (int j = 0; j < 8; ++j) row += r.adjacency.at(0, 0, i, j);
      ASSERT_NEAR(row, 1.0, 1e-12);
    }
    // Counts are a histogram: any pixel permutation leaves them unchanged.
    std::vector<int> perm(es.h * es.w);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    V xp(x.shape());
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < es.h * es.w; ++i)
        xp.at(0, c, perm[i] / es.w, perm[i] % es.w) = x.at(0, c, i / es.w, i % es.w);
    auto rp = quant(xp);
    for (std::size_t n = 0; n < 8; ++n) ASSERT_NEAR(rp.counts.data()[n], r.counts.data()[n], 1e-12);
  }
}

TEST(QcoShapes, LayoutsAndOutput) {
  nn::ParamStore<double> store(4);
  qco::QcoSpatial<double> q(store, "qs", 6, 7);
  std::mt19937_64 rng(5);
  qco::QuantizationResult<double> tr;
  auto y = q(FeatureMap<double>{random_var({2, 3, 5, 4}, rng, 1.0, false), 8}, &tr);
  EXPECT_EQ(y.shape(), (Shape{2, 7, 5, 4}));
  EXPECT_EQ(y.stride, 8);
  EXPECT_EQ(tr.counting.shape(), (Shape{2, 7, 6, 1}));
  EXPECT_EQ(tr.adjacency.shape(), (Shape{2, 1, 6, 6}));
  EXPECT_EQ(tr.updated.shape(), (Shape{2, 1, 6, 7}));
  auto m = random_var({2, 3, 4, 1}, rng, 1.0, false);
  auto back = qco::to_conv(qco::to_matrix(m));
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), m.data().begin()));
  EXPECT_EQ(qco::to_matrix(m).shape(), (Shape{2, 1, 4, 3}));
}

TEST(Reproject, IsPerPixelConvexBlendOfLevelRows) {
  std::mt19937_64 rng(6);
  auto rows = random_var({1, 1, 4, 3}, rng, 1.0, false);
  V enc({1, 4, 1, 2}, std::vector<double>{1, 0.25, 0, 0.75, 0, 0, 0, 0});
  auto out = qco::spatial_reproject(rows, enc);
  ASSERT_EQ(out.shape(), (Shape{1, 3, 1, 2}));
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(out.at(0, c, 0, 0), rows.at(0, 0, 0, c), 1e-12);
    EXPECT_NEAR(out.at(0, c, 0, 1), 0.25 * rows.at(0, 0, 0, c) + 0.75 * rows.at(0, 0, 1, c), 1e-12);
  }
}

// max(0, 1 - |s - L_n| / delta), evaluated one scalar at a time.
double triangle(double s, int n, int levels) {
  const double delta = 2.0 / (levels - 1);
  return std::max(0.0, 1.0 - std::abs(s - (-1.0 + n * delta)) / delta);
}

TEST(SoftQuantize, ThreeLevelRows) {
  V s({1, 1, 1, 3}, std::vector<double>{0.5, 0.0, -1.0});
  auto b = qco::soft_quantize(s, 3);
  const double want[3][3] = {{0, 0.5, 0.5}, {0, 1, 0}, {1, 0, 0}};
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 3; ++n) {
      EXPECT_NEAR(b.at(0, n, 0, i), want[i][n], 1e-15);
      EXPECT_NEAR(b.at(0, n, 0, i), triangle(s.data()[i], n, 3), 1e-15);
    }
  EXPECT_THROW(qco::soft_quantize(s, 1), ConfigError);
}

TEST(Counts, FourIdenticalPixels) {
  auto c = qco::count_levels(qco::soft_quantize(V({1, 1, 2, 2}, 0.5), 3));
  ASSERT_EQ(c.shape(), (Shape{1, 3, 1, 1}));
  EXPECT_NEAR(c.data()[0], 0.0, 1e-15);
  EXPECT_NEAR(c.data()[1], 0.5, 1e-15);
  EXPECT_NEAR(c.data()[2], 0.5, 1e-15);
}

TEST(AttendLevels, IdentityRows) {
  auto [d, l] = qco::attend_levels(V({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1}));
  // Scores are I / sqrt(2), so each row is softmax(1/sqrt(2), 0).
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double hi = e / (e + 1), lo = 1 / (e + 1);
  EXPECT_NEAR(d.at(0, 0, 0, 0), hi, 1e-12);
  EXPECT_NEAR(d.at(0, 0, 0, 1), lo, 1e-12);
  EXPECT_NEAR(d.at(0, 0, 0, 0), 0.6698, 5e-5);
  EXPECT_NEAR(d.at(0, 0, 0, 1), 0.3302, 5e-5);
  EXPECT_NEAR(l.at(0, 0, 0, 0), hi, 1e-12);
  EXPECT_NEAR(l.at(0, 0, 0, 1), lo, 1e-12);
  EXPECT_NEAR(l.at(0, 0, 1, 0), lo, 1e-12);
  EXPECT_NEAR(l.at(0, 0, 1, 1), hi, 1e-12);
}

TEST(AttendLevels, SingleLevelIsIdentity) {
  std::mt19937_64 rng(8);
  auto rows = random_var({1, 1, 1, 5}, rng, 1.0, false);
  auto [d, l] = qco::attend_levels(rows);
  EXPECT_DOUBLE_EQ(d.data()[0], 1.0);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(l.at(0, 0, 0, c), rows.at(0, 0, 0, c), 1e-15);
}

TEST(CountingFeature, SharedMlpGivesEqualRowsForEqualPairs) {
  nn::ParamStore<double> store(9);
  qco::CountingFeature<double> cf(store, "cf", 6);
  // Levels 0 and 2 carry the same (level, count) pair.
  auto a = cf({0.5, -0.5, 0.5}, V({1, 3, 1, 1}, std::vector<double>{0.25, 0.5, 0.25}));
  ASSERT_EQ(a.shape(), (Shape{1, 6, 3, 1}));
  bool differs = false;
  for (int c = 0; c < 6; ++c) {
    EXPECT_EQ(a.at(0, c, 0, 0), a.at(0, c, 2, 0));
    differs |= a.at(0, c, 0, 0) != a.at(0, c, 1, 0);
  }
  EXPECT_TRUE(differs);
}

TEST(Reproject, TwoPixelTwoLevelDotProducts) {
  V rows({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});  // level rows (1,2), (3,4)
  V enc({1, 2, 1, 2}, std::vector<double>{0.3, 0.9, 0.7, 0.1});
  auto out = qco::spatial_reproject(rows, enc);
  // pixel 0 weights (0.3, 0.7); pixel 1 weights (0.9, 0.1)
  EXPECT_NEAR(out.at(0, 0, 0, 0), 0.3 * 1 + 0.7 * 3, 1e-15);
  EXPECT_NEAR(out.at(0, 1, 0, 0), 0.3 * 2 + 0.7 * 4, 1e-15);
  EXPECT_NEAR(out.at(0, 0, 0, 1), 0.9 * 1 + 0.1 * 3, 1e-15);
  EXPECT_NEAR(out.at(0, 1, 0, 1), 0.9 * 2 + 0.1 * 4, 1e-15);
  EXPECT_THROW(qco::spatial_reproject(rows, V({1, 3, 1, 2}, 0.0)), ShapeError);
}

TEST(QcoSpatial, PixelPermutationPermutesOutput) {
  nn::ParamStore<double> store(10);
  qco::QcoSpatial<double> q(store, "qs", 8, 5);
  std::mt19937_64 rng(11);
  auto x = random_var({1, 4, 3, 4}, rng, 1.0, false);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  V xp(x.shape());
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 12; ++i) xp.at(0, c, perm[i] / 4, perm[i] % 4) = x.at(0, c, i / 4, i % 4);
  auto y = q(FeatureMap<double>{x, 4}).data, yp = q(FeatureMap<double>{xp, 4}).data;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(yp.at(0, c, perm[i] / 4, perm[i] % 4), y.at(0, c, i / 4, i % 4), 1e-12);
}

TEST(QcoGradients, QcoSpatialInputsAndParameters) {
  std::mt19937_64 rng(7);
  nn::ParamStore<double> store(8);
  qco::QcoSpatial<double> q(store, "qs", 6, 4);
  auto x = random_var({1, 8, 4, 4}, rng);
  std::vector<V> leaves{x};
  auto probes = spread_probes("x", x, 24);
  for (auto& [name, v] : store.entries()) {
    leaves.push_back(v);
    auto p = spread_probes(name, v, 4);
    probes.insert(probes.end(), p.begin(), p.end());
  }
  auto rs = check_gradients([&] { return probe_loss(q(FeatureMap<double>{x, 4}).data); }, leaves, probes);
  for (const auto& r : rs)
    if (!r.skipped) {
      EXPECT_LT(r.rel_error, kFdRelTol) << r.label;
    }
  EXPECT_GE(compared(rs), 30u);
}

TEST(QcoGradients, KinkProbesAreDetected) {
  // A similarity exactly on a level makes ±h straddle a kink; the recorder
  // must report a different branch signature.
  V s({1, 1, 1, 1}, std::vector<double>{0.5}, true);
  auto rs = check_gradients([&] { return probe_loss(qco::soft_quantize(s, 5)); }, {s}, {{"s", s, 0}});
  EXPECT_TRUE(rs[0].skipped);
  V t({1, 1, 1, 1}, std::vector<double>{0.3}, true);
  rs = check_gradients([&] { return probe_loss(qco::soft_quantize(t, 5)); }, {t}, {{"t", t, 0}});
  EXPECT_FALSE(rs[0].skipped);
  EXPECT_LT(rs[0].rel_error, kFdRelTol);
}

}  // namespace
