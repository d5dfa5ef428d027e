#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metrics_oracle.hpp"
#include "teformer/errors.hpp"
#include "teformer/metrics.hpp"

using namespace teformer;
using teformer::testing::brute_force;

namespace {

TEST(Confusion, HandCountedTwoByTwo) {
  const std::vector<int> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
  auto cm = confusion(pred, gt, 2, 255);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 0u);
  EXPECT_EQ(cm.at(1, 1), 2u);
}

TEST(Metrics, HandDerivedTwoByTwo) {
  auto r = compute_metrics(confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2, 255));
  EXPECT_DOUBLE_EQ(r.iou[0], 1.0 / 2);
  EXPECT_DOUBLE_EQ(r.iou[1], 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.f1[0], 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.f1[1], 4.0 / 5);
  EXPECT_DOUBLE_EQ(r.miou, 7.0 / 12);
  EXPECT_DOUBLE_EQ(r.mf1, 11.0 / 15);
  EXPECT_DOUBLE_EQ(r.pa, 3.0 / 4);
}

TEST(Metrics, PerfectPredictionAndAbsentClasses) {
  const std::vector<int> m{0, 2, 2, 0, 255};
  auto r = compute_metrics(confusion(m, m, 4, 255));
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.mf1, 1.0);
  EXPECT_EQ(r.pa, 1.0);
  EXPECT_EQ(r.pixels, 4u);
  EXPECT_FALSE(r.present[1]);
  EXPECT_TRUE(std::isnan(r.iou[3]));
}

TEST(Metrics, ExcludedClassesLeaveMeansButNotPixels) {
  auto cm = confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2, 255);
  auto r = compute_metrics(cm, {0});
  EXPECT_DOUBLE_EQ(r.miou, 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.pa, 3.0 / 4);
}

TEST(Metrics, ErrorsOnEmptyAndOutOfRange) {
  EXPECT_THROW(compute_metrics(ConfusionMatrix(3)), DataError);
  EXPECT_THROW(confusion({0, 3}, {0, 1}, 3, 255), DataError);
  EXPECT_THROW(confusion({0}, {0, 1}, 3, 255), DataError);
  EXPECT_NO_THROW(confusion({0, 1}, {0, 255}, 3, 255));
}

TEST(Confusion, MergeIsConcatenation) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> d(0, 3);
  std::vector<int> a(50), b(50), c(40), e(40);
  for (auto* v : {&a, &b, &c, &e})
    for (auto& x : *v) x = d(rng);
  auto m = confusion(a, b, 4, 255);
  m.merge(confusion(c, e, 4, 255));
  a.insert(a.end(), c.begin(), c.end());
  b.insert(b.end(), e.begin(), e.end());
  EXPECT_EQ(m, confusion(a, b, 4, 255));
}

TEST(Metrics, MatchesBruteForceOnRandomMaps) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 5;
    std::uniform_int_distribution<int> d(0, k - 1);
    std::bernoulli_distribution ignore(0.05);
    std::vector<int> pred(256), gt(256);
    for (int i = 0; i < 256; ++i) {
      pred[i] = d(rng);
      gt[i] = ignore(rng) ? 255 : d(rng);
    }
    auto r = compute_metrics(confusion(pred, gt, k, 255));
    auto b = brute_force(pred, gt, k, 255);
    ASSERT_EQ(r.miou, b.miou) << trial;
    ASSERT_EQ(r.mf1, b.mf1) << trial;
    ASSERT_EQ(r.pa, b.pa) << trial;
  }
}

TEST(Boundary, IdenticalMapsScoreOneShiftedMapsWithinTolerance) {
  const int h = 16, w = 16;
  std::vector<int> gt(h * w, 0), shifted(h * w, 0), far(h * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      gt[y * w + x] = x >= 8;
      shifted[y * w + x] = x >= 10;
      far[y * w + x] = x >= 13;
    }
  EXPECT_EQ(boundary_counts(gt, gt, h, w, 255).f1(), 1.0);
  EXPECT_EQ(boundary_counts(shifted, gt, h, w, 255, 2).f1(), 1.0);
  EXPECT_EQ(boundary_counts(far, gt, h, w, 255, 2).f1(), 0.0);
  std::vector<int> flat(h * w, 1);
  EXPECT_EQ(boundary_counts(flat, flat, h, w, 255).f1(), 1.0);
  auto a = boundary_counts(shifted, gt, h, w, 255), b = boundary_counts(far, gt, h, w, 255);
  a.merge(b);
  EXPECT_EQ(a.gt_total, 2 * b.gt_total);
}

}  // namespace
