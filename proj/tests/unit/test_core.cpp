#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "teformer/core.hpp"
#include "teformer/errors.hpp"

using namespace teformer;
using namespace teformer::testing;

namespace {

// Half-pixel-centre bilinear sample of channel plane `p` (h × w) at output
// (oy, ox) for integer factor s, borders clamped.
double bilinear_oracle(const std::vector<double>& p, int h, int w, int s, int oy, int ox, double dy = 0,
                       double dx = 0) {
  auto coord = [&](int o, int extent, double d) {
    double c = (o + 0.5) / s - 0.5 + d;
    return std::clamp(c, 0.0, double(extent - 1));
  };
  const double sy = coord(oy, h, dy), sx = coord(ox, w, dx);
  const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  auto v = [&](int y, int x) { return p[std::size_t(y) * w + x]; };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

void zero_params(nn::ParamStore<double>& store) {
  for (auto& [name, v] : store.entries()) std::fill(v.data().begin(), v.data().end(), 0.0);
}

TEST(DynamicUpsampler, ZeroOffsetsMatchScalarBilinear) {
  std::mt19937_64 rng(5);
  for (int s : {2, 4, 8}) {
    nn::ParamStore<double> store(1);
    DynamicUpsampler<double> up(store, "up", 3, s, UpsamplerMode::kDynamic);
    zero_params(store);
    auto x = random_var({2, 3, 4, 5}, rng, 1.0, false);
    auto y = up(FeatureMap<double>{x, 8}).data;
    ASSERT_EQ(y.shape(), (Shape{2, 3, 4 * s, 5 * s}));
    double worst = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(x.data().begin() + offset(x.shape(), n, c, 0, 0),
                                  x.data().begin() + offset(x.shape(), n, c, 0, 0) + 20);
        for (int oy = 0; oy < 4 * s; ++oy)
          for (int ox = 0; ox < 5 * s; ++ox)
            worst = std::max(worst, std::abs(y.at(n, c, oy, ox) - bilinear_oracle(plane, 4, 5, s, oy, ox)));
      }
    EXPECT_LE(worst, 1e-6) << "scale " << s;
  }
}

TEST(DynamicUpsampler, TwoByTwoHandCase) {
  nn::ParamStore<double> store(1);
  DynamicUpsampler<double> up(store, "up", 1, 2, UpsamplerMode::kDynamic);
  zero_params(store);
  const std::vector<double> plane{1, 2, 3, 4};
  auto y = up(FeatureMap<double>{Var<double>({1, 1, 2, 2}, plane), 8}).data;
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) EXPECT_NEAR(y.at(0, 0, oy, ox), bilinear_oracle(plane, 2, 2, 2, oy, ox), 1e-12);
  // First row samples x = -0.25 (clamped), 0.25, 0.75, 1.25 (clamped) on the row (1, 2).
  EXPECT_NEAR(y.at(0, 0, 0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 0, 1), 1.25, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 0, 2), 1.75, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 0, 3), 2.0, 1e-12);
}

TEST(DynamicUpsampler, LearnedOffsetsMatchShiftedOracle) {
  std::mt19937_64 rng(6);
  nn::ParamStore<double> store(2);
  DynamicUpsampler<double> up(store, "up", 2, 2, UpsamplerMode::kDynamic);
  for (auto& [name, v] : store.entries())
    for (auto& e : v.data()) e = std::normal_distribution<double>(0, 0.5)(rng);
  auto x = random_var({1, 2, 3, 3}, rng, 1.0, false);
  auto off = up.offsets(x);
  auto y = up(FeatureMap<double>{x, 2}).data;
  double worst = 0;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> plane(x.data().begin() + c * 9, x.data().begin() + c * 9 + 9);
    for (int oy = 0; oy < 6; ++oy)
      for (int ox = 0; ox < 6; ++ox)
        worst = std::max(worst, std::abs(y.at(0, c, oy, ox) - bilinear_oracle(plane, 3, 3, 2, oy, ox,
                                                                              off.at(0, 0, oy, ox),
                                                                              off.at(0, 1, oy, ox))));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(DynamicUpsampler, PreservesConstantMaps) {
  std::mt19937_64 rng(7);
  nn::ParamStore<double> store(3);
  DynamicUpsampler<double> up(store, "up", 4, 4, UpsamplerMode::kDynamic);
  for (auto& [name, v] : store.entries())
    for (auto& e : v.data()) e = std::normal_distribution<double>(0, 1.0)(rng);
  Var<double> x({1, 4, 3, 5}, 2.5);
  auto y = up(FeatureMap<double>{x, 4});
  EXPECT_EQ(y.stride, 1);
  for (double v : y.data.data()) EXPECT_NEAR(v, 2.5, 1e-6);
}

TEST(DynamicUpsampler, OffsetsBounded) {
  std::mt19937_64 rng(8);
  nn::ParamStore<double> store(4);
  DynamicUpsampler<double> up(store, "up", 3, 2, UpsamplerMode::kDynamic);
  for (auto& [name, v] : store.entries())
    for (auto& e : v.data()) e = 50.0 * std::normal_distribution<double>()(rng);
  auto off = up.offsets(random_var({1, 3, 4, 4}, rng, 1.0, false));
  ASSERT_EQ(off.shape(), (Shape{1, 2, 8, 8}));
  for (double v : off.data()) EXPECT_LE(std::abs(v), kMaxOffset);
}

TEST(DynamicUpsampler, BilinearModeHasNoParameters) {
  nn::ParamStore<double> store;
  DynamicUpsampler<double> up(store, "up", 3, 2, UpsamplerMode::kBilinear);
  EXPECT_EQ(store.total_elements(), 0u);
  EXPECT_FALSE(up.offsets(Var<double>({1, 3, 2, 2})).defined());
}

TEST(DynamicUpsampler, RejectsBadScaleAndStride) {
  nn::ParamStore<double> store;
  EXPECT_THROW(DynamicUpsampler<double>(store, "a", 3, 3, UpsamplerMode::kDynamic), ConfigError);
  DynamicUpsampler<double> up(store, "b", 3, 4, UpsamplerMode::kDynamic);
  EXPECT_THROW(up(FeatureMap<double>{Var<double>({1, 3, 2, 2}), 2}), ConfigError);
}

TEST(DynamicUpsampler, GradientsWrtInputAndPredictor) {
  std::mt19937_64 rng(9);
  nn::ParamStore<double> store(5);
  DynamicUpsampler<double> up(store, "up", 2, 2, UpsamplerMode::kDynamic);
  for (auto& [name, v] : store.entries())
    for (auto& e : v.data()) e = std::normal_distribution<double>(0, 0.5)(rng);
  auto x = random_var({1, 2, 3, 3}, rng);
  std::vector<Var<double>> leaves{x};
  std::vector<Probe> probes = spread_probes("x", x, 18);
  for (auto& [name, v] : store.entries()) {
    leaves.push_back(v);
    auto p = spread_probes(name, v, 6);
    probes.insert(probes.end(), p.begin(), p.end());
  }
  auto rs = check_gradients([&] { return probe_loss(up(FeatureMap<double>{x, 2}).data); }, leaves, probes);
  EXPECT_LT(max_rel_error(rs), kFdRelTol);
  EXPECT_GE(compared(rs), 20u);
}

TEST(Align, PoolsUpsamplesAndProjects) {
  nn::ParamStore<double> store(1);
  Align<double> down(store, "down", 4, 4, 6, 16, UpsamplerMode::kDynamic);
  Align<double> upa(store, "upa", 4, 16, 6, 8, UpsamplerMode::kBilinear);
  Align<double> same(store, "same", 4, 8, 4, 8, UpsamplerMode::kDynamic, false);
  auto d = down(FeatureMap<double>{Var<double>({1, 4, 8, 8}, 1.0), 4});
  EXPECT_EQ(d.stride, 16);
  EXPECT_EQ(d.shape(), (Shape{1, 6, 2, 2}));
  auto u = upa(FeatureMap<double>{Var<double>({1, 4, 2, 2}, 1.0), 16});
  EXPECT_EQ(u.stride, 8);
  EXPECT_EQ(u.shape(), (Shape{1, 6, 4, 4}));
  Var<double> x({1, 4, 3, 3}, 0.5);
  EXPECT_EQ(same(FeatureMap<double>{x, 8}).data.node(), x.node());
  EXPECT_THROW(same(FeatureMap<double>{x, 4}), ShapeError);
  EXPECT_THROW(Align<double>(store, "bad", 4, 8, 5, 8, UpsamplerMode::kDynamic, false), ConfigError);
}

TEST(StrideRatio, PowersOfTwoOnly) {
  EXPECT_EQ(stride_ratio(4, 32), 8);
  EXPECT_EQ(stride_ratio(32, 8), 4);
  EXPECT_EQ(stride_ratio(8, 8), 1);
  EXPECT_THROW(stride_ratio(4, 12), ConfigError);
  EXPECT_THROW(stride_ratio(3, 7), ConfigError);
}

TEST(ParamStore, InitDependsOnlyOnSeedAndName) {
  nn::ParamStore<double> a(11), b(11), c(12);
  a.create("other", {1, 1, 3, 3}, nn::Init::kFanIn, 9);
  auto wa = a.create("w", {2, 3, 1, 1}, nn::Init::kFanIn, 3);
  auto wb = b.create("w", {2, 3, 1, 1}, nn::Init::kFanIn, 3);
  auto wc = c.create("w", {2, 3, 1, 1}, nn::Init::kFanIn, 3);
  EXPECT_TRUE(std::equal(wa.data().begin(), wa.data().end(), wb.data().begin()));
  EXPECT_FALSE(std::equal(wa.data().begin(), wa.data().end(), wc.data().begin()));
  EXPECT_THROW(a.create("w", {1, 1, 1, 1}, nn::Init::kZeros), ConfigError);
}

TEST(ModelConfig, ValidateRejectsInconsistentSettings) {
  ModelConfig ok;
  EXPECT_NO_THROW(ok.validate());
  ModelConfig bad = ok;
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ok;
  bad.qco_levels[0] = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = ok;
  bad.stage_channels[2] = 100;  // not divisible by head_dim
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(tam_mode_from("qco_only"), TamMode::kQcoOnly);
  EXPECT_THROW(upsampler_mode_from("nearest"), ConfigError);
}

}  // namespace
