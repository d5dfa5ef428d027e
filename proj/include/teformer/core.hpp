#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "teformer/nn.hpp"
#include "teformer/tensor.hpp"

namespace teformer {

/// Activation tensor (batch, channels, height, width) together with the
/// number of input-image pixels covered by one cell along each axis.
template <typename T>
struct FeatureMap {
  Var<T> data;
  int stride = 1;

  const Shape& shape() const { return data.shape(); }
  int channels() const { return data.shape().c; }
};

enum class UpsamplerMode { kDynamic, kBilinear };
enum class TamMode { kFull, kQcoOnly, kNone };

std::string to_string(UpsamplerMode mode);
std::string to_string(TamMode mode);
UpsamplerMode upsampler_mode_from(const std::string& name);
TamMode tam_mode_from(const std::string& name);

struct ModelConfig {
  int num_classes = 6;
  int in_channels = 3;
  std::array<int, 4> stage_channels{32, 64, 128, 256};
  std::array<int, 4> stage_depths{2, 2, 2, 2};
  /// Quantization levels N for the texture-aware stages 1 and 2.
  std::array<int, 2> qco_levels{8, 8};
  /// Width of counting features and level embeddings inside QCO/TaM.
  int qco_channels = 16;
  int stripe_width = 2;
  int head_dim = 16;
  int mlp_ratio = 2;
  int decoder_channels = 64;
  std::vector<int> pasppm_pool_sizes{5, 9};
  std::vector<int> pasppm_dilations{2, 4};
  UpsamplerMode upsampler = UpsamplerMode::kDynamic;

  // Component switches used by ablations.
  TamMode tam = TamMode::kFull;
  bool pasppm = true;
  bool dam = true;
  bool egffm = true;
  /// Feed dys(P_e) instead of the context stream into the (1 - σ3) slot.
  bool literal_fusion = false;
  bool decoder_bias = true;

  std::uint64_t seed = 0;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

/// Content-aware upsampler: a 1×1 predictor emits scale² offset pairs per
/// source cell, rearranged to one (row, column) shift per output pixel and
/// bounded to ±0.25 source cells by tanh. The shifted grid is sampled
/// bilinearly. In bilinear mode the predictor is absent.
template <typename T>
class DynamicUpsampler {
 public:
  DynamicUpsampler() = default;
  DynamicUpsampler(nn::ParamStore<T>& store, const std::string& name, int channels, int scale,
                   UpsamplerMode mode);

  FeatureMap<T> operator()(const FeatureMap<T>& x) const;
  /// Offsets (n, 2, h·s, w·s) predicted for `x`; undefined in bilinear mode
  /// or when offsets are disabled.
  Var<T> offsets(const Var<T>& x) const;

  int scale() const { return scale_; }
  /// When false, sampling uses the plain bilinear grid even in dynamic mode.
  bool offsets_enabled = true;

 private:
  int scale_ = 2;
  UpsamplerMode mode_ = UpsamplerMode::kDynamic;
  nn::Conv2d<T> predictor_;
};

inline constexpr double kMaxOffset = 0.25;

/// Stride/channel harmonisation: average pooling to reach a coarser stride or
/// dynamic upsampling to reach a finer one, then an optional 1×1 projection.
template <typename T>
class Align {
 public:
  Align() = default;
  Align(nn::ParamStore<T>& store, const std::string& name, int in_channels, int in_stride,
        int out_channels, int out_stride, UpsamplerMode mode, bool project = true,
        bool bias = true);

  FeatureMap<T> operator()(const FeatureMap<T>& x) const;

 private:
  int in_stride_ = 1;
  int out_stride_ = 1;
  int pool_ = 1;
  DynamicUpsampler<T> up_;
  bool upsample_ = false;
  nn::Conv2d<T> project_;
};

/// Ratio between two strides when it is a power of two, otherwise throws.
int stride_ratio(int from, int to);

}  // namespace teformer
