#pragma once

#include <array>
#include <string>

#include "teformer/attention.hpp"
#include "teformer/core.hpp"
#include "teformer/qco.hpp"

namespace teformer {

template <typename T>
struct TamFeatures {
  FeatureMap<T> enhanced;                 // X'
  std::array<FeatureMap<T>, 4> branches;  // X''_s at relative scales 1/8, 1/4, 1/2, 1
  FeatureMap<T> fused;                    // X_TaM
};

/// Pool divisors of the four texture branches, coarsest first.
inline constexpr std::array<int, 4> kBranchDivisors{8, 4, 2, 1};

/// X' = Concat(Conv(L') · B, X).
template <typename T>
class TamEnhance {
 public:
  TamEnhance() = default;
  TamEnhance(nn::ParamStore<T>& store, const std::string& name, int levels, int qco_channels);
  FeatureMap<T> operator()(const FeatureMap<T>& x, qco::QuantizationResult<T>* trace = nullptr) const;

 private:
  qco::Quantizer<T> quantizer_;
  nn::Conv2d<T> level_proj_;
};

/// X''_s = Pool(Conv(QCO(X'))), pool kernel = divisor. Inputs whose extent is
/// not divisible are replicate-padded first.
template <typename T>
class TamBranch {
 public:
  TamBranch() = default;
  TamBranch(nn::ParamStore<T>& store, const std::string& name, int levels, int qco_channels,
            int out_channels, int divisor);
  FeatureMap<T> operator()(const FeatureMap<T>& enhanced) const;
  int divisor() const { return divisor_; }

 private:
  int divisor_ = 1;
  qco::QcoSpatial<T> qco_;
  nn::Conv2d<T> conv_;
};

/// X_TaM = Conv(Concat(dys(X''_1/8), dys(X''_1/4), dys(X''_1/2), X''_1)).
template <typename T>
class TamFuse {
 public:
  TamFuse() = default;
  TamFuse(nn::ParamStore<T>& store, const std::string& name, int branch_channels, int out_channels,
          UpsamplerMode mode);
  /// `base_h`, `base_w`: extent of the full-resolution branch.
  FeatureMap<T> operator()(const std::array<FeatureMap<T>, 4>& branches) const;

 private:
  std::array<DynamicUpsampler<T>, 3> up_;
  nn::Conv2d<T> mix_;
};

template <typename T>
class TextureAwareModule {
 public:
  TextureAwareModule() = default;
  TextureAwareModule(nn::ParamStore<T>& store, const std::string& name, int channels, int levels,
                     int qco_channels, UpsamplerMode mode);
  FeatureMap<T> operator()(const FeatureMap<T>& x, TamFeatures<T>* trace = nullptr) const;

 private:
  TamEnhance<T> enhance_;
  std::array<TamBranch<T>, 4> branches_;
  TamFuse<T> fuse_;
};

/// Texture branch of a block in one of the three ablation variants: full
/// TaM, QCO features only (QCO then 1×1 projection), or a plain 3×3 conv.
template <typename T>
class TextureBranch {
 public:
  TextureBranch() = default;
  TextureBranch(nn::ParamStore<T>& store, const std::string& name, int channels, int levels,
                int qco_channels, TamMode mode, UpsamplerMode upsampler);
  Var<T> operator()(const Var<T>& x, int stride) const;

 private:
  TamMode mode_ = TamMode::kFull;
  TextureAwareModule<T> tam_;
  qco::QcoSpatial<T> qco_;
  nn::Conv2d<T> conv_;
};

/// y = x + a·TaM(LN x) + b·CWSA(LN x) + c·CCAB(LN x); out = y + FFN(LN y).
template <typename T>
class TextureBlock {
 public:
  TextureBlock() = default;
  TextureBlock(nn::ParamStore<T>& store, const std::string& name, int channels, int heads,
               int stripe_width, int mlp_ratio, int levels, int qco_channels, TamMode mode,
               UpsamplerMode upsampler);
  Var<T> operator()(const Var<T>& x, int stride) const;

  /// Residual branch multipliers (TaM, CWSA, CCAB), learnable, initialised at 1.
  std::array<nn::Scaler<T>, 3>& scalers() { return scalers_; }

 private:
  nn::LayerNorm2d<T> norm1_, norm2_;
  TextureBranch<T> texture_;
  Cwsa<T> cwsa_;
  Ccab<T> ccab_;
  std::array<nn::Scaler<T>, 3> scalers_;
  FeedForward<T> ffn_;
};

}  // namespace teformer
