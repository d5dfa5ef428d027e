#pragma once

#include <string>

#include "teformer/core.hpp"
#include "teformer/nn.hpp"

namespace teformer {

/// Cross-shaped window self-attention: half the heads attend inside
/// horizontal stripes, half inside vertical stripes.
template <typename T>
class Cwsa {
 public:
  Cwsa() = default;
  Cwsa(nn::ParamStore<T>& store, const std::string& name, int channels, int heads, int stripe_width);
  Var<T> operator()(const Var<T>& x, ops::AttentionProbe* probe = nullptr) const;

  int heads() const { return heads_; }
  const nn::Conv2d<T>& qkv() const { return qkv_; }
  const nn::Conv2d<T>& proj() const { return proj_; }

 private:
  int heads_ = 1;
  int stripe_width_ = 1;
  nn::Conv2d<T> qkv_;
  nn::Conv2d<T> proj_;
};

/// Convolutional channel attention: squeeze → bottleneck → sigmoid gate,
/// followed by a depthwise 3×3 residual on the gated map.
template <typename T>
class Ccab {
 public:
  Ccab() = default;
  Ccab(nn::ParamStore<T>& store, const std::string& name, int channels, int reduction = 4);
  Var<T> operator()(const Var<T>& x) const;

  /// Channel gate w ∈ (0,1)^C, shape (n, C, 1, 1).
  Var<T> gate(const Var<T>& x) const;
  /// x ⊙ w, before the depthwise residual.
  Var<T> gated(const Var<T>& x) const;

  const nn::Conv2d<T>& reduce() const { return reduce_; }
  const nn::Conv2d<T>& expand() const { return expand_; }

 private:
  nn::Conv2d<T> reduce_, expand_, depthwise_;
};

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(nn::ParamStore<T>& store, const std::string& name, int channels, int ratio);
  Var<T> operator()(const Var<T>& x) const { return fc2_(ops::gelu(fc1_(x))); }

 private:
  nn::Conv2d<T> fc1_, fc2_;
};

/// x + a·CWSA(LN x) + b·CCAB(LN x), then a residual feed-forward.
template <typename T>
class DualAttentionBlock {
 public:
  DualAttentionBlock() = default;
  DualAttentionBlock(nn::ParamStore<T>& store, const std::string& name, int channels, int heads,
                     int stripe_width, int mlp_ratio);
  Var<T> operator()(const Var<T>& x) const;

 private:
  nn::LayerNorm2d<T> norm1_, norm2_;
  Cwsa<T> cwsa_;
  Ccab<T> ccab_;
  nn::Scaler<T> cwsa_scale_, ccab_scale_;
  FeedForward<T> ffn_;
};

}  // namespace teformer
