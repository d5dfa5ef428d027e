#pragma once

#include <array>
#include <string>
#include <vector>

#include "teformer/attention.hpp"
#include "teformer/core.hpp"
#include "teformer/tam.hpp"

namespace teformer {

template <typename T>
struct PyramidFeatures {
  std::array<FeatureMap<T>, 4> e;  // E1..E4 at strides 4, 8, 16, 32

  const FeatureMap<T>& operator[](int i) const { return e[i]; }
};

inline constexpr std::array<int, 4> kStageStrides{4, 8, 16, 32};

/// Four-stage hierarchy: a ×4 patch stem, texture blocks in stages 1 and 2,
/// dual-attention blocks in stages 3 and 4, and ×2 patch merges between
/// stages. Parameters are named `stem.*`, `stage{i}.merge.*` and
/// `stage{i}.block{j}.<branch>.<param>` with 1-based i, 0-based j.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(nn::ParamStore<T>& store, const ModelConfig& cfg);

  /// `image` is (n, in_channels, H, W) with H, W divisible by 32.
  PyramidFeatures<T> operator()(const Var<T>& image) const;

  std::vector<TextureBlock<T>>& texture_blocks(int stage) { return texture_[stage]; }

 private:
  nn::Conv2d<T> stem_;
  nn::LayerNorm2d<T> stem_norm_;
  std::array<nn::Conv2d<T>, 3> merge_;
  std::array<nn::LayerNorm2d<T>, 3> merge_norm_;
  std::array<std::vector<TextureBlock<T>>, 2> texture_;
  std::array<std::vector<DualAttentionBlock<T>>, 2> dual_;
};

}  // namespace teformer
