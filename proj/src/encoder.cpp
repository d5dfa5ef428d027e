#include "teformer/encoder.hpp"

#include "teformer/errors.hpp"

namespace teformer {

template <typename T>
Encoder<T>::Encoder(nn::ParamStore<T>& store, const ModelConfig& cfg) {
  const auto& ch = cfg.stage_channels;
  stem_ = nn::Conv2d<T>(store, "stem.conv", cfg.in_channels, ch[0], 4, nn::ConvSpec{.stride = 4, .padding = 0});
  stem_norm_ = nn::LayerNorm2d<T>(store, "stem.norm", ch[0]);
  for (int i = 0; i < 3; ++i) {
    const std::string name = "stage" + std::to_string(i + 2) + ".merge";
    merge_[i] = nn::Conv2d<T>(store, name + ".conv", ch[i], ch[i + 1], 2, nn::ConvSpec{.stride = 2, .padding = 0});
    merge_norm_[i] = nn::LayerNorm2d<T>(store, name + ".norm", ch[i + 1]);
  }
  for (int s = 0; s < 4; ++s) {
    const int heads = std::max(1, ch[s] / cfg.head_dim);
    for (int j = 0; j < cfg.stage_depths[s]; ++j) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(j);
      if (s < 2)
        texture_[s].emplace_back(store, name, ch[s], heads, cfg.stripe_width, cfg.mlp_ratio, cfg.qco_levels[s],
                                 cfg.qco_channels, cfg.tam, cfg.upsampler);
      else
        dual_[s - 2].emplace_back(store, name, ch[s], heads, cfg.stripe_width, cfg.mlp_ratio);
    }
  }
}

template <typename T>
PyramidFeatures<T> Encoder<T>::operator()(const Var<T>& image) const {
  const Shape s = image.shape();
  if (s.h % 32 || s.w % 32)
    throw ShapeError("encoder input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by 32");
  PyramidFeatures<T> out;
  Var<T> x = stem_norm_(stem_(image));
  for (int stage = 0; stage < 4; ++stage) {
    if (stage > 0) x = merge_norm_[stage - 1](merge_[stage - 1](x));
    if (stage < 2)
      for (const auto& block : texture_[stage]) x = block(x, kStageStrides[stage]);
    else
      for (const auto& block : dual_[stage - 2]) x = block(x);
    out.e[stage] = {x, kStageStrides[stage]};
  }
  return out;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace teformer
