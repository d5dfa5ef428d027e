#include "teformer/tam.hpp"

#include "teformer/errors.hpp"
#include "teformer/log.hpp"

namespace teformer {

template <typename T>
TamEnhance<T>::TamEnhance(nn::ParamStore<T>& store, const std::string& name, int levels,
                          int qco_channels)
    : quantizer_(store, name + ".qco", levels, qco_channels),
      level_proj_(store, name + ".level_proj", qco_channels, qco_channels, 3, 1, nn::ConvSpec{}) {}

template <typename T>
FeatureMap<T> TamEnhance<T>::operator()(const FeatureMap<T>& x, qco::QuantizationResult<T>* trace) const {
  auto r = quantizer_(x.data);
  auto projected = qco::to_matrix(level_proj_(qco::to_conv(r.updated)));
  auto texture = qco::spatial_reproject(projected, r.encoding);
  FeatureMap<T> out{ops::concat_channels<T>({texture, x.data}), x.stride};
  if (trace) *trace = std::move(r);
  return out;
}

template <typename T>
TamBranch<T>::TamBranch(nn::ParamStore<T>& store, const std::string& name, int levels,
                        int qco_channels, int out_channels, int divisor)
    : divisor_(divisor),
      qco_(store, name + ".qco", levels, qco_channels),
      conv_(store, name + ".conv", qco_channels, out_channels, 3) {
  if (divisor < 1) throw ConfigError(name + ": pool divisor must be positive");
}

template <typename T>
FeatureMap<T> TamBranch<T>::operator()(const FeatureMap<T>& enhanced) const {
  auto texture = qco_(enhanced);
  auto y = ops::gelu(conv_(texture.data));
  if (divisor_ == 1) return {y, enhanced.stride};
  const Shape s = y.shape();
  const int pad_h = (divisor_ - s.h % divisor_) % divisor_;
  const int pad_w = (divisor_ - s.w % divisor_) % divisor_;
  if (pad_h || pad_w) {
    log::debug("tam_branch: replicate-padding " + s.str() + " for pool divisor " + std::to_string(divisor_));
    y = ops::replicate_pad(y, pad_h, pad_w);
  }
  return {ops::avg_pool2d(y, divisor_, divisor_, 0), enhanced.stride * divisor_};
}

template <typename T>
TamFuse<T>::TamFuse(nn::ParamStore<T>& store, const std::string& name, int branch_channels,
                    int out_channels, UpsamplerMode mode)
    : mix_(store, name + ".mix", 4 * branch_channels, out_channels, 1) {
  for (int i = 0; i < 3; ++i)
    up_[i] = DynamicUpsampler<T>(store, name + ".up" + std::to_string(kBranchDivisors[i]), branch_channels,
                                 kBranchDivisors[i], mode);
}

template <typename T>
FeatureMap<T> TamFuse<T>::operator()(const std::array<FeatureMap<T>, 4>& branches) const {
  const FeatureMap<T>& base = branches[3];
  std::vector<Var<T>> parts;
  for (int i = 0; i < 3; ++i) {
    const int div = kBranchDivisors[i];
    if (branches[i].stride != base.stride * div)
      throw ShapeError("tam_fuse: branch stride " + std::to_string(branches[i].stride) + " does not match base " +
                       std::to_string(base.stride) + " x " + std::to_string(div));
    auto up = up_[i](branches[i]).data;
    const Shape us = up.shape();
    if (us.h < base.shape().h || us.w < base.shape().w || us.h - base.shape().h >= div ||
        us.w - base.shape().w >= div)
      throw ShapeError("tam_fuse: branch " + us.str() + " does not cover base " + base.shape().str());
    if (us.h != base.shape().h || us.w != base.shape().w) up = ops::crop(up, base.shape().h, base.shape().w);
    parts.push_back(up);
  }
  parts.push_back(base.data);
  return {mix_(ops::concat_channels(parts)), base.stride};
}

template <typename T>
TextureAwareModule<T>::TextureAwareModule(nn::ParamStore<T>& store, const std::string& name, int channels,
                                          int levels, int qco_channels, UpsamplerMode mode)
    : enhance_(store, name + ".enhance", levels, qco_channels),
      fuse_(store, name + ".fuse", std::max(1, channels / 4), channels, mode) {
  const int branch_channels = std::max(1, channels / 4);
  for (int i = 0; i < 4; ++i)
    branches_[i] = TamBranch<T>(store, name + ".branch" + std::to_string(i), levels, qco_channels,
                                branch_channels, kBranchDivisors[i]);
}

template <typename T>
FeatureMap<T> TextureAwareModule<T>::operator()(const FeatureMap<T>& x, TamFeatures<T>* trace) const {
  auto enhanced = enhance_(x);
  std::array<FeatureMap<T>, 4> branches;
  for (int i = 0; i < 4; ++i) branches[i] = branches_[i](enhanced);
  auto fused = fuse_(branches);
  if (trace) *trace = TamFeatures<T>{enhanced, branches, fused};
  return fused;
}

template <typename T>
TextureBranch<T>::TextureBranch(nn::ParamStore<T>& store, const std::string& name, int channels,
                                int levels, int qco_channels, TamMode mode, UpsamplerMode upsampler)
    : mode_(mode) {
  switch (mode) {
    case TamMode::kFull:
      tam_ = TextureAwareModule<T>(store, name, channels, levels, qco_channels, upsampler);
      break;
    case TamMode::kQcoOnly:
      qco_ = qco::QcoSpatial<T>(store, name + ".qco", levels, qco_channels);
      conv_ = nn::Conv2d<T>(store, name + ".proj", qco_channels, channels, 1);
      break;
    case TamMode::kNone:
      conv_ = nn::Conv2d<T>(store, name + ".conv", channels, channels, 3);
      break;
  }
}

template <typename T>
Var<T> TextureBranch<T>::operator()(const Var<T>& x, int stride) const {
  switch (mode_) {
    case TamMode::kFull: return tam_(FeatureMap<T>{x, stride}).data;
    case TamMode::kQcoOnly: return conv_(qco_(FeatureMap<T>{x, stride}).data);
    case TamMode::kNone: return conv_(x);
  }
  return x;
}

template <typename T>
TextureBlock<T>::TextureBlock(nn::ParamStore<T>& store, const std::string& name, int channels, int heads,
                              int stripe_width, int mlp_ratio, int levels, int qco_channels, TamMode mode,
                              UpsamplerMode upsampler)
    : norm1_(store, name + ".norm1", channels),
      norm2_(store, name + ".norm2", channels),
      texture_(store, name + ".tam", channels, levels, qco_channels, mode, upsampler),
      cwsa_(store, name + ".cwsa", channels, heads, stripe_width),
      ccab_(store, name + ".ccab", channels),
      scalers_{nn::Scaler<T>(store, name + ".tam.scale"), nn::Scaler<T>(store, name + ".cwsa.scale"),
               nn::Scaler<T>(store, name + ".ccab.scale")},
      ffn_(store, name + ".ffn", channels, mlp_ratio) {}

template <typename T>
Var<T> TextureBlock<T>::operator()(const Var<T>& x, int stride) const {
  auto n = norm1_(x);
  auto branches = ops::add(scalers_[0](texture_(n, stride)),
                           ops::add(scalers_[1](cwsa_(n)), scalers_[2](ccab_(n))));
  auto y = ops::add(x, branches);
  return ops::add(y, ffn_(norm2_(y)));
}

template class TamEnhance<float>;
template class TamEnhance<double>;
template class TamBranch<float>;
template class TamBranch<double>;
template class TamFuse<float>;
template class TamFuse<double>;
template class TextureAwareModule<float>;
template class TextureAwareModule<double>;
template class TextureBranch<float>;
template class TextureBranch<double>;
template class TextureBlock<float>;
template class TextureBlock<double>;

}  // namespace teformer
