#include "teformer/core.hpp"

#include "teformer/errors.hpp"

namespace teformer {

std::string to_string(UpsamplerMode mode) {
  return mode == UpsamplerMode::kDynamic ? "dynamic" : "bilinear";
}

std::string to_string(TamMode mode) {
  switch (mode) {
    case TamMode::kFull: return "full";
    case TamMode::kQcoOnly: return "qco_only";
    case TamMode::kNone: return "none";
  }
  return "full";
}

UpsamplerMode upsampler_mode_from(const std::string& name) {
  if (name == "dynamic") return UpsamplerMode::kDynamic;
  if (name == "bilinear") return UpsamplerMode::kBilinear;
  throw ConfigError("unknown upsampler mode: " + name);
}

TamMode tam_mode_from(const std::string& name) {
  if (name == "full") return TamMode::kFull;
  if (name == "qco_only") return TamMode::kQcoOnly;
  if (name == "none") return TamMode::kNone;
  throw ConfigError("unknown tam mode: " + name);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (num_classes < 2) fail("model.num_classes must be >= 2");
  if (in_channels < 1) fail("model.in_channels must be positive");
  for (int i = 0; i < 4; ++i) {
    if (stage_channels[i] < 1) fail("model.stage_channels must be positive");
    if (stage_depths[i] < 1) fail("model.stage_depths must be positive");
    if (i > 0 && stage_channels[i] < stage_channels[i - 1]) fail("model.stage_channels must be non-decreasing");
    if (stage_channels[i] % head_dim) fail("model.stage_channels must be divisible by model.head_dim");
  }
  for (int n : qco_levels)
    if (n < 2) fail("model.qco_levels must be >= 2");
  if (qco_channels < 1) fail("model.qco_channels must be positive");
  if (stripe_width < 1) fail("model.stripe_width must be positive");
  if (head_dim < 1) fail("model.head_dim must be positive");
  if (mlp_ratio < 1) fail("model.mlp_ratio must be positive");
  if (decoder_channels < 2 || decoder_channels % 2) fail("model.decoder_channels must be a positive even number");
  if (pasppm_pool_sizes.empty() && pasppm_dilations.empty()) fail("model.pasppm needs at least one branch");
  for (int k : pasppm_pool_sizes)
    if (k < 1 || k % 2 == 0) fail("model.pasppm_pool_sizes must be odd and positive");
  for (int d : pasppm_dilations)
    if (d < 1) fail("model.pasppm_dilations must be positive");
}

int stride_ratio(int from, int to) {
  if (from < 1 || to < 1) throw ConfigError("strides must be positive");
  const int big = std::max(from, to), small = std::min(from, to);
  if (big % small) throw ConfigError("stride " + std::to_string(to) + " unreachable from " + std::to_string(from));
  const int r = big / small;
  if (r & (r - 1)) throw ConfigError("stride ratio " + std::to_string(r) + " is not a power of two");
  return r;
}

template <typename T>
DynamicUpsampler<T>::DynamicUpsampler(nn::ParamStore<T>& store, const std::string& name,
                                      int channels, int scale, UpsamplerMode mode)
    : scale_(scale), mode_(mode) {
  if (scale != 2 && scale != 4 && scale != 8)
    throw ConfigError("dynamic upsampling scale must be 2, 4 or 8, got " + std::to_string(scale));
  if (mode == UpsamplerMode::kDynamic)
    predictor_ = nn::Conv2d<T>(store, name + ".offset", channels, 2 * scale * scale, 1,
                               nn::ConvSpec{.init = nn::Init::kSmall});
}

template <typename T>
Var<T> DynamicUpsampler<T>::offsets(const Var<T>& x) const {
  if (mode_ == UpsamplerMode::kBilinear || !offsets_enabled) return {};
  // Channel layout after the shuffle: (row shift, column shift).
  auto raw = ops::pixel_shuffle(predictor_(x), scale_);
  return ops::scale(ops::tanh(raw), static_cast<T>(kMaxOffset));
}

template <typename T>
FeatureMap<T> DynamicUpsampler<T>::operator()(const FeatureMap<T>& x) const {
  if (x.stride % scale_)
    throw ConfigError("upsampling stride " + std::to_string(x.stride) + " by " + std::to_string(scale_) +
                      " is not integral");
  return {ops::bilinear_upsample(x.data, offsets(x.data), scale_), x.stride / scale_};
}

template <typename T>
Align<T>::Align(nn::ParamStore<T>& store, const std::string& name, int in_channels, int in_stride,
                int out_channels, int out_stride, UpsamplerMode mode, bool project, bool bias)
    : in_stride_(in_stride), out_stride_(out_stride) {
  const int ratio = stride_ratio(in_stride, out_stride);
  if (out_stride > in_stride) {
    pool_ = ratio;
  } else if (out_stride < in_stride) {
    up_ = DynamicUpsampler<T>(store, name + ".up", in_channels, ratio, mode);
    upsample_ = true;
  }
  if (project)
    project_ = nn::Conv2d<T>(store, name + ".proj", in_channels, out_channels, 1, nn::ConvSpec{.bias = bias});
  else if (in_channels != out_channels)
    throw ConfigError(name + ": channel change requires a projection");
}

template <typename T>
FeatureMap<T> Align<T>::operator()(const FeatureMap<T>& x) const {
  if (x.stride != in_stride_)
    throw ShapeError("align: expected stride " + std::to_string(in_stride_) + ", got " + std::to_string(x.stride));
  FeatureMap<T> y = x;
  if (pool_ > 1) y = {ops::avg_pool2d(x.data, pool_, pool_, 0), out_stride_};
  if (upsample_) y = up_(x);
  if (project_.defined()) y.data = project_(y.data);
  return y;
}

template class DynamicUpsampler<float>;
template class DynamicUpsampler<double>;
template class Align<float>;
template class Align<double>;

}  // namespace teformer
