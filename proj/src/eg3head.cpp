#include "teformer/eg3head.hpp"

#include <cmath>

#include "teformer/errors.hpp"

namespace teformer {

namespace {

nn::ConvSpec spec(bool bias, int dilation = 1) { return nn::ConvSpec{.dilation = dilation, .bias = bias}; }

}  // namespace

template <typename T>
EdgeBranch<T>::EdgeBranch(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg) {
  const int cd = cfg.decoder_channels;
  for (int i = 0; i < 3; ++i)
    proj_[i] = nn::Conv2d<T>(store, name + ".proj" + std::to_string(i + 1), cfg.stage_channels[i], cd, 1,
                             spec(cfg.decoder_bias));
  deep_ = Align<T>(store, name + ".deep", cfg.stage_channels[3], 32, cd, 16, cfg.upsampler, true, cfg.decoder_bias);
}

template <typename T>
FeatureMap<T> EdgeBranch<T>::operator()(const PyramidFeatures<T>& e) const {
  auto r = ops::avg_pool2d(proj_[0](e[0].data), 2, 2, 0);
  r = ops::add(r, proj_[1](e[1].data));
  r = ops::avg_pool2d(r, 2, 2, 0);
  r = ops::add(r, proj_[2](e[2].data));
  return {ops::add(r, deep_(e[3]).data), 16};
}

template <typename T>
Dam<T>::Dam(nn::ParamStore<T>& store, const std::string& name, int channels, bool bias)
    : theta_(store, name + ".theta", channels, std::max(1, channels / 2), 1, spec(bias)),
      phi_(store, name + ".phi", channels, std::max(1, channels / 2), 1, spec(bias)) {}

template <typename T>
FeatureMap<T> Dam<T>::operator()(const FeatureMap<T>& x, const FeatureMap<T>& y, GateProbe<T>* probe) const {
  if (!(x.shape() == y.shape()) || x.stride != y.stride)
    throw ShapeError("dam: operands " + x.shape().str() + " and " + y.shape().str() + " differ");
  auto th = theta_(x.data);
  auto ph = phi_(y.data);
  const int c = th.shape().c;
  // Channel sum of θ ⊙ φ as a 1×1 convolution with a ones kernel.
  Var<T> ones(Shape{1, c, 1, 1}, T(1));
  auto logit = ops::scale(ops::conv2d(ops::mul(th, ph), ones, Var<T>{}, ops::ConvOptions{}),
                          static_cast<T>(1.0 / std::sqrt(static_cast<double>(c))));
  if (probe && probe->forced_logit) logit = Var<T>(logit.shape(), static_cast<T>(*probe->forced_logit));
  auto gate = ops::sigmoid(logit);
  if (probe) {
    probe->logit = logit;
    probe->gate = gate;
  }
  return {ops::add(ops::mul(gate, y.data), ops::mul(ops::one_minus(gate), x.data)), x.stride};
}

template <typename T>
DetailBranch<T>::DetailBranch(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg)
    : use_dam_(cfg.dam) {
  const int cd = cfg.decoder_channels;
  const bool b = cfg.decoder_bias;
  shallow_ = Align<T>(store, name + ".shallow", cfg.stage_channels[0], 4, cd, 8, cfg.upsampler, true, b);
  proj2_ = nn::Conv2d<T>(store, name + ".proj2", cfg.stage_channels[1], cd, 1, spec(b));
  deep_ = Align<T>(store, name + ".deep", cfg.stage_channels[2], 16, cd, 8, cfg.upsampler, true, b);
  if (use_dam_)
    dam_ = Dam<T>(store, name + ".dam", cd, b);
  else
    mix_ = nn::Conv2d<T>(store, name + ".mix", cd, cd, 1, spec(b));
  refine_ = nn::Conv2d<T>(store, name + ".refine", cd, cd, 3, spec(b));
}

template <typename T>
std::pair<FeatureMap<T>, FeatureMap<T>> DetailBranch<T>::operator()(const PyramidFeatures<T>& e,
                                                                    GateProbe<T>* probe) const {
  FeatureMap<T> s{ops::add(shallow_(e[0]).data, proj2_(e[1].data)), 8};
  FeatureMap<T> deep = deep_(e[2]);
  FeatureMap<T> p_d1 = use_dam_ ? dam_(s, deep, probe) : FeatureMap<T>{mix_(ops::add(s.data, deep.data)), 8};
  FeatureMap<T> p_d2{refine_(p_d1.data), 8};
  return {p_d1, p_d2};
}

template <typename T>
Pasppm<T>::Pasppm(nn::ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
                  const std::vector<int>& pool_sizes, const std::vector<int>& dilations, bool bias) {
  const int cb = std::max(1, out_channels / 2);
  auto add = [&](typename Branch::Kind kind, int size, const std::string& tag, int k, int dil) {
    branches_.push_back({kind, size, nn::Conv2d<T>(store, name + "." + tag, in_channels, cb, k, spec(bias, dil))});
  };
  add(Branch::kIdentity, 1, "identity", 1, 1);
  // Interleave pooled and dilated branches by growing receptive field.
  const std::size_t n = std::max(pool_sizes.size(), dilations.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i < pool_sizes.size())
      add(Branch::kPool, pool_sizes[i], "pool" + std::to_string(pool_sizes[i]), 1, 1);
    if (i < dilations.size())
      add(Branch::kDilated, dilations[i], "dilated" + std::to_string(dilations[i]), 3, dilations[i]);
  }
  add(Branch::kGlobal, 0, "global", 1, 1);
  for (std::size_t i = 0; i + 1 < branches_.size(); ++i)
    aggregate_.emplace_back(store, name + ".aggregate" + std::to_string(i), cb, cb, 3, spec(bias));
  compress_ = nn::Conv2d<T>(store, name + ".compress", cb * static_cast<int>(branches_.size()), out_channels, 1,
                            spec(bias));
  shortcut_ = nn::Conv2d<T>(store, name + ".shortcut", in_channels, out_channels, 1, spec(bias));
}

template <typename T>
std::vector<Var<T>> Pasppm<T>::branches(const Var<T>& x) const {
  std::vector<Var<T>> out;
  for (const auto& b : branches_) {
    switch (b.kind) {
      case Branch::kIdentity: out.push_back(b.conv(x)); break;
      case Branch::kPool: out.push_back(b.conv(ops::avg_pool2d(x, b.size, 1, b.size / 2))); break;
      case Branch::kDilated: out.push_back(ops::gelu(b.conv(x))); break;
      case Branch::kGlobal:
        out.push_back(ops::broadcast_to(b.conv(ops::global_avg_pool(x)),
                                        Shape{x.shape().n, b.conv.weight.shape().n, x.shape().h, x.shape().w}));
        break;
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> Pasppm<T>::operator()(const FeatureMap<T>& x) const {
  auto b = branches(x.data);
  std::vector<Var<T>> parts{b[0]};
  for (std::size_t i = 0; i + 1 < b.size(); ++i) parts.push_back(aggregate_[i](ops::add(b[i], b[i + 1])));
  return {ops::add(compress_(ops::concat_channels(parts)), shortcut_(x.data)), x.stride};
}

template <typename T>
Eg3Head<T>::Eg3Head(nn::ParamStore<T>& store, const ModelConfig& cfg)
    : has_edge_(cfg.egffm), use_pasppm_(cfg.pasppm) {
  if (has_edge_) edge_ = EdgeBranch<T>(store, "decoder.edge", cfg);
  detail_ = DetailBranch<T>(store, "decoder.detail", cfg);
  if (use_pasppm_)
    pasppm_ = Pasppm<T>(store, "decoder.pasppm", cfg.stage_channels[3], cfg.decoder_channels, cfg.pasppm_pool_sizes,
                        cfg.pasppm_dilations, cfg.decoder_bias);
  else
    context_ = nn::Conv2d<T>(store, "decoder.context", cfg.stage_channels[3], cfg.decoder_channels, 3,
                             spec(cfg.decoder_bias));
}

template <typename T>
DecoderBundle<T> Eg3Head<T>::operator()(const PyramidFeatures<T>& e, GateProbe<T>* dam_probe) const {
  DecoderBundle<T> out;
  if (has_edge_) out.p_e = edge_(e);
  std::tie(out.p_d1, out.p_d2) = detail_(e, dam_probe);
  out.p_c = use_pasppm_ ? pasppm_(e[3]) : FeatureMap<T>{context_(e[3].data), 32};
  return out;
}

template class EdgeBranch<float>;
template class EdgeBranch<double>;
template class Dam<float>;
template class Dam<double>;
template class DetailBranch<float>;
template class DetailBranch<double>;
template class Pasppm<float>;
template class Pasppm<double>;
template class Eg3Head<float>;
template class Eg3Head<double>;

}  // namespace teformer
