#include "teformer/egffm_head.hpp"

#include <cmath>

#include "teformer/errors.hpp"

namespace teformer {

template <typename T>
EdgeGate<T>::EdgeGate(nn::ParamStore<T>& store, const std::string& name, int channels, UpsamplerMode mode,
                      bool bias)
    : up_(store, name + ".up", channels, 2, mode),
      score_(store, name + ".score", channels, 1, 1, nn::ConvSpec{.bias = bias}) {}

template <typename T>
FeatureMap<T> EdgeGate<T>::operator()(const FeatureMap<T>& p_e, GateProbe<T>* probe,
                                      FeatureMap<T>* upsampled) const {
  if (p_e.stride != 16) throw ShapeError("edge_gate: P_e must be at stride 16, got " + std::to_string(p_e.stride));
  auto up = up_(p_e);
  auto logit = score_(up.data);
  if (probe && probe->forced_logit) logit = Var<T>(logit.shape(), static_cast<T>(*probe->forced_logit));
  auto gate = ops::sigmoid(logit);
  if (probe) {
    probe->logit = logit;
    probe->gate = gate;
  }
  if (upsampled) *upsampled = up;
  return {gate, up.stride};
}

template <typename T>
Egffm<T>::Egffm(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg)
    : gated_(cfg.egffm), literal_(cfg.literal_fusion) {
  const int cd = cfg.decoder_channels;
  const nn::ConvSpec spec{.bias = cfg.decoder_bias};
  if (gated_) gate_ = EdgeGate<T>(store, name + ".gate", cd, cfg.upsampler, cfg.decoder_bias);
  if (!(gated_ && literal_)) context_up_ = DynamicUpsampler<T>(store, name + ".context_up", cd, 4, cfg.upsampler);
  out_up_ = DynamicUpsampler<T>(store, name + ".out_up", cd, 2, cfg.upsampler);
  detail_conv_ = nn::Conv2d<T>(store, name + ".detail_conv", cd, cd, 3, spec);
  context_conv_ = nn::Conv2d<T>(store, name + ".context_conv", cd, cd, 3, spec);
}

template <typename T>
FeatureMap<T> Egffm<T>::operator()(const DecoderBundle<T>& d, GateProbe<T>* probe, FusionTrace<T>* trace) const {
  if (d.p_d2.stride != 8 || d.p_c.stride != 32)
    throw ShapeError("egffm: expected P_d2 at stride 8 and P_c at stride 32");
  FusionTrace<T> local;
  FusionTrace<T>& t = trace ? *trace : local;
  if (gated_) {
    FeatureMap<T> edge_up;
    t.sigma = gate_(d.p_e, probe, &edge_up);
    t.context = literal_ ? edge_up : context_up_(d.p_c);
    t.detail_term = detail_conv_(ops::mul(t.sigma.data, d.p_d2.data));
    t.context_term = context_conv_(ops::mul(ops::one_minus(t.sigma.data), t.context.data));
  } else {
    t.context = context_up_(d.p_c);
    t.detail_term = detail_conv_(d.p_d2.data);
    t.context_term = context_conv_(t.context.data);
  }
  return out_up_(FeatureMap<T>{ops::add(t.detail_term, t.context_term), 8});
}

template <typename T>
SegmentHead<T>::SegmentHead(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg) {
  const int cd = cfg.decoder_channels;
  const nn::ConvSpec spec{.bias = cfg.decoder_bias};
  proj_ = nn::Conv2d<T>(store, name + ".proj1", cfg.stage_channels[0], cd, 1, spec);
  merge_ = nn::Conv2d<T>(store, name + ".merge", 2 * cd, cd, 1, spec);
  fc1_ = nn::Conv2d<T>(store, name + ".mlp.fc1", cd, cd, 1, spec);
  fc2_ = nn::Conv2d<T>(store, name + ".mlp.fc2", cd, cfg.num_classes, 1, spec);
  up_ = DynamicUpsampler<T>(store, name + ".up", cfg.num_classes, 4, cfg.upsampler);
}

template <typename T>
SegmentationOutput<T> SegmentHead<T>::operator()(const FeatureMap<T>& f, const FeatureMap<T>& e1) const {
  if (f.stride != 4 || e1.stride != 4) throw ShapeError("segment_head: F and E1 must be at stride 4");
  auto g = merge_(ops::concat_channels<T>({f.data, proj_(e1.data)}));
  auto logits = up_(FeatureMap<T>{fc2_(ops::gelu(fc1_(g))), 4});
  SegmentationOutput<T> out;
  out.logits = logits;
  std::tie(out.probabilities, out.class_map) = softmax_argmax(logits.data);
  return out;
}

template <typename T>
std::pair<Var<T>, std::vector<int>> softmax_argmax(const Var<T>& logits) {
  const Shape s = logits.shape();
  const int hw = s.h * s.w;
  std::vector<T> prob(s.numel());
  std::vector<int> labels(static_cast<std::size_t>(s.n) * hw);
  const auto x = logits.data();
  for (int n = 0; n < s.n; ++n)
    for (int p = 0; p < hw; ++p) {
      const std::size_t base = static_cast<std::size_t>(n) * s.c * hw + p;
      int best = 0;
      T mx = x[base];
      for (int c = 1; c < s.c; ++c)
        if (x[base + static_cast<std::size_t>(c) * hw] > mx) mx = x[base + static_cast<std::size_t>(c) * hw], best = c;
      T z = 0;
      for (int c = 0; c < s.c; ++c) z += prob[base + static_cast<std::size_t>(c) * hw] = std::exp(x[base + static_cast<std::size_t>(c) * hw] - mx);
      for (int c = 0; c < s.c; ++c) prob[base + static_cast<std::size_t>(c) * hw] /= z;
      labels[static_cast<std::size_t>(n) * hw + p] = best;
    }
  return {Var<T>(s, std::move(prob)), std::move(labels)};
}

template class EdgeGate<float>;
template class EdgeGate<double>;
template class Egffm<float>;
template class Egffm<double>;
template class SegmentHead<float>;
template class SegmentHead<double>;
template std::pair<Var<float>, std::vector<int>> softmax_argmax(const Var<float>&);
template std::pair<Var<double>, std::vector<int>> softmax_argmax(const Var<double>&);

}  // namespace teformer
