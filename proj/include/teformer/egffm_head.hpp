#pragma once

#include <string>
#include <vector>

#include "teformer/eg3head.hpp"

namespace teformer {

template <typename T>
struct SegmentationOutput {
  FeatureMap<T> logits;        // (n, K, H, W), stride 1
  Var<T> probabilities;        // per-pixel softmax, detached
  std::vector<int> class_map;  // argmax, n·H·W row-major
};

/// σ3 = sigmoid(conv1×1(dys(P_e, 2))), one channel at stride 8.
template <typename T>
class EdgeGate {
 public:
  EdgeGate() = default;
  EdgeGate(nn::ParamStore<T>& store, const std::string& name, int channels, UpsamplerMode mode, bool bias);
  FeatureMap<T> operator()(const FeatureMap<T>& p_e, GateProbe<T>* probe = nullptr,
                           FeatureMap<T>* upsampled = nullptr) const;

  nn::Conv2d<T>& score() { return score_; }

 private:
  DynamicUpsampler<T> up_;
  nn::Conv2d<T> score_;
};

template <typename T>
struct FusionTrace {
  FeatureMap<T> sigma;    // σ3
  FeatureMap<T> context;  // dys(P_c, 4), or dys(P_e, 2) in the literal form
  Var<T> detail_term;     // Conv(σ3 · P_d2)
  Var<T> context_term;    // Conv((1 - σ3) · context)
};

/// F = dys(Conv(σ3 · P_d2) + Conv((1 - σ3) · dys(P_c, 4)), 2). With the
/// gate ablated both streams are summed ungated.
template <typename T>
class Egffm {
 public:
  Egffm() = default;
  Egffm(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg);
  FeatureMap<T> operator()(const DecoderBundle<T>& d, GateProbe<T>* probe = nullptr,
                           FusionTrace<T>* trace = nullptr) const;

  nn::Conv2d<T>& detail_conv() { return detail_conv_; }
  nn::Conv2d<T>& context_conv() { return context_conv_; }

 private:
  bool gated_ = true;
  bool literal_ = false;
  EdgeGate<T> gate_;
  DynamicUpsampler<T> context_up_, out_up_;
  nn::Conv2d<T> detail_conv_, context_conv_;
};

/// G = conv1×1(concat(F, proj(E1))); logits = dys(MLP(G), 4).
template <typename T>
class SegmentHead {
 public:
  SegmentHead() = default;
  SegmentHead(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg);
  SegmentationOutput<T> operator()(const FeatureMap<T>& f, const FeatureMap<T>& e1) const;

 private:
  nn::Conv2d<T> proj_, merge_, fc1_, fc2_;
  DynamicUpsampler<T> up_;
};

/// Detached per-pixel softmax over channels and its argmax.
template <typename T>
std::pair<Var<T>, std::vector<int>> softmax_argmax(const Var<T>& logits);

}  // namespace teformer
