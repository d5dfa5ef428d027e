#pragma once

#include <memory>

#include "teformer/egffm_head.hpp"
#include "teformer/encoder.hpp"

namespace teformer {

template <typename T>
struct ModelTrace {
  PyramidFeatures<T> pyramid;
  DecoderBundle<T> bundle;
  FusionTrace<T> fusion;
  FeatureMap<T> fused;  // F
  GateProbe<T> dam_probe;
  GateProbe<T> edge_probe;
};

template <typename T>
class TEFormer {
 public:
  explicit TEFormer(const ModelConfig& cfg);
  TEFormer(const TEFormer&) = delete;
  TEFormer& operator=(const TEFormer&) = delete;

  /// `image` is (n, in_channels, H, W). Probes set in `trace` before the
  /// call are honoured.
  SegmentationOutput<T> forward(const Var<T>& image, ModelTrace<T>* trace = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return *store_; }
  const nn::ParamStore<T>& params() const { return *store_; }
  Encoder<T>& encoder() { return encoder_; }
  Egffm<T>& fusion() { return egffm_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<nn::ParamStore<T>> store_;
  Encoder<T> encoder_;
  Eg3Head<T> decoder_;
  Egffm<T> egffm_;
  SegmentHead<T> head_;
};

}  // namespace teformer
