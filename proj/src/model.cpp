#include "teformer/model.hpp"

#include "teformer/errors.hpp"

namespace teformer {

template <typename T>
TEFormer<T>::TEFormer(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  store_ = std::make_unique<nn::ParamStore<T>>(cfg_.seed);
  encoder_ = Encoder<T>(*store_, cfg_);
  decoder_ = Eg3Head<T>(*store_, cfg_);
  egffm_ = Egffm<T>(*store_, "fusion", cfg_);
  head_ = SegmentHead<T>(*store_, "head", cfg_);
}

template <typename T>
SegmentationOutput<T> TEFormer<T>::forward(const Var<T>& image, ModelTrace<T>* trace) const {
  if (image.shape().c != cfg_.in_channels)
    throw ShapeError("model expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     std::to_string(image.shape().c));
  ModelTrace<T> local;
  ModelTrace<T>& t = trace ? *trace : local;
  t.pyramid = encoder_(image);
  t.bundle = decoder_(t.pyramid, &t.dam_probe);
  t.fused = egffm_(t.bundle, &t.edge_probe, &t.fusion);
  return head_(t.fused, t.pyramid[0]);
}

template class TEFormer<float>;
template class TEFormer<double>;

}  // namespace teformer
