#include "teformer/attention.hpp"

#include "teformer/errors.hpp"

namespace teformer {

template <typename T>
Cwsa<T>::Cwsa(nn::ParamStore<T>& store, const std::string& name, int channels, int heads,
              int stripe_width)
    : heads_(heads),
      stripe_width_(stripe_width),
      qkv_(store, name + ".qkv", channels, 3 * channels, 1),
      proj_(store, name + ".proj", channels, channels, 1) {
  if (heads < 1 || channels % heads) throw ConfigError(name + ": channels not divisible by heads");
}

template <typename T>
Var<T> Cwsa<T>::operator()(const Var<T>& x, ops::AttentionProbe* probe) const {
  return proj_(ops::stripe_attention(qkv_(x), heads_, stripe_width_, probe));
}

template <typename T>
Ccab<T>::Ccab(nn::ParamStore<T>& store, const std::string& name, int channels, int reduction)
    : reduce_(store, name + ".reduce", channels, std::max(1, channels / reduction), 1),
      expand_(store, name + ".expand", std::max(1, channels / reduction), channels, 1),
      depthwise_(store, name + ".dw", channels, channels, 3, nn::ConvSpec{.groups = channels}) {}

template <typename T>
Var<T> Ccab<T>::gate(const Var<T>& x) const {
  return ops::sigmoid(expand_(ops::gelu(reduce_(ops::global_avg_pool(x)))));
}

template <typename T>
Var<T> Ccab<T>::gated(const Var<T>& x) const {
  return ops::mul(x, gate(x));
}

template <typename T>
Var<T> Ccab<T>::operator()(const Var<T>& x) const {
  auto g = gated(x);
  return ops::add(g, depthwise_(g));
}

template <typename T>
FeedForward<T>::FeedForward(nn::ParamStore<T>& store, const std::string& name, int channels, int ratio)
    : fc1_(store, name + ".fc1", channels, channels * ratio, 1),
      fc2_(store, name + ".fc2", channels * ratio, channels, 1) {}

template <typename T>
DualAttentionBlock<T>::DualAttentionBlock(nn::ParamStore<T>& store, const std::string& name,
                                          int channels, int heads, int stripe_width, int mlp_ratio)
    : norm1_(store, name + ".norm1", channels),
      norm2_(store, name + ".norm2", channels),
      cwsa_(store, name + ".cwsa", channels, heads, stripe_width),
      ccab_(store, name + ".ccab", channels),
      cwsa_scale_(store, name + ".cwsa.scale"),
      ccab_scale_(store, name + ".ccab.scale"),
      ffn_(store, name + ".ffn", channels, mlp_ratio) {}

template <typename T>
Var<T> DualAttentionBlock<T>::operator()(const Var<T>& x) const {
  auto n = norm1_(x);
  auto y = ops::add(x, ops::add(cwsa_scale_(cwsa_(n)), ccab_scale_(ccab_(n))));
  return ops::add(y, ffn_(norm2_(y)));
}

template class Cwsa<float>;
template class Cwsa<double>;
template class Ccab<float>;
template class Ccab<double>;
template class FeedForward<float>;
template class FeedForward<double>;
template class DualAttentionBlock<float>;
template class DualAttentionBlock<double>;

}  // namespace teformer
