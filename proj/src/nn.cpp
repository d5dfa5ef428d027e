#include "teformer/nn.hpp"

#include <cmath>
#include <random>

#include "teformer/errors.hpp"

namespace teformer::nn {
namespace {

std::uint64_t name_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

template <typename T>
Var<T> ParamStore<T>::create(const std::string& name, Shape shape, Init init, int fan_in) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  std::vector<T> values(shape.numel());
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes: std::fill(values.begin(), values.end(), T(1)); break;
    case Init::kFanIn:
    case Init::kSmall: {
      std::mt19937_64 rng(name_seed(seed_, name));
      const double stddev = init == Init::kSmall ? 1e-3 : 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
      std::normal_distribution<double> dist(0.0, stddev);
      for (auto& v : values) v = static_cast<T>(dist(rng));
      break;
    }
  }
  Var<T> param(shape, std::move(values), true);
  index_.emplace(name, params_.size());
  params_.emplace_back(name, param);
  return param;
}

template <typename T>
Var<T> ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t total = 0;
  for (const auto& [name, p] : params_) total += p.numel();
  return total;
}

template <typename T>
std::size_t ParamStore<T>::elements_with_prefix(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) total += p.numel();
  return total;
}

template <typename T>
void ParamStore<T>::zero_grad() const {
  for (const auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int cin, int cout, int kernel,
                  ConvSpec spec)
    : Conv2d(store, name, cin, cout, kernel, kernel, spec) {}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int cin, int cout, int kernel_h,
                  int kernel_w, ConvSpec spec) {
  if (cin <= 0 || cout <= 0 || kernel_h <= 0 || kernel_w <= 0 || spec.groups <= 0 ||
      cin % spec.groups || cout % spec.groups)
    throw ConfigError("invalid convolution " + name);
  const int cin_g = cin / spec.groups;
  weight = store.create(name + ".weight", Shape{cout, cin_g, kernel_h, kernel_w}, spec.init,
                        cin_g * kernel_h * kernel_w);
  if (spec.bias) bias = store.create(name + ".bias", Shape{1, cout, 1, 1}, Init::kZeros);
  options.stride = spec.stride;
  options.dilation = spec.dilation;
  options.groups = spec.groups;
  if (spec.padding >= 0) {
    options.pad_h = options.pad_w = spec.padding;
  } else {
    options.pad_h = spec.dilation * (kernel_h - 1) / 2;
    options.pad_w = spec.dilation * (kernel_w - 1) / 2;
  }
}

template <typename T>
LayerNorm2d<T>::LayerNorm2d(ParamStore<T>& store, const std::string& name, int channels) {
  gamma = store.create(name + ".gamma", Shape{1, channels, 1, 1}, Init::kOnes);
  beta = store.create(name + ".beta", Shape{1, channels, 1, 1}, Init::kZeros);
}

template <typename T>
Scaler<T>::Scaler(ParamStore<T>& store, const std::string& name, double initial) {
  value = store.create(name, Shape{}, Init::kOnes);
  value.data()[0] = static_cast<T>(initial);
}

template class ParamStore<float>;
template class ParamStore<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct LayerNorm2d<float>;
template struct LayerNorm2d<double>;
template struct Scaler<float>;
template struct Scaler<double>;

}  // namespace teformer::nn
