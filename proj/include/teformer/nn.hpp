#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "teformer/ops.hpp"
#include "teformer/tensor.hpp"

namespace teformer::nn {

enum class Init {
  kFanIn,   // normal, std = 1/sqrt(fan_in)
  kSmall,   // normal, std = 1e-3
  kZeros,
  kOnes,
};

/// Owns every learnable tensor of a model under a dotted name. Initial
/// values depend only on (seed, name), so two models that share a
/// parameter name start from identical values regardless of which other
/// modules they contain.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Var<T> create(const std::string& name, Shape shape, Init init, int fan_in = 1);

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }
  Var<T> find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t total_elements() const;
  /// Sum of elements over parameters whose name starts with `prefix`.
  std::size_t elements_with_prefix(const std::string& prefix) const;
  void zero_grad() const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int groups = 1;
  int padding = -1;  // -1: "same" padding for odd kernels at stride 1
  bool bias = true;
  Init init = Init::kFanIn;
};

template <typename T>
struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int cin, int cout, int kernel,
         ConvSpec spec = {});
  /// Rectangular kernel variant (used for convolutions along one axis).
  Conv2d(ParamStore<T>& store, const std::string& name, int cin, int cout, int kernel_h,
         int kernel_w, ConvSpec spec);

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight, bias, options); }
  bool defined() const { return weight.defined(); }

  Var<T> weight;
  Var<T> bias;
  ops::ConvOptions options;
};

/// Channel-wise layer normalisation applied independently at every pixel.
template <typename T>
struct LayerNorm2d {
  LayerNorm2d() = default;
  LayerNorm2d(ParamStore<T>& store, const std::string& name, int channels);
  Var<T> operator()(const Var<T>& x) const { return ops::layer_norm_channels(x, gamma, beta); }

  Var<T> gamma;
  Var<T> beta;
};

/// Learnable scalar multiplier.
template <typename T>
struct Scaler {
  Scaler() = default;
  Scaler(ParamStore<T>& store, const std::string& name, double initial = 1.0);
  Var<T> operator()(const Var<T>& x) const { return ops::mul(x, value); }

  Var<T> value;
};

}  // namespace teformer::nn
