#pragma once

#include <optional>
#include <string>
#include <vector>

#include "teformer/core.hpp"
#include "teformer/encoder.hpp"

namespace teformer {

template <typename T>
struct DecoderBundle {
  FeatureMap<T> p_e;   // stride 16, undefined when the edge branch is disabled
  FeatureMap<T> p_d1;  // stride 8
  FeatureMap<T> p_d2;  // stride 8
  FeatureMap<T> p_c;   // stride 32
};

/// Inspection and override hook for a sigmoid gate. When `forced_logit` is
/// set the pre-sigmoid map is replaced by that constant.
template <typename T>
struct GateProbe {
  std::optional<double> forced_logit;
  Var<T> logit;
  Var<T> gate;
};

/// Projects every pyramid level to the decoder width and accumulates them
/// coarse-ward with ×2 average pooling, ending at stride 16 where E4 enters
/// through a ×2 upsampling.
template <typename T>
class EdgeBranch {
 public:
  EdgeBranch() = default;
  EdgeBranch(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg);
  FeatureMap<T> operator()(const PyramidFeatures<T>& e) const;

 private:
  std::array<nn::Conv2d<T>, 3> proj_;
  Align<T> deep_;
};

/// Pixel-attention gate between a shallow stream x and a deeper stream y:
/// σ = sigmoid(<θ(x), φ(y)> / sqrt(c)), out = σ·y + (1 - σ)·x.
template <typename T>
class Dam {
 public:
  Dam() = default;
  Dam(nn::ParamStore<T>& store, const std::string& name, int channels, bool bias = true);
  FeatureMap<T> operator()(const FeatureMap<T>& x, const FeatureMap<T>& y, GateProbe<T>* probe = nullptr) const;

  nn::Conv2d<T>& theta() { return theta_; }
  nn::Conv2d<T>& phi() { return phi_; }

 private:
  nn::Conv2d<T> theta_, phi_;
};

template <typename T>
class DetailBranch {
 public:
  DetailBranch() = default;
  DetailBranch(nn::ParamStore<T>& store, const std::string& name, const ModelConfig& cfg);
  /// Returns (P_d1, P_d2).
  std::pair<FeatureMap<T>, FeatureMap<T>> operator()(const PyramidFeatures<T>& e,
                                                     GateProbe<T>* probe = nullptr) const;

 private:
  bool use_dam_ = true;
  Align<T> shallow_, deep_;
  nn::Conv2d<T> proj2_;
  Dam<T> dam_;
  nn::Conv2d<T> mix_;  // stand-in when the gate is ablated
  nn::Conv2d<T> refine_;
};

/// Parallel pooled and dilated branches over E4, neighbouring branches fused
/// pairwise by 3×3 convolutions, compressed and added to a 1×1 shortcut.
template <typename T>
class Pasppm {
 public:
  Pasppm() = default;
  Pasppm(nn::ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
         const std::vector<int>& pool_sizes, const std::vector<int>& dilations, bool bias = true);
  FeatureMap<T> operator()(const FeatureMap<T>& x) const;

  /// Branch outputs before aggregation, finest context first.
  std::vector<Var<T>> branches(const Var<T>& x) const;

 private:
  struct Branch {
    enum Kind { kIdentity, kPool, kDilated, kGlobal } kind;
    int size = 1;
    nn::Conv2d<T> conv;
  };
  std::vector<Branch> branches_;
  std::vector<nn::Conv2d<T>> aggregate_;
  nn::Conv2d<T> compress_, shortcut_;
};

/// Edge, detail and context branches of the decoder.
template <typename T>
class Eg3Head {
 public:
  Eg3Head() = default;
  Eg3Head(nn::ParamStore<T>& store, const ModelConfig& cfg);
  DecoderBundle<T> operator()(const PyramidFeatures<T>& e, GateProbe<T>* dam_probe = nullptr) const;

  bool has_edge() const { return has_edge_; }

 private:
  bool has_edge_ = true;
  bool use_pasppm_ = true;
  EdgeBranch<T> edge_;
  DetailBranch<T> detail_;
  Pasppm<T> pasppm_;
  nn::Conv2d<T> context_;  // stand-in when PASPPM is ablated
};

}  // namespace teformer
