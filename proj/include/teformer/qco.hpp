#pragma once

#include <string>
#include <vector>

#include "teformer/core.hpp"
#include "teformer/nn.hpp"

// Quantization-and-counting operator (QCO).
//
// Level features are carried in two layouts:
//   * conv layout   (n, C, N, 1): levels along the height axis, so 1×1 and
//                                 (k×1) convolutions act per level / along levels;
//   * matrix layout (n, 1, N, C): one row per level, for matrix products.

namespace teformer::qco {

/// Uniform levels L_n = -1 + 2n/(N-1), n = 0..N-1.
std::vector<double> level_values(int levels);

template <typename T>
struct QuantizationResult {
  std::vector<double> levels;
  Var<T> similarity;  // (n, 1, h, w)
  Var<T> encoding;    // B, (n, N, h, w)
  Var<T> counts;      // (n, N, 1, 1), column means of B
  Var<T> counting;    // A, conv layout (n, C_a, N, 1)
  Var<T> adjacency;   // D, (n, 1, N, N)
  Var<T> updated;     // L', matrix layout (n, 1, N, C')
  bool degenerate = false;
};

/// Cosine similarity of every pixel feature to the global mean feature.
template <typename T>
Var<T> similarity_map(const Var<T>& x, bool* degenerate = nullptr);

/// Triangular soft assignment with support of one level spacing.
template <typename T>
Var<T> soft_quantize(const Var<T>& similarity, int levels);

/// counts_n = (1 / HW) Σ_i B[i, n].
template <typename T>
Var<T> count_levels(const Var<T>& encoding);

/// conv layout <-> matrix layout.
template <typename T> Var<T> to_matrix(const Var<T>& conv_layout);
template <typename T> Var<T> to_conv(const Var<T>& matrix_layout);

/// Shared two-layer MLP applied to every (level, count) pair.
template <typename T>
class CountingFeature {
 public:
  CountingFeature() = default;
  CountingFeature(nn::ParamStore<T>& store, const std::string& name, int channels);
  /// `counts` is (n, N, 1, 1); returns A in conv layout (n, C_a, N, 1).
  Var<T> operator()(const std::vector<double>& levels, const Var<T>& counts) const;

 private:
  nn::Conv2d<T> fc1_, fc2_;
};

/// D = softmax(M Mᵀ / sqrt(C')) and L' = D M for level rows M (matrix layout).
template <typename T>
std::pair<Var<T>, Var<T>> attend_levels(const Var<T>& rows);

/// 1-D convolution over the level axis followed by `attend_levels`.
template <typename T>
class LevelAttention {
 public:
  LevelAttention() = default;
  LevelAttention(nn::ParamStore<T>& store, const std::string& name, int in_channels, int out_channels);
  /// Returns (D, L') for A in conv layout.
  std::pair<Var<T>, Var<T>> operator()(const Var<T>& counting) const;

 private:
  nn::Conv2d<T> conv_;
};

/// Per-pixel blend of level features: (B · L) reshaped to (n, C'', h, w).
/// `level_rows` is matrix layout (n, 1, N, C''), `encoding` is (n, N, h, w).
template <typename T>
Var<T> spatial_reproject(const Var<T>& level_rows, const Var<T>& encoding);

/// Full QCO pipeline up to the updated level features.
template <typename T>
class Quantizer {
 public:
  Quantizer() = default;
  Quantizer(nn::ParamStore<T>& store, const std::string& name, int levels, int channels);
  QuantizationResult<T> operator()(const Var<T>& x) const;
  int levels() const { return levels_; }
  int channels() const { return channels_; }

 private:
  int levels_ = 2;
  int channels_ = 1;
  CountingFeature<T> counting_;
  LevelAttention<T> attention_;
};

/// similarity → quantize → count → encode → attend → reproject; returns a
/// texture map with `channels` channels at the input resolution and stride.
template <typename T>
class QcoSpatial {
 public:
  QcoSpatial() = default;
  QcoSpatial(nn::ParamStore<T>& store, const std::string& name, int levels, int channels);
  FeatureMap<T> operator()(const FeatureMap<T>& x, QuantizationResult<T>* trace = nullptr) const;

 private:
  Quantizer<T> quantizer_;
};

}  // namespace teformer::qco
