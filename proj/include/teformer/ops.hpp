#pragma once

#include <vector>

#include "teformer/tensor.hpp"

// Differentiable tensor operations. Every function records a backward
// closure when gradient recording is enabled and an input requires grad.

namespace teformer::ops {

// Elementwise with broadcasting: each axis of an operand either matches the
// output extent or is 1.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T value);
/// 1 - a.
template <typename T> Var<T> one_minus(const Var<T>& a);

template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);

struct ConvOptions {
  int stride = 1;
  int pad_h = 0, pad_w = 0;
  int dilation = 1;
  int groups = 1;
};

/// Weight layout (out, in / groups, kh, kw); `bias` may be undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvOptions& opt);

/// Average pooling with zero padding counted in the divisor.
template <typename T> Var<T> avg_pool2d(const Var<T>& x, int kernel, int stride, int pad);
template <typename T> Var<T> replicate_pad(const Var<T>& x, int bottom, int right);
/// Keeps the top-left h × w window.
template <typename T> Var<T> crop(const Var<T>& x, int h, int w);
/// Spatial mean, (n, c, 1, 1).
template <typename T> Var<T> global_avg_pool(const Var<T>& x);
template <typename T> Var<T> broadcast_to(const Var<T>& x, Shape shape);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_channels(const Var<T>& x, int begin, int end);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
/// Swaps the last two axes.
template <typename T> Var<T> transpose_hw(const Var<T>& x);
/// Batched matrix product of (n, 1, m, k) and (n, 1, k, p).
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b);
/// Softmax along the last axis.
template <typename T> Var<T> softmax_w(const Var<T>& x);

/// Per-pixel normalisation over channels with affine (1, c, 1, 1) parameters.
template <typename T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                           T eps = T(1e-6));

/// (n, c·r², h, w) -> (n, c, h·r, w·r).
template <typename T> Var<T> pixel_shuffle(const Var<T>& x, int factor);

/// Integer-factor bilinear upsampling (half-pixel centres, border clamp)
/// with optional per-output-pixel offsets of shape (n, 2, h·s, w·s).
template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, const Var<T>& offsets, int scale);

/// Attention weights captured for inspection; one matrix per (batch, head,
/// stripe), row-major tokens × tokens.
struct AttentionProbe {
  std::vector<std::vector<double>> weights;
  std::vector<int> tokens;
};

/// Cross-shaped stripe attention over a fused qkv map (n, 3c, h, w). The
/// first half of the heads attends within horizontal stripes of
/// `stripe_width` rows, the second half within vertical stripes of
/// `stripe_width` columns. Ragged final stripes are allowed.
template <typename T>
Var<T> stripe_attention(const Var<T>& qkv, int heads, int stripe_width,
                        AttentionProbe* probe = nullptr);

/// Cosine similarity of each pixel feature with the spatial mean feature,
/// (n, 1, h, w). Zero-norm pixels get 0. `degenerate` (optional) is set when
/// some batch item has an all-zero mean feature.
template <typename T>
Var<T> cosine_to_mean(const Var<T>& x, bool* degenerate = nullptr);

/// Triangular soft assignment of similarities (n, 1, h, w) to `levels`
/// uniformly spaced in [-1, 1]; output (n, levels, h, w).
template <typename T> Var<T> triangular_encode(const Var<T>& s, int levels);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

/// Mean negative log-likelihood of per-pixel targets over channel logits.
/// Pixels equal to `ignore_index` are skipped; when none are scored the
/// loss is 0 and `scored` is 0.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& targets, int ignore_index,
                     int* scored = nullptr);

}  // namespace teformer::ops
