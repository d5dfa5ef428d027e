#pragma once

// Raw dense kernels. The top-level namespace holds the OpenMP-parallel
// versions used by the differentiable ops; `reference` holds plain serial
// loops kept as the ground truth for kernel tests and benchmarks.
//
// All parallel kernels partition work over disjoint outputs and keep a fixed
// summation order, so results do not depend on the thread count.
// Backward kernels accumulate into their gradient outputs; pass nullptr to
// skip a gradient.

namespace teformer::kernels {

struct ConvGeometry {
  int n = 1, cin = 1, h = 1, w = 1;
  int cout = 1, kh = 1, kw = 1;
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
  int dil_h = 1, dil_w = 1;
  int groups = 1;

  int hout() const { return (h + 2 * pad_h - dil_h * (kh - 1) - 1) / stride_h + 1; }
  int wout() const { return (w + 2 * pad_w - dil_w * (kw - 1) - 1) / stride_w + 1; }
};

struct PoolGeometry {
  int n = 1, c = 1, h = 1, w = 1;
  int kernel = 1, stride = 1, pad = 0;

  int hout() const { return (h + 2 * pad - kernel) / stride + 1; }
  int wout() const { return (w + 2 * pad - kernel) / stride + 1; }
};

/// Upsampling by an integer factor with optional per-output-pixel offsets
/// (layout n × 2 × h·scale × w·scale, channel 0 = row shift, 1 = column
/// shift, in source cells). Half-pixel centres, border clamping.
struct SampleGeometry {
  int n = 1, c = 1, h = 1, w = 1;
  int scale = 2;

  int hout() const { return h * scale; }
  int wout() const { return w * scale; }
};

/// C (m×n) = op(A) · op(B), or C += ... when `accumulate`. Row-major;
/// op(A) is m×k, op(B) is k×n.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* grad_y,
                     T* grad_x, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y);

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_y, T* grad_x);

template <typename T>
void bilinear_forward(const SampleGeometry& g, const T* x, const T* offsets, T* y);

template <typename T>
void bilinear_backward(const SampleGeometry& g, const T* x, const T* offsets, const T* grad_y,
                       T* grad_x, T* grad_offsets);

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* grad_y,
                     T* grad_x, T* grad_weight, T* grad_bias);

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y);

template <typename T>
void bilinear_forward(const SampleGeometry& g, const T* x, const T* offsets, T* y);

template <typename T>
void bilinear_backward(const SampleGeometry& g, const T* x, const T* offsets, const T* grad_y,
                       T* grad_x, T* grad_offsets);

}  // namespace reference
}  // namespace teformer::kernels
