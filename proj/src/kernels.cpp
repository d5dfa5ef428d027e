#include "teformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace teformer::kernels {
namespace {

constexpr long kParallelWork = 1L << 15;
constexpr int kBlockK = 128;

template <typename T>
std::vector<T> transposed(const T* src, int rows, int cols) {
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
  return out;
}

// Row-major im2col for one image and one channel group.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, int c_begin, int c_count, T* col) {
  const int ho = g.hout(), wo = g.wout();
  const int rows = c_count * g.kh * g.kw;
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * ho * wo > kParallelWork)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % g.kw;
    const int ky = (r / g.kw) % g.kh;
    const int ch = c_begin + r / (g.kw * g.kh);
    const T* plane = x + static_cast<std::size_t>(ch) * g.h * g.w;
    T* dst = col + static_cast<std::size_t>(r) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
      for (int ox = 0; ox < wo; ++ox) {
        const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
        dst[oy * wo + ox] =
            (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : T(0);
      }
    }
  }
}

// Accumulating inverse of im2col. Rows that share a channel are handled by one
// thread, so writes never race.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, int c_begin, int c_count, T* x) {
  const int ho = g.hout(), wo = g.wout();
  const int taps = g.kh * g.kw;
#pragma omp parallel for schedule(static) if (static_cast<long>(c_count) * taps * ho * wo > kParallelWork)
  for (int cc = 0; cc < c_count; ++cc) {
    T* plane = x + static_cast<std::size_t>(c_begin + cc) * g.h * g.w;
    for (int t = 0; t < taps; ++t) {
      const int ky = t / g.kw, kx = t % g.kw;
      const T* src = col + (static_cast<std::size_t>(cc) * taps + t) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
        if (iy < 0 || iy >= g.h) continue;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
          if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[oy * wo + ox];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride_h == 1 && g.stride_w == 1 && g.pad_h == 0 &&
         g.pad_w == 0;
}

bool is_depthwise(const ConvGeometry& g) {
  return g.groups > 1 && g.groups == g.cin && g.groups == g.cout;
}

// Direct depthwise convolution; one output plane per (image, channel).
template <typename T>
void depthwise_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
  const int ho = g.hout(), wo = g.wout();
  const int taps = g.kh * g.kw;
#pragma omp parallel for schedule(static) if (static_cast<long>(g.n) * g.cin * taps * ho * wo > kParallelWork)
  for (int nc = 0; nc < g.n * g.cin; ++nc) {
    const int c = nc % g.cin;
    const T* plane = x + static_cast<std::size_t>(nc) * g.h * g.w;
    const T* w = weight + static_cast<std::size_t>(c) * taps;
    T* out = y + static_cast<std::size_t>(nc) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = bias ? bias[c] : T(0);
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
            if (ix >= 0 && ix < g.w) acc += w[ky * g.kw + kx] * plane[iy * g.w + ix];
          }
        }
        out[oy * wo + ox] = acc;
      }
  }
}

template <typename T>
void depthwise_backward(const ConvGeometry& g, const T* x, const T* weight, const T* grad_y, T* grad_x,
                        T* grad_weight, T* grad_bias) {
  const int ho = g.hout(), wo = g.wout();
  const int taps = g.kh * g.kw;
  // Parallel over channels; each thread owns its channel's weight, bias and
  // input-gradient planes across the whole batch.
#pragma omp parallel for schedule(static) if (static_cast<long>(g.n) * g.cin * taps * ho * wo > kParallelWork)
  for (int c = 0; c < g.cin; ++c) {
    const T* w = weight + static_cast<std::size_t>(c) * taps;
    for (int b = 0; b < g.n; ++b) {
      const std::size_t nc = static_cast<std::size_t>(b) * g.cin + c;
      const T* plane = x + nc * g.h * g.w;
      const T* gy = grad_y + nc * ho * wo;
      T* gx = grad_x ? grad_x + nc * g.h * g.w : nullptr;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T go = gy[oy * wo + ox];
          if (grad_bias) grad_bias[c] += go;
          for (int ky = 0; ky < g.kh; ++ky) {
            const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
            if (iy < 0 || iy >= g.h) continue;
            for (int kx = 0; kx < g.kw; ++kx) {
              const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
              if (ix < 0 || ix >= g.w) continue;
              if (grad_weight) grad_weight[static_cast<std::size_t>(c) * taps + ky * g.kw + kx] += go * plane[iy * g.w + ix];
              if (gx) gx[iy * g.w + ix] += go * w[ky * g.kw + kx];
            }
          }
        }
    }
  }
}

struct Tap {
  int y0, y1, x0, x1;
  double wy, wx;
  bool free_y, free_x;  // false when the coordinate was clamped
};

template <typename T>
Tap sample_tap(const SampleGeometry& g, const T* offsets, int n, int oy, int ox) {
  const int ho = g.hout(), wo = g.wout();
  double sy = (oy + 0.5) / g.scale - 0.5;
  double sx = (ox + 0.5) / g.scale - 0.5;
  if (offsets) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    const T* off = offsets + static_cast<std::size_t>(n) * 2 * plane;
    sy += static_cast<double>(off[static_cast<std::size_t>(oy) * wo + ox]);
    sx += static_cast<double>(off[plane + static_cast<std::size_t>(oy) * wo + ox]);
  }
  if (!std::isfinite(sy) || !std::isfinite(sx)) {
    // Poisoned offsets: keep indices in range and let NaN weights propagate.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return Tap{0, 0, 0, 0, nan, nan, false, false};
  }
  Tap t{};
  t.free_y = sy > 0.0 && sy < g.h - 1;
  t.free_x = sx > 0.0 && sx < g.w - 1;
  sy = std::clamp(sy, 0.0, static_cast<double>(g.h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(g.w - 1));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x0 = static_cast<int>(std::floor(sx));
  t.y1 = std::min(t.y0 + 1, g.h - 1);
  t.x1 = std::min(t.x0 + 1, g.w - 1);
  t.wy = sy - t.y0;
  t.wx = sx - t.x0;
  return t;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  std::vector<T> a_buf;
  if (trans_a) {
    a_buf = transposed(a, k, m);
    a = a_buf.data();
  }
  if (trans_b) {
    // C = A · Bᵀ as row-by-row dot products, B stored (n, k).
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > kParallelWork)
    for (int i = 0; i < m; ++i) {
      const T* arow = a + static_cast<std::size_t>(i) * k;
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const T* brow = b + static_cast<std::size_t>(j) * k;
        T acc = 0;
#pragma omp simd reduction(+ : acc)
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + acc : acc;
      }
    }
    return;
  }
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > kParallelWork)
  for (int i = 0; i < m; ++i) {
    T* __restrict crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int p0 = 0; p0 < k; p0 += kBlockK) {
      const int p1 = std::min(k, p0 + kBlockK);
      for (int p = p0; p < p1; ++p) {
        const T av = arow[p];
        const T* __restrict brow = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
  if (is_depthwise(g)) return depthwise_forward(g, x, weight, bias, y);
  const int ho = g.hout(), wo = g.wout();
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  const int kdim = cin_g * g.kh * g.kw;
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  const bool pointwise = is_pointwise(g) && g.groups == 1;
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw);

  for (int b = 0; b < g.n; ++b) {
    const T* xb = x + static_cast<std::size_t>(b) * g.cin * g.h * g.w;
    T* yb = y + static_cast<std::size_t>(b) * g.cout * hw;
    for (int grp = 0; grp < g.groups; ++grp) {
      const T* cols = xb;
      if (!pointwise) {
        im2col(g, xb, grp * cin_g, cin_g, col.data());
        cols = col.data();
      }
      gemm(false, false, cout_g, static_cast<int>(hw), kdim,
           weight + static_cast<std::size_t>(grp) * cout_g * kdim, cols,
           yb + static_cast<std::size_t>(grp) * cout_g * hw, false);
    }
    if (bias) {
      for (int oc = 0; oc < g.cout; ++oc) {
        T* row = yb + static_cast<std::size_t>(oc) * hw;
        for (std::size_t i = 0; i < hw; ++i) row[i] += bias[oc];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* grad_y,
                     T* grad_x, T* grad_weight, T* grad_bias) {
  if (is_depthwise(g)) return depthwise_backward(g, x, weight, grad_y, grad_x, grad_weight, grad_bias);
  const int ho = g.hout(), wo = g.wout();
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  const int kdim = cin_g * g.kh * g.kw;
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  const bool pointwise = is_pointwise(g) && g.groups == 1;
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw);
  std::vector<T> grad_col(grad_x && !pointwise ? static_cast<std::size_t>(kdim) * hw : 0);

  for (int b = 0; b < g.n; ++b) {
    const T* xb = x + static_cast<std::size_t>(b) * g.cin * g.h * g.w;
    const T* gyb = grad_y + static_cast<std::size_t>(b) * g.cout * hw;
    for (int grp = 0; grp < g.groups; ++grp) {
      const T* w_g = weight + static_cast<std::size_t>(grp) * cout_g * kdim;
      const T* gy_g = gyb + static_cast<std::size_t>(grp) * cout_g * hw;
      if (grad_weight) {
        const T* cols = xb;
        if (!pointwise) {
          im2col(g, xb, grp * cin_g, cin_g, col.data());
          cols = col.data();
        }
        gemm(false, true, cout_g, kdim, static_cast<int>(hw), gy_g, cols,
             grad_weight + static_cast<std::size_t>(grp) * cout_g * kdim, true);
      }
      if (grad_x) {
        T* gxb = grad_x + static_cast<std::size_t>(b) * g.cin * g.h * g.w;
        if (pointwise) {
          gemm(true, false, kdim, static_cast<int>(hw), cout_g, w_g, gy_g, gxb, true);
        } else {
          gemm(true, false, kdim, static_cast<int>(hw), cout_g, w_g, gy_g, grad_col.data(), false);
          col2im(g, grad_col.data(), grp * cin_g, cin_g, gxb);
        }
      }
    }
    if (grad_bias) {
      for (int oc = 0; oc < g.cout; ++oc) {
        const T* row = gyb + static_cast<std::size_t>(oc) * hw;
        T acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += row[i];
        grad_bias[oc] += acc;
      }
    }
  }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y) {
  const int ho = g.hout(), wo = g.wout();
  const T inv = T(1) / static_cast<T>(g.kernel * g.kernel);
#pragma omp parallel for schedule(static) if (static_cast<long>(g.n) * g.c * ho * wo * g.kernel * g.kernel > kParallelWork)
  for (int p = 0; p < g.n * g.c; ++p) {
    const T* src = x + static_cast<std::size_t>(p) * g.h * g.w;
    T* dst = y + static_cast<std::size_t>(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) acc += src[iy * g.w + ix];
          }
        }
        dst[oy * wo + ox] = acc * inv;
      }
  }
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* grad_y, T* grad_x) {
  const int ho = g.hout(), wo = g.wout();
  const T inv = T(1) / static_cast<T>(g.kernel * g.kernel);
#pragma omp parallel for schedule(static) if (static_cast<long>(g.n) * g.c * ho * wo * g.kernel * g.kernel > kParallelWork)
  for (int p = 0; p < g.n * g.c; ++p) {
    const T* src = grad_y + static_cast<std::size_t>(p) * ho * wo;
    T* dst = grad_x + static_cast<std::size_t>(p) * g.h * g.w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const T gv = src[oy * wo + ox] * inv;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += gv;
          }
        }
      }
  }
}

template <typename T>
void bilinear_forward(const SampleGeometry& g, const T* x, const T* offsets, T* y) {
  const int ho = g.hout(), wo = g.wout();
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  std::vector<Tap> taps(out_plane);
  for (int b = 0; b < g.n; ++b) {
#pragma omp parallel for schedule(static) if (static_cast<long>(out_plane) > kParallelWork)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        taps[static_cast<std::size_t>(oy) * wo + ox] = sample_tap(g, offsets, b, oy, ox);

#pragma omp parallel for schedule(static) if (static_cast<long>(g.c) * out_plane > kParallelWork)
    for (int ch = 0; ch < g.c; ++ch) {
      const T* src = x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
      T* dst = y + (static_cast<std::size_t>(b) * g.c + ch) * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) {
        const Tap& t = taps[i];
        const double top = (1 - t.wx) * src[t.y0 * g.w + t.x0] + t.wx * src[t.y0 * g.w + t.x1];
        const double bot = (1 - t.wx) * src[t.y1 * g.w + t.x0] + t.wx * src[t.y1 * g.w + t.x1];
        dst[i] = static_cast<T>((1 - t.wy) * top + t.wy * bot);
      }
    }
  }
}

template <typename T>
void bilinear_backward(const SampleGeometry& g, const T* x, const T* offsets, const T* grad_y,
                       T* grad_x, T* grad_offsets) {
  const int ho = g.hout(), wo = g.wout();
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  std::vector<Tap> taps(out_plane);
  for (int b = 0; b < g.n; ++b) {
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        taps[static_cast<std::size_t>(oy) * wo + ox] = sample_tap(g, offsets, b, oy, ox);

    if (grad_x) {
#pragma omp parallel for schedule(static) if (static_cast<long>(g.c) * out_plane > kParallelWork)
      for (int ch = 0; ch < g.c; ++ch) {
        const T* gy = grad_y + (static_cast<std::size_t>(b) * g.c + ch) * out_plane;
        T* gx = grad_x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
        for (std::size_t i = 0; i < out_plane; ++i) {
          const Tap& t = taps[i];
          const double v = gy[i];
          gx[t.y0 * g.w + t.x0] += static_cast<T>(v * (1 - t.wy) * (1 - t.wx));
          gx[t.y0 * g.w + t.x1] += static_cast<T>(v * (1 - t.wy) * t.wx);
          gx[t.y1 * g.w + t.x0] += static_cast<T>(v * t.wy * (1 - t.wx));
          gx[t.y1 * g.w + t.x1] += static_cast<T>(v * t.wy * t.wx);
        }
      }
    }
    if (grad_offsets && offsets) {
      T* go = grad_offsets + static_cast<std::size_t>(b) * 2 * out_plane;
#pragma omp parallel for schedule(static) if (static_cast<long>(g.c) * out_plane > kParallelWork)
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const std::size_t i = static_cast<std::size_t>(oy) * wo + ox;
          const Tap& t = taps[i];
          double dy = 0, dx = 0;
          for (int ch = 0; ch < g.c; ++ch) {
            const T* src = x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
            const double v = grad_y[(static_cast<std::size_t>(b) * g.c + ch) * out_plane + i];
            const double a = src[t.y0 * g.w + t.x0], bb = src[t.y0 * g.w + t.x1];
            const double c = src[t.y1 * g.w + t.x0], d = src[t.y1 * g.w + t.x1];
            dy += v * ((1 - t.wx) * (c - a) + t.wx * (d - bb));
            dx += v * ((1 - t.wy) * (bb - a) + t.wy * (d - c));
          }
          if (t.free_y) go[i] += static_cast<T>(dy);
          if (t.free_x) go[out_plane + i] += static_cast<T>(dx);
        }
      }
    }
  }
}

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const T bv = trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      T& dst = c[static_cast<std::size_t>(i) * n + j];
      dst = accumulate ? dst + acc : acc;
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* weight, const T* bias, T* y) {
  const int ho = g.hout(), wo = g.wout();
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  for (int b = 0; b < g.n; ++b)
    for (int oc = 0; oc < g.cout; ++oc) {
      const int grp = oc / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bias ? bias[oc] : T(0);
          for (int ic = 0; ic < cin_g; ++ic)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
                const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
                if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                const int ch = grp * cin_g + ic;
                acc += weight[((static_cast<std::size_t>(oc) * cin_g + ic) * g.kh + ky) * g.kw + kx] *
                       x[((static_cast<std::size_t>(b) * g.cin + ch) * g.h + iy) * g.w + ix];
              }
          y[((static_cast<std::size_t>(b) * g.cout + oc) * ho + oy) * wo + ox] = acc;
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* weight, const T* grad_y,
                     T* grad_x, T* grad_weight, T* grad_bias) {
  const int ho = g.hout(), wo = g.wout();
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  for (int b = 0; b < g.n; ++b)
    for (int oc = 0; oc < g.cout; ++oc) {
      const int grp = oc / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const T gy = grad_y[((static_cast<std::size_t>(b) * g.cout + oc) * ho + oy) * wo + ox];
          if (grad_bias) grad_bias[oc] += gy;
          for (int ic = 0; ic < cin_g; ++ic)
            for (int ky = 0; ky < g.kh; ++ky)
              for (int kx = 0; kx < g.kw; ++kx) {
                const int iy = oy * g.stride_h - g.pad_h + ky * g.dil_h;
                const int ix = ox * g.stride_w - g.pad_w + kx * g.dil_w;
                if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                const int ch = grp * cin_g + ic;
                const std::size_t wi = ((static_cast<std::size_t>(oc) * cin_g + ic) * g.kh + ky) * g.kw + kx;
                const std::size_t xi = ((static_cast<std::size_t>(b) * g.cin + ch) * g.h + iy) * g.w + ix;
                if (grad_weight) grad_weight[wi] += gy * x[xi];
                if (grad_x) grad_x[xi] += gy * weight[wi];
              }
        }
    }
}

template <typename T>
void avg_pool_forward(const PoolGeometry& g, const T* x, T* y) {
  const int ho = g.hout(), wo = g.wout();
  for (int p = 0; p < g.n * g.c; ++p)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (int ky = 0; ky < g.kernel; ++ky)
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int iy = oy * g.stride - g.pad + ky, ix = ox * g.stride - g.pad + kx;
            if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
              acc += x[(static_cast<std::size_t>(p) * g.h + iy) * g.w + ix];
          }
        y[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] = acc / static_cast<T>(g.kernel * g.kernel);
      }
}

template <typename T>
void bilinear_forward(const SampleGeometry& g, const T* x, const T* offsets, T* y) {
  const int ho = g.hout(), wo = g.wout();
  for (int b = 0; b < g.n; ++b)
    for (int ch = 0; ch < g.c; ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double sy = (oy + 0.5) / g.scale - 0.5, sx = (ox + 0.5) / g.scale - 0.5;
          if (offsets) {
            sy += offsets[((static_cast<std::size_t>(b) * 2 + 0) * ho + oy) * wo + ox];
            sx += offsets[((static_cast<std::size_t>(b) * 2 + 1) * ho + oy) * wo + ox];
          }
          const bool poisoned = !std::isfinite(sy) || !std::isfinite(sx);
          if (poisoned) sy = sx = 0;
          sy = std::min(std::max(sy, 0.0), static_cast<double>(g.h - 1));
          sx = std::min(std::max(sx, 0.0), static_cast<double>(g.w - 1));
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = y0 + 1 < g.h ? y0 + 1 : y0, x1 = x0 + 1 < g.w ? x0 + 1 : x0;
          const double nan = std::numeric_limits<double>::quiet_NaN();
          const double fy = poisoned ? nan : sy - y0, fx = poisoned ? nan : sx - x0;
          const T* src = x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
          const double v = (1 - fy) * (1 - fx) * src[y0 * g.w + x0] + (1 - fy) * fx * src[y0 * g.w + x1] +
                           fy * (1 - fx) * src[y1 * g.w + x0] + fy * fx * src[y1 * g.w + x1];
          y[((static_cast<std::size_t>(b) * g.c + ch) * ho + oy) * wo + ox] = static_cast<T>(v);
        }
}

template <typename T>
void bilinear_backward(const SampleGeometry& g, const T* x, const T* offsets, const T* grad_y,
                       T* grad_x, T* grad_offsets) {
  const int ho = g.hout(), wo = g.wout();
  for (int b = 0; b < g.n; ++b)
    for (int ch = 0; ch < g.c; ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double sy = (oy + 0.5) / g.scale - 0.5, sx = (ox + 0.5) / g.scale - 0.5;
          const std::size_t iy_off = ((static_cast<std::size_t>(b) * 2 + 0) * ho + oy) * wo + ox;
          const std::size_t ix_off = ((static_cast<std::size_t>(b) * 2 + 1) * ho + oy) * wo + ox;
          if (offsets) {
            sy += offsets[iy_off];
            sx += offsets[ix_off];
          }
          const bool free_y = sy > 0 && sy < g.h - 1, free_x = sx > 0 && sx < g.w - 1;
          const bool poisoned = !std::isfinite(sy) || !std::isfinite(sx);
          if (poisoned) sy = sx = 0;
          sy = std::min(std::max(sy, 0.0), static_cast<double>(g.h - 1));
          sx = std::min(std::max(sx, 0.0), static_cast<double>(g.w - 1));
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = y0 + 1 < g.h ? y0 + 1 : y0, x1 = x0 + 1 < g.w ? x0 + 1 : x0;
          const double nan = std::numeric_limits<double>::quiet_NaN();
          const double fy = poisoned ? nan : sy - y0, fx = poisoned ? nan : sx - x0;
          const T* src = x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
          const double gy = grad_y[((static_cast<std::size_t>(b) * g.c + ch) * ho + oy) * wo + ox];
          if (grad_x) {
            T* gx = grad_x + (static_cast<std::size_t>(b) * g.c + ch) * g.h * g.w;
            gx[y0 * g.w + x0] += static_cast<T>(gy * (1 - fy) * (1 - fx));
            gx[y0 * g.w + x1] += static_cast<T>(gy * (1 - fy) * fx);
            gx[y1 * g.w + x0] += static_cast<T>(gy * fy * (1 - fx));
            gx[y1 * g.w + x1] += static_cast<T>(gy * fy * fx);
          }
          if (grad_offsets && offsets) {
            const double a = src[y0 * g.w + x0], bb = src[y0 * g.w + x1];
            const double c = src[y1 * g.w + x0], d = src[y1 * g.w + x1];
            if (free_y) grad_offsets[iy_off] += static_cast<T>(gy * ((1 - fx) * (c - a) + fx * (d - bb)));
            if (free_x) grad_offsets[ix_off] += static_cast<T>(gy * ((1 - fy) * (bb - a) + fy * (d - c)));
          }
        }
}

}  // namespace reference

#define TEFORMER_INSTANTIATE_KERNELS(NS, T)                                                     \
  template void NS::gemm<T>(bool, bool, int, int, int, const T*, const T*, T*, bool);           \
  template void NS::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);   \
  template void NS::conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, \
                                       T*, T*);                                                 \
  template void NS::avg_pool_forward<T>(const PoolGeometry&, const T*, T*);                     \
  template void NS::bilinear_forward<T>(const SampleGeometry&, const T*, const T*, T*);         \
  template void NS::bilinear_backward<T>(const SampleGeometry&, const T*, const T*, const T*,   \
                                         T*, T*);

TEFORMER_INSTANTIATE_KERNELS(kernels, float)
TEFORMER_INSTANTIATE_KERNELS(kernels, double)
TEFORMER_INSTANTIATE_KERNELS(reference, float)
TEFORMER_INSTANTIATE_KERNELS(reference, double)
template void avg_pool_backward<float>(const PoolGeometry&, const float*, float*);
template void avg_pool_backward<double>(const PoolGeometry&, const double*, double*);

}  // namespace teformer::kernels
