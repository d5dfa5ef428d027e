#include "teformer/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "teformer/errors.hpp"
#include "teformer/kernels.hpp"

namespace teformer::ops {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Strides of `s` when iterated under `out`, zero on broadcast axes.
std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
  const std::array<std::size_t, 4> natural{static_cast<std::size_t>(s.c) * s.h * s.w,
                                           static_cast<std::size_t>(s.h) * s.w,
                                           static_cast<std::size_t>(s.w), 1};
  std::array<std::size_t, 4> st{};
  for (int a = 0; a < 4; ++a) st[a] = (s[a] == 1 && out[a] != 1) ? 0 : natural[a];
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  int* dst[4] = {&out.n, &out.c, &out.h, &out.w};
  for (int ax = 0; ax < 4; ++ax) {
    require(a[ax] == b[ax] || a[ax] == 1 || b[ax] == 1,
            "cannot broadcast " + a.str() + " with " + b.str());
    *dst[ax] = std::max(a[ax], b[ax]);
  }
  return out;
}

template <typename F>
void for_each_broadcast(const Shape& out, const std::array<std::size_t, 4>& sa,
                        const std::array<std::size_t, 4>& sb, F&& f) {
  std::size_t o = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int h = 0; h < out.h; ++h)
        for (int w = 0; w < out.w; ++w, ++o)
          f(o, n * sa[0] + c * sa[1] + h * sa[2] + w * sa[3],
            n * sb[0] + c * sb[1] + h * sb[2] + w * sb[3]);
}

enum class Binary { kAdd, kSub, kMul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Binary kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  Var<T> out(out_shape);
  T* y = out.data().data();
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
    switch (kind) {
      case Binary::kAdd: y[o] = av[i] + bv[j]; break;
      case Binary::kSub: y[o] = av[i] - bv[j]; break;
      case Binary::kMul: y[o] = av[i] * bv[j]; break;
    }
  });
  attach<T>(out, {a, b}, [a, b, sa, sb, kind](Node<T>& self) {
    const T* g = self.grad.data();
    T* ga = a.requires_grad() ? a.node()->grad_buffer() : nullptr;
    T* gb = b.requires_grad() ? b.node()->grad_buffer() : nullptr;
    const T* av = a.data().data();
    const T* bv = b.data().data();
    for_each_broadcast(self.shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case Binary::kAdd:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
          break;
        case Binary::kSub:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
          break;
        case Binary::kMul:
          if (ga) ga[i] += g[o] * bv[j];
          if (gb) gb[j] += g[o] * av[i];
          break;
      }
    });
  });
  return out;
}

// Elementwise map with derivative expressed through (input, output).
template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& a, F&& f, D&& df) {
  Var<T> out(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  attach<T>(out, {a}, [a, df](Node<T>& self) {
    T* ga = a.node()->grad_buffer();
    const auto x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * df(x[i], self.value[i]);
  });
  return out;
}

}  // namespace

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b) { return binary(a, b, Binary::kAdd); }
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b) { return binary(a, b, Binary::kSub); }
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b) { return binary(a, b, Binary::kMul); }

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T value) {
  return unary(a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> one_minus(const Var<T>& a) {
  return unary(a, [](T x) { return T(1) - x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
  return unary(
      a,
      [](T x) { return static_cast<T>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2))); },
      [](T x, T) {
        const double xd = x;
        const double cdf = 0.5 * (1.0 + std::erf(xd / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * std::numbers::pi);
        return static_cast<T>(cdf + xd * pdf);
      });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(
      a, [](T x) { return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvOptions& opt) {
  const Shape xs = x.shape(), ws = weight.shape();
  require(opt.groups >= 1 && xs.c % opt.groups == 0 && ws.n % opt.groups == 0,
          "conv2d: channels not divisible by groups");
  require(ws.c * opt.groups == xs.c,
          "conv2d: weight " + ws.str() + " does not match input " + xs.str());
  kernels::ConvGeometry g;
  g.n = xs.n; g.cin = xs.c; g.h = xs.h; g.w = xs.w;
  g.cout = ws.n; g.kh = ws.h; g.kw = ws.w;
  g.stride_h = g.stride_w = opt.stride;
  g.pad_h = opt.pad_h; g.pad_w = opt.pad_w;
  g.dil_h = g.dil_w = opt.dilation;
  g.groups = opt.groups;
  require(g.hout() >= 1 && g.wout() >= 1, "conv2d: empty output for input " + xs.str());
  if (bias.defined()) require(static_cast<int>(bias.numel()) == g.cout, "conv2d: bias size");

  Var<T> out(Shape{g.n, g.cout, g.hout(), g.wout()});
  OpStats::add_macs(static_cast<std::uint64_t>(g.n) * g.cout * (g.cin / g.groups) * g.kh * g.kw *
                    g.hout() * g.wout());
  if (!OpStats::count_only())
    kernels::conv2d_forward(g, x.data().data(), weight.data().data(),
                            bias.defined() ? bias.data().data() : nullptr, out.data().data());
  attach<T>(out, {x, weight, bias}, [x, weight, bias, g](Node<T>& self) {
    kernels::conv2d_backward(g, x.data().data(), weight.data().data(), self.grad.data(),
                             x.requires_grad() ? x.node()->grad_buffer() : nullptr,
                             weight.requires_grad() ? weight.node()->grad_buffer() : nullptr,
                             bias.defined() && bias.requires_grad() ? bias.node()->grad_buffer()
                                                                    : nullptr);
  });
  return out;
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int kernel, int stride, int pad) {
  const Shape xs = x.shape();
  kernels::PoolGeometry g{xs.n, xs.c, xs.h, xs.w, kernel, stride, pad};
  require(kernel >= 1 && stride >= 1 && g.hout() >= 1 && g.wout() >= 1,
          "avg_pool2d: invalid geometry for " + xs.str());
  Var<T> out(Shape{xs.n, xs.c, g.hout(), g.wout()});
  if (!OpStats::count_only()) kernels::avg_pool_forward(g, x.data().data(), out.data().data());
  attach<T>(out, {x}, [x, g](Node<T>& self) {
    kernels::avg_pool_backward(g, self.grad.data(), x.node()->grad_buffer());
  });
  return out;
}

template <typename T>
Var<T> replicate_pad(const Var<T>& x, int bottom, int right) {
  const Shape xs = x.shape();
  require(bottom >= 0 && right >= 0, "replicate_pad: negative padding");
  const Shape os{xs.n, xs.c, xs.h + bottom, xs.w + right};
  Var<T> out(os);
  auto src = x.data();
  auto dst = out.data();
  for (int p = 0; p < xs.n * xs.c; ++p)
    for (int h = 0; h < os.h; ++h)
      for (int w = 0; w < os.w; ++w)
        dst[(static_cast<std::size_t>(p) * os.h + h) * os.w + w] =
            src[(static_cast<std::size_t>(p) * xs.h + std::min(h, xs.h - 1)) * xs.w + std::min(w, xs.w - 1)];
  attach<T>(out, {x}, [x, os](Node<T>& self) {
    const Shape xs = x.shape();
    T* gx = x.node()->grad_buffer();
    for (int p = 0; p < xs.n * xs.c; ++p)
      for (int h = 0; h < os.h; ++h)
        for (int w = 0; w < os.w; ++w)
          gx[(static_cast<std::size_t>(p) * xs.h + std::min(h, xs.h - 1)) * xs.w + std::min(w, xs.w - 1)] +=
              self.grad[(static_cast<std::size_t>(p) * os.h + h) * os.w + w];
  });
  return out;
}

template <typename T>
Var<T> crop(const Var<T>& x, int h, int w) {
  const Shape xs = x.shape();
  require(h >= 1 && w >= 1 && h <= xs.h && w <= xs.w, "crop: window larger than " + xs.str());
  const Shape os{xs.n, xs.c, h, w};
  Var<T> out(os);
  auto src = x.data();
  auto dst = out.data();
  for (int p = 0; p < xs.n * xs.c; ++p)
    for (int i = 0; i < h; ++i)
      std::copy_n(src.begin() + (static_cast<std::size_t>(p) * xs.h + i) * xs.w, w,
                  dst.begin() + (static_cast<std::size_t>(p) * h + i) * w);
  attach<T>(out, {x}, [x, os](Node<T>& self) {
    const Shape xs = x.shape();
    T* gx = x.node()->grad_buffer();
    for (int p = 0; p < xs.n * xs.c; ++p)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j)
          gx[(static_cast<std::size_t>(p) * xs.h + i) * xs.w + j] += self.grad[(static_cast<std::size_t>(p) * os.h + i) * os.w + j];
  });
  return out;
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape xs = x.shape();
  const std::size_t hw = static_cast<std::size_t>(xs.h) * xs.w;
  Var<T> out(Shape{xs.n, xs.c, 1, 1});
  auto src = x.data();
  auto dst = out.data();
  for (int p = 0; p < xs.n * xs.c; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[p * hw + i];
    dst[p] = acc / static_cast<T>(hw);
  }
  attach<T>(out, {x}, [x, hw](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    for (std::size_t p = 0; p < self.value.size(); ++p) {
      const T gv = self.grad[p] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += gv;
    }
  });
  return out;
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, Shape shape) {
  require(broadcast_shape(x.shape(), shape) == shape,
          "broadcast_to: " + x.shape().str() + " -> " + shape.str());
  const auto sx = broadcast_strides(x.shape(), shape);
  const std::array<std::size_t, 4> none{0, 0, 0, 0};
  Var<T> out(shape);
  T* y = out.data().data();
  const T* xv = x.data().data();
  for_each_broadcast(shape, sx, none, [&](std::size_t o, std::size_t i, std::size_t) { y[o] = xv[i]; });
  attach<T>(out, {x}, [x, sx, none](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    for_each_broadcast(self.shape, sx, none,
                       [&](std::size_t o, std::size_t i, std::size_t) { gx[i] += self.grad[o]; });
  });
  return out;
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == os.n && s.h == os.h && s.w == os.w,
            "concat_channels: mismatched " + s.str() + " vs " + parts.front().shape().str());
    os.c += s.c;
  }
  Var<T> out(os);
  const std::size_t hw = static_cast<std::size_t>(os.h) * os.w;
  auto dst = out.data();
  for (int n = 0; n < os.n; ++n) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t block = p.shape().c * hw;
      std::copy_n(p.data().begin() + n * block, block, dst.begin() + (n * os.c + c0) * hw);
      c0 += p.shape().c;
    }
  }
  attach<T>(out, parts, [parts, hw](Node<T>& self) {
    const Shape os = self.shape;
    for (int n = 0; n < os.n; ++n) {
      std::size_t c0 = 0;
      for (const auto& p : parts) {
        const std::size_t block = p.shape().c * hw;
        if (p.requires_grad()) {
          T* gp = p.node()->grad_buffer() + n * block;
          const T* src = self.grad.data() + (n * os.c + c0) * hw;
          for (std::size_t i = 0; i < block; ++i) gp[i] += src[i];
        }
        c0 += p.shape().c;
      }
    }
  });
  return out;
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int end) {
  const Shape xs = x.shape();
  require(0 <= begin && begin < end && end <= xs.c, "slice_channels: bad range");
  const Shape os{xs.n, end - begin, xs.h, xs.w};
  const std::size_t hw = static_cast<std::size_t>(xs.h) * xs.w;
  Var<T> out(os);
  for (int n = 0; n < xs.n; ++n)
    std::copy_n(x.data().begin() + (n * xs.c + begin) * hw, os.c * hw,
                out.data().begin() + n * os.c * hw);
  attach<T>(out, {x}, [x, begin, hw](Node<T>& self) {
    const Shape xs = x.shape();
    T* gx = x.node()->grad_buffer();
    const std::size_t block = self.shape.c * hw;
    for (int n = 0; n < xs.n; ++n)
      for (std::size_t i = 0; i < block; ++i)
        gx[(n * xs.c + begin) * hw + i] += self.grad[n * block + i];
  });
  return out;
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(shape.numel() == x.numel(), "reshape: " + x.shape().str() + " -> " + shape.str());
  Var<T> out(shape, std::vector<T>(x.data().begin(), x.data().end()));
  attach<T>(out, {x}, [x](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
  return out;
}

template <typename T>
Var<T> transpose_hw(const Var<T>& x) {
  const Shape xs = x.shape();
  const Shape os{xs.n, xs.c, xs.w, xs.h};
  Var<T> out(os);
  auto src = x.data();
  auto dst = out.data();
  for (int p = 0; p < xs.n * xs.c; ++p)
    for (int i = 0; i < xs.h; ++i)
      for (int j = 0; j < xs.w; ++j)
        dst[(static_cast<std::size_t>(p) * xs.w + j) * xs.h + i] = src[(static_cast<std::size_t>(p) * xs.h + i) * xs.w + j];
  attach<T>(out, {x}, [x](Node<T>& self) {
    const Shape xs = x.shape();
    T* gx = x.node()->grad_buffer();
    for (int p = 0; p < xs.n * xs.c; ++p)
      for (int i = 0; i < xs.h; ++i)
        for (int j = 0; j < xs.w; ++j)
          gx[(static_cast<std::size_t>(p) * xs.h + i) * xs.w + j] += self.grad[(static_cast<std::size_t>(p) * xs.w + j) * xs.h + i];
  });
  return out;
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  const Shape as = a.shape(), bs = b.shape();
  require(as.n == bs.n && as.c == bs.c && as.w == bs.h,
          "bmm: " + as.str() + " x " + bs.str());
  const int batch = as.n * as.c, m = as.h, k = as.w, p = bs.w;
  Var<T> out(Shape{as.n, as.c, m, p});
  OpStats::add_macs(static_cast<std::uint64_t>(batch) * m * k * p);
  if (!OpStats::count_only())
    for (int i = 0; i < batch; ++i)
      kernels::gemm(false, false, m, p, k, a.data().data() + static_cast<std::size_t>(i) * m * k,
                    b.data().data() + static_cast<std::size_t>(i) * k * p,
                    out.data().data() + static_cast<std::size_t>(i) * m * p, false);
  attach<T>(out, {a, b}, [a, b, batch, m, k, p](Node<T>& self) {
    for (int i = 0; i < batch; ++i) {
      const T* g = self.grad.data() + static_cast<std::size_t>(i) * m * p;
      if (a.requires_grad())
        kernels::gemm(false, true, m, k, p, g, b.data().data() + static_cast<std::size_t>(i) * k * p,
                      a.node()->grad_buffer() + static_cast<std::size_t>(i) * m * k, true);
      if (b.requires_grad())
        kernels::gemm(true, false, k, p, m, a.data().data() + static_cast<std::size_t>(i) * m * k, g,
                      b.node()->grad_buffer() + static_cast<std::size_t>(i) * k * p, true);
    }
  });
  return out;
}

template <typename T>
Var<T> softmax_w(const Var<T>& x) {
  const Shape xs = x.shape();
  const std::size_t rows = static_cast<std::size_t>(xs.n) * xs.c * xs.h, cols = xs.w;
  Var<T> out(xs);
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = src.data() + r * cols;
    T* o = dst.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    double z = 0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(static_cast<double>(in[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) o[j] = static_cast<T>(std::exp(static_cast<double>(in[j] - mx)) / z);
  }
  attach<T>(out, {x}, [x, rows, cols](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * cols;
      const T* g = self.grad.data() + r * cols;
      T dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
  return out;
}

template <typename T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape xs = x.shape();
  require(static_cast<int>(gamma.numel()) == xs.c && static_cast<int>(beta.numel()) == xs.c,
          "layer_norm_channels: affine size");
  const std::size_t hw = static_cast<std::size_t>(xs.h) * xs.w;
  Var<T> out(xs);
  auto normalized = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(xs.n * hw);
  const T* src = x.data().data();
  T* dst = out.data().data();
  const T* ga = gamma.data().data();
  const T* be = beta.data().data();
  for (int n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = n * xs.c * hw + i;
      double mu = 0;
      for (int c = 0; c < xs.c; ++c) mu += src[base + c * hw];
      mu /= xs.c;
      double var = 0;
      for (int c = 0; c < xs.c; ++c) {
        const double d = src[base + c * hw] - mu;
        var += d * d;
      }
      var /= xs.c;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[n * hw + i] = static_cast<T>(is);
      for (int c = 0; c < xs.c; ++c) {
        const T xh = static_cast<T>((src[base + c * hw] - mu) * is);
        (*normalized)[base + c * hw] = xh;
        dst[base + c * hw] = ga[c] * xh + be[c];
      }
    }
  attach<T>(out, {x, gamma, beta}, [x, gamma, beta, normalized, inv_std, hw](Node<T>& self) {
    const Shape xs = x.shape();
    const T* g = self.grad.data();
    const T* ga = gamma.data().data();
    T* ggamma = gamma.requires_grad() ? gamma.node()->grad_buffer() : nullptr;
    T* gbeta = beta.requires_grad() ? beta.node()->grad_buffer() : nullptr;
    T* gx = x.requires_grad() ? x.node()->grad_buffer() : nullptr;
    for (int n = 0; n < xs.n; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t base = n * xs.c * hw + i;
        double mean_g = 0, mean_gx = 0;
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t k = base + c * hw;
          const double gxh = g[k] * ga[c];
          mean_g += gxh;
          mean_gx += gxh * (*normalized)[k];
          if (ggamma) ggamma[c] += g[k] * (*normalized)[k];
          if (gbeta) gbeta[c] += g[k];
        }
        if (!gx) continue;
        mean_g /= xs.c;
        mean_gx /= xs.c;
        const double is = (*inv_std)[n * hw + i];
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t k = base + c * hw;
          gx[k] += static_cast<T>(is * (g[k] * ga[c] - mean_g - (*normalized)[k] * mean_gx));
        }
      }
  });
  return out;
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int factor) {
  const Shape xs = x.shape();
  const int r2 = factor * factor;
  require(factor >= 1 && xs.c % r2 == 0, "pixel_shuffle: channels not divisible by factor^2");
  const Shape os{xs.n, xs.c / r2, xs.h * factor, xs.w * factor};
  auto index_pairs = [xs, os, factor](auto&& f) {
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int h = 0; h < xs.h; ++h)
          for (int w = 0; w < xs.w; ++w)
            for (int i = 0; i < factor; ++i)
              for (int j = 0; j < factor; ++j)
                f(offset(os, n, c, h * factor + i, w * factor + j),
                  offset(xs, n, c * factor * factor + i * factor + j, h, w));
  };
  Var<T> out(os);
  auto src = x.data();
  auto dst = out.data();
  index_pairs([&](std::size_t o, std::size_t i) { dst[o] = src[i]; });
  attach<T>(out, {x}, [x, index_pairs](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    index_pairs([&](std::size_t o, std::size_t i) { gx[i] += self.grad[o]; });
  });
  return out;
}

template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, const Var<T>& offsets, int scale) {
  const Shape xs = x.shape();
  require(scale >= 1, "bilinear_upsample: scale must be positive");
  kernels::SampleGeometry g{xs.n, xs.c, xs.h, xs.w, scale};
  const Shape os{xs.n, xs.c, g.hout(), g.wout()};
  if (offsets.defined())
    require(offsets.shape() == Shape{xs.n, 2, os.h, os.w},
            "bilinear_upsample: offsets " + offsets.shape().str() + " for output " + os.str());
  const T* off = offsets.defined() ? offsets.data().data() : nullptr;
  if (BranchRecorder::active()) {
    for (int n = 0; n < xs.n; ++n)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j) {
          double sy = (i + 0.5) / scale - 0.5, sx = (j + 0.5) / scale - 0.5;
          if (off) {
            sy += off[offset(Shape{xs.n, 2, os.h, os.w}, n, 0, i, j)];
            sx += off[offset(Shape{xs.n, 2, os.h, os.w}, n, 1, i, j)];
          }
          BranchRecorder::record(static_cast<std::int64_t>(std::floor(sy)));
          BranchRecorder::record(static_cast<std::int64_t>(std::floor(sx)));
        }
  }
  Var<T> out(os);
  if (!OpStats::count_only()) kernels::bilinear_forward(g, x.data().data(), off, out.data().data());
  attach<T>(out, {x, offsets}, [x, offsets, g](Node<T>& self) {
    const bool with_offsets = offsets.defined();
    kernels::bilinear_backward(
        g, x.data().data(), with_offsets ? offsets.data().data() : nullptr, self.grad.data(),
        x.requires_grad() ? x.node()->grad_buffer() : nullptr,
        with_offsets && offsets.requires_grad() ? offsets.node()->grad_buffer() : nullptr);
  });
  return out;
}

namespace {

struct Stripe {
  bool horizontal;
  int begin, end;  // rows (horizontal) or columns (vertical)
};

std::vector<Stripe> make_stripes(int extent, int width, bool horizontal) {
  std::vector<Stripe> out;
  for (int b = 0; b < extent; b += width) out.push_back({horizontal, b, std::min(extent, b + width)});
  return out;
}

// Flat spatial index of token t in a stripe.
inline int token_pixel(const Stripe& s, int t, int h, int w) {
  if (s.horizontal) return s.begin * w + t;
  const int span = s.end - s.begin;
  (void)h;
  return (t / span) * w + s.begin + t % span;
}

inline int token_count(const Stripe& s, int h, int w) {
  return (s.end - s.begin) * (s.horizontal ? w : h);
}

}  // namespace

template <typename T>
Var<T> stripe_attention(const Var<T>& qkv, int heads, int stripe_width, AttentionProbe* probe) {
  const Shape qs = qkv.shape();
  require(qs.c % 3 == 0, "stripe_attention: channels must hold q, k and v");
  const int c = qs.c / 3;
  require(heads >= 1 && c % heads == 0, "stripe_attention: channels not divisible by heads");
  require(stripe_width >= 1, "stripe_attention: stripe width must be positive");
  const int d = c / heads;
  const int h = qs.h, w = qs.w;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int horizontal_heads = (heads + 1) / 2;
  const auto rows = make_stripes(h, stripe_width, true);
  const auto cols = make_stripes(w, stripe_width, false);

  struct Task {
    int batch, head;
    Stripe stripe;
  };
  std::vector<Task> tasks;
  for (int b = 0; b < qs.n; ++b)
    for (int hd = 0; hd < heads; ++hd)
      for (const auto& s : (hd < horizontal_heads ? rows : cols)) tasks.push_back({b, hd, s});

  const double scl = 1.0 / std::sqrt(static_cast<double>(d));
  auto probs = std::make_shared<std::vector<std::vector<T>>>(tasks.size());
  Var<T> out(Shape{qs.n, c, h, w});
  std::uint64_t macs = 0;
  for (const auto& t : tasks) {
    const std::uint64_t tk = token_count(t.stripe, h, w);
    macs += 2 * tk * tk * d;
  }
  OpStats::add_macs(macs);

  if (!OpStats::count_only()) {
    const T* src = qkv.data().data();
    T* dst = out.data().data();
#pragma omp parallel for schedule(dynamic)
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const Task& task = tasks[ti];
      const int tk = token_count(task.stripe, h, w);
      std::vector<T> q(static_cast<std::size_t>(tk) * d), k(q.size()), v(q.size()), o(q.size());
      const std::size_t base = static_cast<std::size_t>(task.batch) * qs.c * hw;
      for (int t = 0; t < tk; ++t) {
        const int px = token_pixel(task.stripe, t, h, w);
        for (int j = 0; j < d; ++j) {
          const int ch = task.head * d + j;
          q[t * d + j] = src[base + ch * hw + px];
          k[t * d + j] = src[base + (c + ch) * hw + px];
          v[t * d + j] = src[base + (2 * c + ch) * hw + px];
        }
      }
      std::vector<T>& p = (*probs)[ti];
      p.resize(static_cast<std::size_t>(tk) * tk);
      kernels::gemm(false, true, tk, tk, d, q.data(), k.data(), p.data(), false);
      for (int r = 0; r < tk; ++r) {
        T* row = p.data() + static_cast<std::size_t>(r) * tk;
        T mx = row[0] * static_cast<T>(scl);
        for (int j = 0; j < tk; ++j) mx = std::max(mx, row[j] * static_cast<T>(scl));
        double z = 0;
        for (int j = 0; j < tk; ++j) z += std::exp(static_cast<double>(row[j] * static_cast<T>(scl) - mx));
        for (int j = 0; j < tk; ++j)
          row[j] = static_cast<T>(std::exp(static_cast<double>(row[j] * static_cast<T>(scl) - mx)) / z);
      }
      kernels::gemm(false, false, tk, d, tk, p.data(), v.data(), o.data(), false);
      const std::size_t obase = static_cast<std::size_t>(task.batch) * c * hw;
      for (int t = 0; t < tk; ++t) {
        const int px = token_pixel(task.stripe, t, h, w);
        for (int j = 0; j < d; ++j) dst[obase + (task.head * d + j) * hw + px] = o[t * d + j];
      }
    }
    if (probe) {
      probe->weights.clear();
      probe->tokens.clear();
      for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        probe->weights.emplace_back((*probs)[ti].begin(), (*probs)[ti].end());
        probe->tokens.push_back(token_count(tasks[ti].stripe, h, w));
      }
    }
  }

  attach<T>(out, {qkv}, [qkv, tasks, probs, c, d, h, w, hw, scl](Node<T>& self) {
    const Shape qs = qkv.shape();
    const T* src = qkv.data().data();
    T* gsrc = qkv.node()->grad_buffer();
#pragma omp parallel for schedule(dynamic)
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const Task& task = tasks[ti];
      const int tk = token_count(task.stripe, h, w);
      const std::size_t n = static_cast<std::size_t>(tk) * d;
      std::vector<T> q(n), k(n), v(n), go(n), gq(n), gk(n), gv(n);
      std::vector<T> gp(static_cast<std::size_t>(tk) * tk);
      const std::size_t base = static_cast<std::size_t>(task.batch) * qs.c * hw;
      const std::size_t obase = static_cast<std::size_t>(task.batch) * c * hw;
      for (int t = 0; t < tk; ++t) {
        const int px = token_pixel(task.stripe, t, h, w);
        for (int j = 0; j < d; ++j) {
          const int ch = task.head * d + j;
          q[t * d + j] = src[base + ch * hw + px];
          k[t * d + j] = src[base + (c + ch) * hw + px];
          v[t * d + j] = src[base + (2 * c + ch) * hw + px];
          go[t * d + j] = self.grad[obase + ch * hw + px];
        }
      }
      const std::vector<T>& p = (*probs)[ti];
      kernels::gemm(true, false, tk, d, tk, p.data(), go.data(), gv.data(), false);
      kernels::gemm(false, true, tk, tk, d, go.data(), v.data(), gp.data(), false);
      for (int r = 0; r < tk; ++r) {
        T* grow = gp.data() + static_cast<std::size_t>(r) * tk;
        const T* prow = p.data() + static_cast<std::size_t>(r) * tk;
        T dot = 0;
        for (int j = 0; j < tk; ++j) dot += grow[j] * prow[j];
        for (int j = 0; j < tk; ++j) grow[j] = prow[j] * (grow[j] - dot) * static_cast<T>(scl);
      }
      kernels::gemm(false, false, tk, d, tk, gp.data(), k.data(), gq.data(), false);
      kernels::gemm(true, false, tk, d, tk, gp.data(), q.data(), gk.data(), false);
      for (int t = 0; t < tk; ++t) {
        const int px = token_pixel(task.stripe, t, h, w);
        for (int j = 0; j < d; ++j) {
          const int ch = task.head * d + j;
          gsrc[base + ch * hw + px] += gq[t * d + j];
          gsrc[base + (c + ch) * hw + px] += gk[t * d + j];
          gsrc[base + (2 * c + ch) * hw + px] += gv[t * d + j];
        }
      }
    }
  });
  return out;
}

template <typename T>
Var<T> cosine_to_mean(const Var<T>& x, bool* degenerate) {
  const Shape xs = x.shape();
  const std::size_t hw = static_cast<std::size_t>(xs.h) * xs.w;
  constexpr double kTiny = 1e-12;
  Var<T> out(Shape{xs.n, 1, xs.h, xs.w});
  auto mean_feat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xs.n) * xs.c);
  auto mean_norm = std::make_shared<std::vector<double>>(xs.n);
  auto pix_norm = std::make_shared<std::vector<double>>(xs.n * hw);
  const T* src = x.data().data();
  T* dst = out.data().data();
  bool any_degenerate = false;
  for (int n = 0; n < xs.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * xs.c * hw;
    double gn = 0;
    for (int c = 0; c < xs.c; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += src[base + c * hw + i];
      acc /= static_cast<double>(hw);
      (*mean_feat)[n * xs.c + c] = acc;
      gn += acc * acc;
    }
    gn = std::sqrt(gn);
    (*mean_norm)[n] = gn;
    if (gn < kTiny) any_degenerate = true;
    for (std::size_t i = 0; i < hw; ++i) {
      double dot = 0, xn = 0;
      for (int c = 0; c < xs.c; ++c) {
        const double v = src[base + c * hw + i];
        dot += v * (*mean_feat)[n * xs.c + c];
        xn += v * v;
      }
      xn = std::sqrt(xn);
      (*pix_norm)[n * hw + i] = xn;
      const double s = (xn < kTiny || gn < kTiny) ? 0.0 : std::clamp(dot / (xn * gn), -1.0, 1.0);
      dst[n * hw + i] = static_cast<T>(s);
    }
  }
  if (degenerate) *degenerate = any_degenerate;

  attach<T>(out, {x}, [x, mean_feat, mean_norm, pix_norm, hw](Node<T>& self) {
    const Shape xs = x.shape();
    const T* src = x.data().data();
    T* gx = x.node()->grad_buffer();
    std::vector<double> gmean(xs.c);
    for (int n = 0; n < xs.n; ++n) {
      const double gn = (*mean_norm)[n];
      if (gn < kTiny) continue;
      const std::size_t base = static_cast<std::size_t>(n) * xs.c * hw;
      const double* m = mean_feat->data() + n * xs.c;
      std::fill(gmean.begin(), gmean.end(), 0.0);
      for (std::size_t i = 0; i < hw; ++i) {
        const double xn = (*pix_norm)[n * hw + i];
        const double g = self.grad[n * hw + i];
        if (xn < kTiny || g == 0) continue;
        const double s = self.value[n * hw + i];
        for (int c = 0; c < xs.c; ++c) {
          const double v = src[base + c * hw + i];
          gx[base + c * hw + i] += static_cast<T>(g * (m[c] / (xn * gn) - s * v / (xn * xn)));
          gmean[c] += g * (v / (xn * gn) - s * m[c] / (gn * gn));
        }
      }
      for (int c = 0; c < xs.c; ++c) {
        const T share = static_cast<T>(gmean[c] / static_cast<double>(hw));
        for (std::size_t i = 0; i < hw; ++i) gx[base + c * hw + i] += share;
      }
    }
  });
  return out;
}

template <typename T>
Var<T> triangular_encode(const Var<T>& s, int levels) {
  if (levels < 2) throw ConfigError("quantization needs at least 2 levels, got " + std::to_string(levels));
  const Shape ss = s.shape();
  require(ss.c == 1, "triangular_encode: expects a single-channel similarity field");
  const std::size_t hw = static_cast<std::size_t>(ss.h) * ss.w;
  const double spacing = 2.0 / (levels - 1);
  Var<T> out(Shape{ss.n, levels, ss.h, ss.w});
  const T* sv = s.data().data();
  T* dst = out.data().data();
  for (int n = 0; n < ss.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      const double v = sv[n * hw + i];
      if (BranchRecorder::active()) BranchRecorder::record(static_cast<std::int64_t>(std::floor((v + 1.0) / spacing)));
      for (int l = 0; l < levels; ++l) {
        const double level = -1.0 + spacing * l;
        dst[(static_cast<std::size_t>(n) * levels + l) * hw + i] =
            static_cast<T>(std::max(0.0, 1.0 - std::abs(v - level) / spacing));
      }
    }
  attach<T>(out, {s}, [s, levels, hw, spacing](Node<T>& self) {
    const T* sv = s.data().data();
    T* gs = s.node()->grad_buffer();
    for (int n = 0; n < s.shape().n; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = sv[n * hw + i];
        double acc = 0;
        for (int l = 0; l < levels; ++l) {
          const double diff = v - (-1.0 + spacing * l);
          if (std::abs(diff) >= spacing || diff == 0.0) continue;
          acc += self.grad[(static_cast<std::size_t>(n) * levels + l) * hw + i] * (diff > 0 ? -1.0 : 1.0) / spacing;
        }
        gs[n * hw + i] += static_cast<T>(acc);
      }
  });
  return out;
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Var<T> out(Shape{}, acc);
  attach<T>(out, {x}, [x](Node<T>& self) {
    T* gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += self.grad[0];
  });
  return out;
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& targets, int ignore_index,
                     int* scored) {
  const Shape ls = logits.shape();
  const std::size_t hw = static_cast<std::size_t>(ls.h) * ls.w;
  require(targets.size() == static_cast<std::size_t>(ls.n) * hw,
          "cross_entropy: target count does not match logits " + ls.str());
  const T* z = logits.data().data();
  double total = 0;
  int count = 0;
  for (int n = 0; n < ls.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      const int t = targets[n * hw + i];
      if (t == ignore_index) continue;
      if (t < 0 || t >= ls.c) throw ShapeError("cross_entropy: target label " + std::to_string(t) + " out of range");
      const std::size_t base = static_cast<std::size_t>(n) * ls.c * hw + i;
      double mx = z[base];
      for (int c = 1; c < ls.c; ++c) mx = std::max(mx, static_cast<double>(z[base + c * hw]));
      double se = 0;
      for (int c = 0; c < ls.c; ++c) se += std::exp(z[base + c * hw] - mx);
      total += std::log(se) + mx - z[base + t * hw];
      ++count;
    }
  if (scored) *scored = count;
  Var<T> out(Shape{}, count > 0 ? static_cast<T>(total / count) : T(0));
  if (count == 0) return out;
  attach<T>(out, {logits}, [logits, targets, ignore_index, count, hw](Node<T>& self) {
    const Shape ls = logits.shape();
    const T* z = logits.data().data();
    T* gz = logits.node()->grad_buffer();
    const double g = self.grad[0] / count;
    for (int n = 0; n < ls.n; ++n)
      for (std::size_t i = 0; i < hw; ++i) {
        const int t = targets[n * hw + i];
        if (t == ignore_index) continue;
        const std::size_t base = static_cast<std::size_t>(n) * ls.c * hw + i;
        double mx = z[base];
        for (int c = 1; c < ls.c; ++c) mx = std::max(mx, static_cast<double>(z[base + c * hw]));
        double se = 0;
        for (int c = 0; c < ls.c; ++c) se += std::exp(z[base + c * hw] - mx);
        for (int c = 0; c < ls.c; ++c) {
          const double p = std::exp(z[base + c * hw] - mx) / se;
          gz[base + c * hw] += static_cast<T>(g * (p - (c == t ? 1.0 : 0.0)));
        }
      }
  });
  return out;
}

#define TEFORMER_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> scale(const Var<T>&, T);                                                          \
  template Var<T> add_scalar(const Var<T>&, T);                                                     \
  template Var<T> one_minus(const Var<T>&);                                                         \
  template Var<T> gelu(const Var<T>&);                                                              \
  template Var<T> relu(const Var<T>&);                                                              \
  template Var<T> sigmoid(const Var<T>&);                                                           \
  template Var<T> tanh(const Var<T>&);                                                              \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvOptions&);          \
  template Var<T> avg_pool2d(const Var<T>&, int, int, int);                                         \
  template Var<T> replicate_pad(const Var<T>&, int, int);                                           \
  template Var<T> crop(const Var<T>&, int, int);                                                    \
  template Var<T> global_avg_pool(const Var<T>&);                                                   \
  template Var<T> broadcast_to(const Var<T>&, Shape);                                               \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                      \
  template Var<T> slice_channels(const Var<T>&, int, int);                                          \
  template Var<T> reshape(const Var<T>&, Shape);                                                    \
  template Var<T> transpose_hw(const Var<T>&);                                                      \
  template Var<T> bmm(const Var<T>&, const Var<T>&);                                                \
  template Var<T> softmax_w(const Var<T>&);                                                         \
  template Var<T> layer_norm_channels(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                                \
  template Var<T> bilinear_upsample(const Var<T>&, const Var<T>&, int);                             \
  template Var<T> stripe_attention(const Var<T>&, int, int, AttentionProbe*);                       \
  template Var<T> cosine_to_mean(const Var<T>&, bool*);                                             \
  template Var<T> triangular_encode(const Var<T>&, int);                                            \
  template Var<T> sum(const Var<T>&);                                                               \
  template Var<T> mean(const Var<T>&);                                                              \
  template Var<T> cross_entropy(const Var<T>&, const std::vector<int>&, int, int*);

TEFORMER_INSTANTIATE_OPS(float)
TEFORMER_INSTANTIATE_OPS(double)

}  // namespace teformer::ops
