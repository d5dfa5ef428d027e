#include "teformer/qco.hpp"

#include <cmath>

#include "teformer/errors.hpp"
#include "teformer/log.hpp"

namespace teformer::qco {

std::vector<double> level_values(int levels) {
  if (levels < 2) throw ConfigError("quantization needs at least 2 levels, got " + std::to_string(levels));
  std::vector<double> out(levels);
  for (int n = 0; n < levels; ++n) out[n] = -1.0 + 2.0 * n / (levels - 1);
  return out;
}

template <typename T>
Var<T> similarity_map(const Var<T>& x, bool* degenerate) {
  bool flag = false;
  auto s = ops::cosine_to_mean(x, &flag);
  if (flag && !OpStats::count_only()) log::warn("qco: degenerate input (zero mean feature); similarity set to 0");
  if (degenerate) *degenerate = flag;
  return s;
}

template <typename T>
Var<T> soft_quantize(const Var<T>& similarity, int levels) {
  return ops::triangular_encode(similarity, levels);
}

template <typename T>
Var<T> count_levels(const Var<T>& encoding) {
  return ops::global_avg_pool(encoding);
}

template <typename T>
Var<T> to_matrix(const Var<T>& conv_layout) {
  const Shape s = conv_layout.shape();
  if (s.w != 1) throw ShapeError("to_matrix: expected (n, C, N, 1), got " + s.str());
  return ops::transpose_hw(ops::reshape(conv_layout, Shape{s.n, 1, s.c, s.h}));
}

template <typename T>
Var<T> to_conv(const Var<T>& matrix_layout) {
  const Shape s = matrix_layout.shape();
  if (s.c != 1) throw ShapeError("to_conv: expected (n, 1, N, C), got " + s.str());
  return ops::reshape(ops::transpose_hw(matrix_layout), Shape{s.n, s.w, s.h, 1});
}

template <typename T>
CountingFeature<T>::CountingFeature(nn::ParamStore<T>& store, const std::string& name, int channels)
    : fc1_(store, name + ".fc1", 2, channels, 1), fc2_(store, name + ".fc2", channels, channels, 1) {}

template <typename T>
Var<T> CountingFeature<T>::operator()(const std::vector<double>& levels, const Var<T>& counts) const {
  const Shape cs = counts.shape();
  const int n_levels = static_cast<int>(levels.size());
  if (cs.c != n_levels || cs.h != 1 || cs.w != 1)
    throw ShapeError("counting_feature: counts " + cs.str() + " vs " + std::to_string(n_levels) + " levels");
  Var<T> level_plane(Shape{cs.n, 1, n_levels, 1});
  for (int b = 0; b < cs.n; ++b)
    for (int l = 0; l < n_levels; ++l) level_plane.at(b, 0, l, 0) = static_cast<T>(levels[l]);
  auto count_plane = ops::reshape(counts, Shape{cs.n, 1, n_levels, 1});
  auto pairs = ops::concat_channels<T>({level_plane, count_plane});
  return fc2_(ops::gelu(fc1_(pairs)));
}

template <typename T>
std::pair<Var<T>, Var<T>> attend_levels(const Var<T>& rows) {
  const Shape s = rows.shape();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(s.w)));
  auto scores = ops::scale(ops::bmm(rows, ops::transpose_hw(rows)), inv_sqrt);
  auto adjacency = ops::softmax_w(scores);
  return {adjacency, ops::bmm(adjacency, rows)};
}

template <typename T>
LevelAttention<T>::LevelAttention(nn::ParamStore<T>& store, const std::string& name, int in_channels,
                                  int out_channels)
    : conv_(store, name + ".conv", in_channels, out_channels, 3, 1, nn::ConvSpec{}) {}

template <typename T>
std::pair<Var<T>, Var<T>> LevelAttention<T>::operator()(const Var<T>& counting) const {
  return attend_levels(to_matrix(conv_(counting)));
}

template <typename T>
Var<T> spatial_reproject(const Var<T>& level_rows, const Var<T>& encoding) {
  const Shape ls = level_rows.shape(), es = encoding.shape();
  if (ls.c != 1 || ls.n != es.n || ls.h != es.c)
    throw ShapeError("spatial_reproject: levels " + ls.str() + " vs encoding " + es.str());
  auto b = ops::reshape(encoding, Shape{es.n, 1, es.c, es.h * es.w});
  auto mixed = ops::bmm(ops::transpose_hw(level_rows), b);
  return ops::reshape(mixed, Shape{es.n, ls.w, es.h, es.w});
}

template <typename T>
Quantizer<T>::Quantizer(nn::ParamStore<T>& store, const std::string& name, int levels, int channels)
    : levels_(levels),
      channels_(channels),
      counting_(store, name + ".count", channels),
      attention_(store, name + ".attn", channels, channels) {
  if (levels < 2) throw ConfigError(name + ": quantization needs at least 2 levels");
}

template <typename T>
QuantizationResult<T> Quantizer<T>::operator()(const Var<T>& x) const {
  QuantizationResult<T> r;
  r.levels = level_values(levels_);
  r.similarity = similarity_map(x, &r.degenerate);
  r.encoding = soft_quantize(r.similarity, levels_);
  r.counts = count_levels(r.encoding);
  r.counting = counting_(r.levels, r.counts);
  std::tie(r.adjacency, r.updated) = attention_(r.counting);
  return r;
}

template <typename T>
QcoSpatial<T>::QcoSpatial(nn::ParamStore<T>& store, const std::string& name, int levels, int channels)
    : quantizer_(store, name, levels, channels) {}

template <typename T>
FeatureMap<T> QcoSpatial<T>::operator()(const FeatureMap<T>& x, QuantizationResult<T>* trace) const {
  auto r = quantizer_(x.data);
  FeatureMap<T> out{spatial_reproject(r.updated, r.encoding), x.stride};
  if (trace) *trace = std::move(r);
  return out;
}

#define TEFORMER_INSTANTIATE_QCO(T)                                        \
  template Var<T> similarity_map(const Var<T>&, bool*);                    \
  template Var<T> soft_quantize(const Var<T>&, int);                       \
  template Var<T> count_levels(const Var<T>&);                             \
  template Var<T> to_matrix(const Var<T>&);                                \
  template Var<T> to_conv(const Var<T>&);                                  \
  template std::pair<Var<T>, Var<T>> attend_levels(const Var<T>&);         \
  template Var<T> spatial_reproject(const Var<T>&, const Var<T>&);         \
  template class CountingFeature<T>;                                       \
  template class LevelAttention<T>;                                        \
  template class Quantizer<T>;                                             \
  template class QcoSpatial<T>;

TEFORMER_INSTANTIATE_QCO(float)
TEFORMER_INSTANTIATE_QCO(double)

}  // namespace teformer::qco
