#include "teformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "teformer/errors.hpp"

namespace teformer {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

void ConfusionMatrix::add(int gt, int pred) { ++counts_[static_cast<std::size_t>(gt) * k_ + pred]; }

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DataError("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * k_ + pred]; }

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes,
                          int ignore_index) {
  if (pred.size() != gt.size()) throw DataError("confusion: prediction and ground truth differ in size");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_index) continue;
    if (gt[i] < 0 || gt[i] >= num_classes) throw DataError("confusion: ground-truth label " + std::to_string(gt[i]) + " out of range");
    if (pred[i] < 0 || pred[i] >= num_classes) throw DataError("confusion: predicted label " + std::to_string(pred[i]) + " out of range");
    cm.add(gt[i], pred[i]);
  }
  return cm;
}

void BoundaryCounts::merge(const BoundaryCounts& o) {
  pred_total += o.pred_total;
  pred_matched += o.pred_matched;
  gt_total += o.gt_total;
  gt_matched += o.gt_matched;
}

double BoundaryCounts::f1() const {
  if (pred_total == 0 && gt_total == 0) return 1.0;
  if (pred_total == 0 || gt_total == 0) return 0.0;
  const double p = static_cast<double>(pred_matched) / pred_total;
  const double r = static_cast<double>(gt_matched) / gt_total;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

namespace {

std::vector<char> boundary_map(const std::vector<int>& m, int h, int w, const std::vector<char>& valid) {
  std::vector<char> b(m.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!valid[i]) continue;
      const int v = m[i];
      if ((x + 1 < w && valid[i + 1] && m[i + 1] != v) || (x > 0 && valid[i - 1] && m[i - 1] != v) ||
          (y + 1 < h && valid[i + w] && m[i + w] != v) || (y > 0 && valid[i - w] && m[i - w] != v))
        b[i] = 1;
    }
  return b;
}

// Chebyshev dilation by `r` as separable row/column max filters.
std::vector<char> dilate(const std::vector<char>& b, int h, int w, int r) {
  std::vector<char> rows(b.size(), 0), out(b.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      char v = 0;
      for (int d = std::max(0, x - r); d <= std::min(w - 1, x + r) && !v; ++d) v = b[static_cast<std::size_t>(y) * w + d];
      rows[static_cast<std::size_t>(y) * w + x] = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      char v = 0;
      for (int d = std::max(0, y - r); d <= std::min(h - 1, y + r) && !v; ++d) v = rows[static_cast<std::size_t>(d) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  return out;
}

}  // namespace

BoundaryCounts boundary_counts(const std::vector<int>& pred, const std::vector<int>& gt, int height, int width,
                               int ignore_index, int tolerance) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (pred.size() != n || gt.size() != n) throw DataError("boundary_counts: map size mismatch");
  std::vector<char> valid(n);
  for (std::size_t i = 0; i < n; ++i) valid[i] = gt[i] != ignore_index;
  const auto pb = boundary_map(pred, height, width, valid);
  const auto gb = boundary_map(gt, height, width, valid);
  const auto pd = dilate(pb, height, width, tolerance);
  const auto gd = dilate(gb, height, width, tolerance);
  BoundaryCounts c;
  for (std::size_t i = 0; i < n; ++i) {
    if (pb[i]) {
      ++c.pred_total;
      if (gd[i]) ++c.pred_matched;
    }
    if (gb[i]) {
      ++c.gt_total;
      if (pd[i]) ++c.gt_matched;
    }
  }
  return c;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, const std::vector<int>& exclude) {
  const int k = cm.num_classes();
  const std::uint64_t total = cm.total();
  if (k == 0 || total == 0) throw DataError("compute_metrics: empty confusion matrix");
  MetricsReport r;
  r.pixels = total;
  r.iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.f1.assign(k, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(k, false);
  std::uint64_t trace = 0;
  double iou_sum = 0, f1_sum = 0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    const std::uint64_t tp = cm.at(c, c);
    std::uint64_t fn = 0, fp = 0;
    for (int o = 0; o < k; ++o)
      if (o != c) fn += cm.at(c, o), fp += cm.at(o, c);
    trace += tp;
    if (tp + fp + fn == 0) continue;
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    r.f1[c] = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    if (std::find(exclude.begin(), exclude.end(), c) != exclude.end()) continue;
    iou_sum += r.iou[c];
    f1_sum += r.f1[c];
    ++counted;
  }
  r.miou = counted ? iou_sum / counted : 0.0;
  r.mf1 = counted ? f1_sum / counted : 0.0;
  r.pa = static_cast<double>(trace) / static_cast<double>(total);
  return r;
}

}  // namespace teformer
