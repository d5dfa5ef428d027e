#pragma once

#include <cstdint>
#include <vector>

namespace teformer {

/// counts[gt · K + pred]; ignore pixels are never recorded.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  void add(int gt, int pred);
  void merge(const ConfusionMatrix& other);
  std::uint64_t at(int gt, int pred) const;
  std::uint64_t total() const;
  int num_classes() const { return k_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int k_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Throws DataError on a non-ignore label outside [0, K) or a size mismatch.
ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes,
                          int ignore_index);

/// Boundary pixels (a 4-neighbour carries a different label) matched within a
/// Chebyshev tolerance; counts add over images.
struct BoundaryCounts {
  std::uint64_t pred_total = 0, pred_matched = 0;
  std::uint64_t gt_total = 0, gt_matched = 0;

  void merge(const BoundaryCounts& o);
  /// 1 when neither map has boundary pixels.
  double f1() const;
};

BoundaryCounts boundary_counts(const std::vector<int>& pred, const std::vector<int>& gt, int height, int width,
                               int ignore_index, int tolerance = 2);

struct MetricsReport {
  std::vector<double> iou;  // NaN for classes absent from both maps
  std::vector<double> f1;
  std::vector<bool> present;
  double miou = 0, mf1 = 0, pa = 0;
  double boundary_f1 = 0;
  std::uint64_t pixels = 0;
};

/// Means run over classes present in ground truth or prediction and not in
/// `exclude`. Throws DataError on an empty matrix.
MetricsReport compute_metrics(const ConfusionMatrix& cm, const std::vector<int>& exclude = {});

}  // namespace teformer
