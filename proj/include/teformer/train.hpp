#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "teformer/config.hpp"
#include "teformer/data.hpp"
#include "teformer/metrics.hpp"
#include "teformer/model.hpp"

namespace teformer {

/// Adam with decoupled weight decay: p -= lr·(m̂ / (sqrt(v̂) + eps) + wd·p).
class AdamW {
 public:
  AdamW(nn::ParamStore<float>& store, double beta1, double beta2, double eps, double weight_decay);
  void step(double lr);
  int steps() const { return t_; }

 private:
  nn::ParamStore<float>* store_;
  double beta1_, beta2_, eps_, wd_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// base · (1 - it / total)^power.
double poly_lr(double base, int iteration, int total, double power);

/// Means of the first and last `window` entries.
std::pair<double, double> smoothed_endpoints(const std::vector<double>& losses, int window = 20);

struct EvalResult {
  ConfusionMatrix cm;
  BoundaryCounts boundary;
  MetricsReport report;
};

/// Scores every sample of `data` (forward without gradients, one sample at a
/// time). Sample extents must be divisible by 32.
EvalResult evaluate(const TEFormer<float>& model, const Dataset& data, int ignore_index,
                    const std::vector<int>& exclude = {});

struct TrainOptions {
  /// Where checkpoints, loss.csv and loss.png go; empty disables output.
  std::string out_dir;
  const Dataset* val = nullptr;
  std::function<void(int iteration, double loss, double lr)> on_step;
};

struct TrainResult {
  std::vector<double> losses;
  double initial_smoothed = 0, final_smoothed = 0;
  double wall_time_s = 0;
  std::vector<std::pair<int, MetricsReport>> validations;
};

/// Deterministic for a fixed config: batch order, crops and augmentations
/// derive from the run seed. Throws NumericError naming the batch when the
/// loss becomes non-finite.
TrainResult train(TEFormer<float>& model, const Dataset& data, const RunConfig& cfg, const TrainOptions& opt = {});

struct Complexity {
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

/// Exact parameter count and analytic multiply-accumulates of one forward
/// pass at batch 1 and the given input extent.
template <typename T>
Complexity count_params_flops(const TEFormer<T>& model, int height, int width);

/// metrics.json document.
nlohmann::json metrics_json(const RunConfig& cfg, const EvalResult& eval, const Complexity& cx, double wall_time_s);

/// Checkpoint whose metadata is the run config.
void save_model(const std::string& path, const TEFormer<float>& model, const RunConfig& cfg);
/// Rebuilds the model described by the checkpoint metadata.
std::pair<std::unique_ptr<TEFormer<float>>, RunConfig> load_model(const std::string& path);

}  // namespace teformer
