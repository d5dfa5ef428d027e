#include "teformer/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "teformer/checkpoint.hpp"
#include "teformer/errors.hpp"
#include "teformer/log.hpp"
#include "teformer/plot.hpp"

namespace fs = std::filesystem;

namespace teformer {

AdamW::AdamW(nn::ParamStore<float>& store, double beta1, double beta2, double eps, double weight_decay)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
  for (const auto& [name, p] : store.entries()) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
  const auto& entries = store_->entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Var<float> p = entries[k].second;
    auto w = p.data();
    const auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = static_cast<float>(beta1_ * m[i] + (1 - beta1_) * gi);
      v[i] = static_cast<float>(beta2_ * v[i] + (1 - beta2_) * gi * gi);
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_) + wd_ * w[i];
      w[i] = static_cast<float>(w[i] - lr * update);
    }
  }
}

double poly_lr(double base, int iteration, int total, double power) {
  const double frac = std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
  return base * std::pow(1.0 - frac, power);
}

std::pair<double, double> smoothed_endpoints(const std::vector<double>& losses, int window) {
  if (losses.empty()) return {0.0, 0.0};
  const std::size_t k = std::min<std::size_t>(window, losses.size());
  const double first = std::accumulate(losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / k;
  const double last = std::accumulate(losses.end() - static_cast<std::ptrdiff_t>(k), losses.end(), 0.0) / k;
  return {first, last};
}

EvalResult evaluate(const TEFormer<float>& model, const Dataset& data, int ignore_index,
                    const std::vector<int>& exclude) {
  NoGradGuard no_grad;
  const int k = model.config().num_classes;
  EvalResult r{ConfusionMatrix(k), {}, {}};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample s = data.get(i);
    auto [image, targets] = make_batch({s});
    const auto out = model.forward(image);
    r.cm.merge(confusion(out.class_map, targets, k, ignore_index));
    r.boundary.merge(boundary_counts(out.class_map, targets, s.height(), s.width(), ignore_index));
  }
  r.report = compute_metrics(r.cm, exclude);
  r.report.boundary_f1 = r.boundary.f1();
  return r;
}

namespace {

void write_loss_outputs(const std::string& dir, const std::vector<double>& losses) {
  std::ofstream csv(fs::path(dir) / "loss.csv");
  csv << "iteration,loss\n";
  csv.precision(9);
  for (std::size_t i = 0; i < losses.size(); ++i) csv << i << ',' << losses[i] << '\n';
  plot_series(fs::path(dir / fs::path("loss.png")).string(), losses, "training loss");
}

}  // namespace

TrainResult train(TEFormer<float>& model, const Dataset& data, const RunConfig& cfg, const TrainOptions& opt) {
  const auto& tc = cfg.train;
  if (data.size() == 0) throw DataError("training set is empty");
  if (data.num_classes() != model.config().num_classes) throw ConfigError("dataset and model disagree on num_classes");
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  const auto start = std::chrono::steady_clock::now();
  AdamW optim(model.params(), tc.beta1, tc.beta2, tc.eps, tc.weight_decay);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  int epoch = 0;
  for (int it = 0; it < tc.iterations; ++it) {
    std::vector<Sample> batch;
    std::vector<std::string> ids;
    for (int b = 0; b < tc.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch++)));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      Sample s = data.get(order[cursor++]);
      if (tc.augment) s = augment(s, mix_seed(cfg.seed, static_cast<std::uint64_t>(it) * 1024 + b));
      ids.push_back(s.id);
      batch.push_back(std::move(s));
    }
    auto [image, targets] = make_batch(batch, tc.crop, mix_seed(cfg.seed ^ 0xC409, static_cast<std::uint64_t>(it)));
    model.params().zero_grad();
    const auto out = model.forward(image);
    int scored = 0;
    auto loss = ops::cross_entropy(out.logits.data, targets, cfg.data.palette.ignore_index, &scored);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::string list;
      for (const auto& id : ids) list += (list.empty() ? "" : ",") + id;
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (batch " + list + ")");
    }
    if (scored == 0) log::warn("iteration " + std::to_string(it) + ": every pixel ignored, loss defined as 0");
    else backward(loss);
    const double lr = poly_lr(tc.lr, it, tc.iterations, tc.poly_power);
    optim.step(lr);
    result.losses.push_back(value);
    if (opt.on_step) opt.on_step(it, value, lr);
    if (tc.log_every > 0 && (it + 1) % tc.log_every == 0)
      log::info("iter " + std::to_string(it + 1) + "/" + std::to_string(tc.iterations) + " loss " +
                std::to_string(value) + " lr " + std::to_string(lr));
    const bool last = it + 1 == tc.iterations;
    if (!opt.out_dir.empty() && (last || (tc.checkpoint_every > 0 && (it + 1) % tc.checkpoint_every == 0))) {
      const std::string name = last ? "final.ckpt" : "iter_" + std::to_string(it + 1) + ".ckpt";
      save_model((fs::path(opt.out_dir) / name).string(), model, cfg);
    }
    if (opt.val && (last || (tc.val_every > 0 && (it + 1) % tc.val_every == 0))) {
      auto ev = evaluate(model, *opt.val, cfg.data.palette.ignore_index, cfg.eval.exclude_classes);
      log::info("validation at " + std::to_string(it + 1) + ": mIoU " + std::to_string(ev.report.miou));
      result.validations.emplace_back(it + 1, ev.report);
    }
  }
  std::tie(result.initial_smoothed, result.final_smoothed) = smoothed_endpoints(result.losses);
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!opt.out_dir.empty()) write_loss_outputs(opt.out_dir, result.losses);
  return result;
}

template <typename T>
Complexity count_params_flops(const TEFormer<T>& model, int height, int width) {
  Complexity c;
  c.params = model.params().total_elements();
  NoGradGuard no_grad;
  const bool was = OpStats::count_only();
  OpStats::set_count_only(true);
  OpStats::reset();
  try {
    model.forward(Var<T>(Shape{1, model.config().in_channels, height, width}));
  } catch (...) {
    OpStats::set_count_only(was);
    throw;
  }
  c.macs = OpStats::macs();
  OpStats::set_count_only(was);
  return c;
}

nlohmann::json metrics_json(const RunConfig& cfg, const EvalResult& eval, const Complexity& cx, double wall_time_s) {
  using nlohmann::json;
  const auto& r = eval.report;
  json per_class = json::object();
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    json entry = {{"iou", nullptr}, {"f1", nullptr}};
    if (r.present[c]) entry = {{"iou", r.iou[c]}, {"f1", r.f1[c]}};
    per_class[std::to_string(c)] = entry;
  }
  return json{{"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"per_class", per_class},
              {"miou", r.miou},
              {"mf1", r.mf1},
              {"pa", r.pa},
              {"boundary_f1", r.boundary_f1},
              {"params", cx.params},
              {"flops", cx.macs},
              {"wall_time_s", wall_time_s}};
}

void save_model(const std::string& path, const TEFormer<float>& model, const RunConfig& cfg) {
  write_checkpoint(path, snapshot(model.params(), to_json(cfg).dump()));
}

std::pair<std::unique_ptr<TEFormer<float>>, RunConfig> load_model(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  const auto meta = nlohmann::json::parse(ck.metadata, nullptr, false);
  if (meta.is_discarded()) throw DataError("checkpoint metadata is not a config: " + path);
  RunConfig cfg = from_json(meta);
  auto model = std::make_unique<TEFormer<float>>(cfg.model);
  restore(model->params(), ck);
  return {std::move(model), cfg};
}

template Complexity count_params_flops(const TEFormer<float>&, int, int);
template Complexity count_params_flops(const TEFormer<double>&, int, int);

}  // namespace teformer
