// teformer: train, evaluate, predict, ablate, count complexity, generate data.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "teformer/ablation.hpp"
#include "teformer/checkpoint.hpp"
#include "teformer/config.hpp"
#include "teformer/data.hpp"
#include "teformer/errors.hpp"
#include "teformer/log.hpp"
#include "teformer/plot.hpp"
#include "teformer/train.hpp"

namespace fs = std::filesystem;
using namespace teformer;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  long long seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--set", c.sets, "override, key.path=value (repeatable)");
  cmd->add_option("--seed", c.seed, "run seed");
}

RunConfig load_config(const Common& c) {
  std::vector<std::string> sets = c.sets;
  if (c.seed >= 0) sets.push_back("seed=" + std::to_string(c.seed));
  if (c.config.empty()) return apply_overrides(RunConfig{}, sets);
  return parse_config(c.config, sets);
}

void configure_threads(const RunConfig& cfg) {
  const char* det = std::getenv("TEFORMER_DETERMINISTIC");
  if (det && std::string(det) == "1")
    omp_set_num_threads(1);
  else if (cfg.threads > 0)
    omp_set_num_threads(cfg.threads);
}

void write_json(const std::string& path, const json& j) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// Checkpoint config, optionally replaced by --config and --set; the model
// section must stay identical.
RunConfig eval_config(const RunConfig& stored, const Common& c) {
  RunConfig cfg = c.config.empty() ? stored : parse_config(c.config);
  std::vector<std::string> sets = c.sets;
  if (c.seed >= 0) sets.push_back("seed=" + std::to_string(c.seed));
  cfg = apply_overrides(cfg, sets);
  if (to_json(cfg)["model"] != to_json(stored)["model"])
    throw ConfigError("model section differs from the checkpoint");
  return cfg;
}

int cmd_train(const Common& c, const std::string& out_override) {
  RunConfig cfg = load_config(c);
  if (!out_override.empty()) cfg.out_dir = out_override;
  configure_threads(cfg);
  fs::create_directories(cfg.out_dir);
  write_json((fs::path(cfg.out_dir) / "config.json").string(), to_json(cfg));
  TEFormer<float> model(cfg.model);
  auto data = open_data(cfg);
  TrainOptions opt;
  opt.out_dir = cfg.out_dir;
  opt.val = data.val.get();
  const auto tr = train(model, *data.train, cfg, opt);
  const auto ev = evaluate(model, *data.val, cfg.data.palette.ignore_index, cfg.eval.exclude_classes);
  const auto cx = count_params_flops(model, cfg.train.crop, cfg.train.crop);
  write_json((fs::path(cfg.out_dir) / "metrics.json").string(), metrics_json(cfg, ev, cx, tr.wall_time_s));
  std::vector<double> per_class;
  for (std::size_t k = 0; k < ev.report.iou.size(); ++k) per_class.push_back(ev.report.present[k] ? ev.report.iou[k] : 0.0);
  plot_bars((fs::path(cfg.out_dir) / "per_class_iou.png").string(), per_class, "per-class IoU");
  std::cout << json{{"checkpoint", (fs::path(cfg.out_dir) / "final.ckpt").string()},
                    {"initial_smoothed_loss", tr.initial_smoothed},
                    {"final_smoothed_loss", tr.final_smoothed},
                    {"miou", ev.report.miou}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& split, const std::string& out) {
  auto [model, stored] = load_model(ckpt);
  RunConfig cfg = eval_config(stored, c);
  configure_threads(cfg);
  auto data = open_data(cfg);
  if (split != "train" && split != "val") throw ConfigError("--split must be train or val");
  const Dataset& ds = split == "train" ? *data.train : *data.val;
  const auto start = std::chrono::steady_clock::now();
  const auto ev = evaluate(*model, ds, cfg.data.palette.ignore_index, cfg.eval.exclude_classes);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto cx = count_params_flops(*model, cfg.train.crop, cfg.train.crop);
  const json j = metrics_json(cfg, ev, cx, wall);
  write_json(out, j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_predict(const Common& c, const std::string& ckpt, const std::string& image_path, const std::string& out_dir,
                bool probs) {
  auto [model, stored] = load_model(ckpt);
  RunConfig cfg = eval_config(stored, c);
  configure_threads(cfg);
  const Image8 img = read_image(image_path);
  if (img.channels != 3) throw DataError("prediction input must be RGB: " + image_path);
  // Replicate-pad to the encoder's divisibility, predict, crop back.
  const int h = img.height, w = img.width;
  const int ph = (h + 31) / 32 * 32, pw = (w + 31) / 32 * 32;
  Image8 padded{ph, pw, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(ph) * pw * 3)};
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      for (int ch = 0; ch < 3; ++ch) padded.at(y, x, ch) = img.at(std::min(y, h - 1), std::min(x, w - 1), ch);
  NoGradGuard no_grad;
  const auto out = model->forward(image_to_tensor(padded));
  const int k = model->config().num_classes;
  std::vector<int> ids(static_cast<std::size_t>(h) * w);
  std::vector<float> prob(static_cast<std::size_t>(k) * h * w);
  const auto p = out.probabilities.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      ids[static_cast<std::size_t>(y) * w + x] = out.class_map[static_cast<std::size_t>(y) * pw + x];
      for (int cl = 0; cl < k; ++cl)
        prob[(static_cast<std::size_t>(cl) * h + y) * w + x] = p[(static_cast<std::size_t>(cl) * ph + y) * pw + x];
    }
  fs::create_directories(out_dir);
  const std::string id = fs::path(image_path).stem().string();
  write_png((fs::path(out_dir) / (id + "_pred.png")).string(), encode_labels(ids, h, w, cfg.data.palette));
  Image8 raw{h, w, 1, std::vector<std::uint8_t>(ids.begin(), ids.end())};
  write_png((fs::path(out_dir) / (id + "_ids.png")).string(), raw);
  if (probs)
    write_npy((fs::path(out_dir) / (id + "_probs.npy")).string(), prob,
              {static_cast<std::size_t>(k), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  std::cout << json{{"prediction", (fs::path(out_dir) / (id + "_pred.png")).string()}}.dump() << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::string& components, int seeds, const std::string& out,
               const std::vector<std::string>& only) {
  RunConfig cfg = load_config(c);
  configure_threads(cfg);
  AblationOptions opt;
  opt.only = only;
  opt.on_run = [](const std::string& row, std::uint64_t seed, const MetricsReport& r) {
    log::info("ablation row " + row + " seed " + std::to_string(seed) + " mIoU " + std::to_string(r.miou));
  };
  const auto results = run_ablation(cfg, parse_components(components), seeds, opt);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_ablation_csv(out, results);
  std::vector<double> bars;
  for (const auto& r : results) bars.push_back(r.median.miou);
  plot_bars(fs::path(out).replace_extension(".png").string(), bars, "ablation median mIoU");
  json rows = json::array();
  for (const auto& r : results) rows.push_back({{"row", r.row.name}, {"median_miou", r.median.miou}});
  std::cout << json{{"report", out}, {"rows", rows}}.dump() << '\n';
  return 0;
}

int cmd_flops(const Common& c, int height, int width) {
  RunConfig cfg = load_config(c);
  configure_threads(cfg);
  if (height <= 0) height = cfg.train.crop;
  if (width <= 0) width = cfg.train.crop;
  TEFormer<float> model(cfg.model);
  const auto cx = count_params_flops(model, height, width);
  // Reference full-scale figures, printed for context only.
  std::cout << json{{"params", cx.params},
                    {"params_m", cx.params / 1e6},
                    {"flops", cx.macs},
                    {"flops_g", cx.macs / 1e9},
                    {"input", {height, width}},
                    {"reference_params_m", 52.67},
                    {"reference_flops_g", 72.25}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_gen_data(const Common& c, int count, int size, int classes, const std::string& out) {
  RunConfig cfg = load_config(c);
  if (classes <= 0) classes = cfg.model.num_classes;
  const std::uint64_t seed = c.seed >= 0 ? static_cast<std::uint64_t>(c.seed) : cfg.data.seed;
  if (static_cast<int>(cfg.data.palette.colors.size()) < classes) throw ConfigError("palette has too few colours");
  fs::create_directories(fs::path(out) / "images");
  fs::create_directories(fs::path(out) / "labels");
  std::ofstream manifest(fs::path(out) / "manifest.txt");
  const int nval = static_cast<int>(std::lround(count * cfg.data.val_fraction));
  for (int i = 0; i < count; ++i) {
    const Sample s = gen_synthetic(static_cast<std::size_t>(i), size, classes, seed);
    write_png((fs::path(out) / "images" / (s.id + ".png")).string(), s.image);
    write_png((fs::path(out) / "labels" / (s.id + ".png")).string(),
              encode_labels(s.mask, s.height(), s.width(), cfg.data.palette));
    manifest << s.id << ' ' << (i < count - nval ? "train" : "val") << '\n';
  }
  std::cout << json{{"out", out}, {"count", count}}.dump() << '\n';
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TEFormer segmentation toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, common);
  std::string out_dir;
  train_cmd->add_option("--out", out_dir, "output directory (overrides out_dir)");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
  add_common(eval_cmd, common);
  std::string ckpt, split = "val", out = "metrics.json";
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--split", split);
  eval_cmd->add_option("--out", out);

  auto* predict_cmd = app.add_subcommand("predict", "segment one image");
  add_common(predict_cmd, common);
  std::string image, pred_out = "predictions";
  bool probs = false;
  predict_cmd->add_option("--checkpoint", ckpt)->required();
  predict_cmd->add_option("--image", image)->required();
  predict_cmd->add_option("--out", pred_out);
  predict_cmd->add_flag("--probs", probs, "also write class probabilities as .npy");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation table");
  add_common(ablate_cmd, common);
  std::string components = "tam,qco_only,pasppm,dam,egffm", report = "ablation.csv";
  int seeds = 3;
  std::vector<std::string> only;
  ablate_cmd->add_option("--components", components);
  ablate_cmd->add_option("--seeds", seeds);
  ablate_cmd->add_option("--out", report);
  ablate_cmd->add_option("--only", only, "restrict to these row names");

  auto* flops_cmd = app.add_subcommand("flops", "count parameters and multiply-accumulates");
  add_common(flops_cmd, common);
  int height = 0, width = 0;
  flops_cmd->add_option("--height", height);
  flops_cmd->add_option("--width", width);

  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic texture dataset");
  add_common(gen_cmd, common);
  int count = 100, size = 64, classes = 0;
  std::string gen_out = "synthetic";
  gen_cmd->add_option("--count", count);
  gen_cmd->add_option("--size", size);
  gen_cmd->add_option("--classes", classes);
  gen_cmd->add_option("--out", gen_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(common, out_dir);
    if (*eval_cmd) return cmd_eval(common, ckpt, split, out);
    if (*predict_cmd) return cmd_predict(common, ckpt, image, pred_out, probs);
    if (*ablate_cmd) return cmd_ablate(common, components, seeds, report, only);
    if (*flops_cmd) return cmd_flops(common, height, width);
    if (*gen_cmd) return cmd_gen_data(common, count, size, classes, gen_out);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 1;
}
