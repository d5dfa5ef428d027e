// Acceptance runner: `acceptance [criterion ...]`, all nine when none given.
// Prints one [PASS]/[FAIL] line per criterion; exits 1 if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "metrics_oracle.hpp"
#include "param_oracle.hpp"
#include "teformer/ablation.hpp"
#include "teformer/checkpoint.hpp"
#include "teformer/config.hpp"
#include "teformer/data.hpp"
#include "teformer/image_io.hpp"
#include "teformer/log.hpp"
#include "teformer/metrics.hpp"
#include "teformer/model.hpp"
#include "teformer/qco.hpp"
#include "teformer/train.hpp"

using namespace teformer;
using namespace teformer::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets, fixed here and nowhere else.
constexpr int kQcoInputs = 1000;
constexpr double kQcoRowTol = 1e-5;
constexpr double kQcoPermTol = 1e-6;
constexpr double kQcoBudgetS = 60;
constexpr double kGradBudgetS = 300;
constexpr std::size_t kMinModelProbes = 32;
constexpr double kUpsampleTol = 1e-6;
constexpr double kMetricHandTol = 1e-12;  // rationals vs float means
constexpr double kSaturationTol = 1e-6;
constexpr double kSaturationLogit = 20;
constexpr double kLossRatio = 0.5;
constexpr double kToyBudgetS = 600;
constexpr int kAblationSeeds = 3;
constexpr double kAblationBudgetS = 3600;
constexpr std::size_t kToyParamLimit = 5'000'000;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("teformer_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig load(const std::string& name) {
  return parse_config((fs::path(TEFORMER_SOURCE_DIR) / "configs" / name).string());
}

// Small enough for fp64 finite differences over the whole network.
ModelConfig gradcheck_model() {
  ModelConfig m;
  m.num_classes = 3;
  m.stage_channels = {8, 16, 16, 32};
  m.stage_depths = {1, 1, 1, 1};
  m.head_dim = 8;
  m.decoder_channels = 8;
  m.qco_levels = {4, 4};
  m.qco_channels = 4;
  m.pasppm_pool_sizes = {3};
  m.pasppm_dilations = {2};
  return m;
}

void randomize(const nn::ParamStore<double>& store, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& [name, v] : store.entries())
    for (auto& e : v.data()) e = d(rng);
}

template <typename T>
Var<T> random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(d(rng));
  return Var<T>(s, std::move(v));
}

// 1. QCO invariants over random inputs.
Verdict qco_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(2, 9), lv(2, 16), ch(2, 8);
  double row_dev = 0, count_dev = 0, adj_dev = 0, perm_dev = 0;
  for (int trial = 0; trial < kQcoInputs; ++trial) {
    const int c = ch(rng), h = dim(rng), w = dim(rng), levels = lv(rng);
    nn::ParamStore<float> store(static_cast<std::uint64_t>(trial));
    qco::Quantizer<float> quant(store, "q", levels, 4);
    auto x = random_tensor<float>({1, c, h, w}, rng, trial % 3 == 0 ? 5.0 : 1.0);
    NoGradGuard ng;
    auto r = quant(x);
    for (int i = 0; i < h * w; ++i) {
      double row = 0;
      for (int n = 0; n < levels; ++n) row += r.encoding.at(0, n, i / w, i % w);
      row_dev = std::max(row_dev, std::abs(row - 1));
    }
    double total = 0;
    for (float v : r.counts.data()) total += v;
    count_dev = std::max(count_dev, std::abs(total - 1));
    for (int i = 0; i < levels; ++i) {
      double row = 0;
      for (int j = 0; j < levels; ++j) row += r.adjacency.at(0, 0, i, j);
      adj_dev = std::max(adj_dev, std::abs(row - 1));
    }
    std::vector<int> perm(h * w);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Var<float> xp(x.shape());
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < h * w; ++i) xp.at(0, k, perm[i] / w, perm[i] % w) = x.at(0, k, i / w, i % w);
    auto rp = quant(xp);
    for (int n = 0; n < levels; ++n)
      perm_dev = std::max(perm_dev, std::abs(double(rp.counts.data()[n]) - r.counts.data()[n]));
  }
  const double secs = seconds_since(t0);
  const bool ok = row_dev <= kQcoRowTol && count_dev <= kQcoRowTol && adj_dev <= kQcoRowTol &&
                  perm_dev <= kQcoPermTol && secs < kQcoBudgetS;
  return {ok, std::to_string(kQcoInputs) + " inputs (fp32): B rows " + fmt(row_dev) + ", counts " + fmt(count_dev) +
                  ", D rows " + fmt(adj_dev) + " (tol " + fmt(kQcoRowTol) + "); count permutation " + fmt(perm_dev) +
                  " (tol " + fmt(kQcoPermTol) + "); " + fmt(secs) + " s"};
}

struct GradSummary {
  double worst = 0;
  std::size_t compared = 0, skipped = 0;
};

GradSummary summarize(const std::vector<ProbeResult>& rs) {
  GradSummary g;
  g.worst = max_rel_error(rs);
  g.compared = compared(rs);
  g.skipped = rs.size() - g.compared;
  return g;
}

std::vector<Probe> store_probes(const nn::ParamStore<double>& store, std::size_t per_tensor, std::vector<Var<double>>& leaves) {
  std::vector<Probe> probes;
  for (auto& [name, v] : store.entries()) {
    leaves.push_back(v);
    auto p = spread_probes(name, v, per_tensor);
    probes.insert(probes.end(), p.begin(), p.end());
  }
  return probes;
}

// Module a parameter belongs to, judged by its dotted name.
std::string module_of(const std::string& name) {
  auto has = [&](const char* s) { return name.find(s) != std::string::npos; };
  if (has(".offset.")) return "dys";
  if (has(".qco.")) return "qco";
  if (has(".tam.")) return "tam";
  if (has(".cwsa.")) return "cwsa";
  if (has(".ccab.")) return "ccab";
  if (name.rfind("stem.", 0) == 0 || has(".merge.") || has(".ffn.") || has(".norm")) return "encoder";
  if (name.rfind("decoder.edge.", 0) == 0) return "edge";
  if (has(".dam.")) return "dam";
  if (name.rfind("decoder.detail.", 0) == 0) return "detail";
  if (name.rfind("decoder.pasppm.", 0) == 0) return "pasppm";
  if (name.rfind("fusion.", 0) == 0) return "egffm";
  if (name.rfind("head.", 0) == 0) return "head";
  return "other";
}

// 2. fp64 gradient checks.
Verdict gradient_checks() {
  const auto t0 = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  auto record = [&](const std::string& what, const GradSummary& g, std::size_t min_compared) {
    const bool pass = g.worst < kFdRelTol && g.compared >= min_compared;
    ok &= pass;
    detail << what << " " << fmt(g.worst) << " over " << g.compared << " (" << g.skipped << " at kinks); ";
  };
  std::mt19937_64 rng(77);
  const auto cfg = gradcheck_model();
  {
    nn::ParamStore<double> store(1);
    qco::QcoSpatial<double> q(store, "qs", 6, 4);
    auto x = random_var({1, 8, 4, 4}, rng);
    std::vector<Var<double>> leaves{x};
    auto probes = spread_probes("x", x, 64);
    auto p = store_probes(store, 3, leaves);
    probes.insert(probes.end(), p.begin(), p.end());
    auto rs = check_gradients([&] { return probe_loss(q(FeatureMap<double>{x, 4}).data); }, leaves, probes);
    record("qco_spatial", summarize(rs), 40);
  }
  {
    nn::ParamStore<double> store(2);
    Egffm<double> f(store, "fusion", cfg);
    DecoderBundle<double> d;
    d.p_e = {random_var({1, 8, 4, 4}, rng), 16};
    d.p_d2 = {random_var({1, 8, 8, 8}, rng), 8};
    d.p_c = {random_var({1, 8, 2, 2}, rng), 32};
    std::vector<Var<double>> leaves{d.p_e.data, d.p_d2.data, d.p_c.data};
    std::vector<Probe> probes;
    for (auto* fm : {&d.p_e, &d.p_d2, &d.p_c}) {
      auto p = spread_probes("stream", fm->data, 8);
      probes.insert(probes.end(), p.begin(), p.end());
    }
    auto p = store_probes(store, 3, leaves);
    probes.insert(probes.end(), p.begin(), p.end());
    auto rs = check_gradients([&] { return probe_loss(f(d).data); }, leaves, probes);
    record("egffm", summarize(rs), 40);
  }
  {
    nn::ParamStore<double> store(3);
    Pasppm<double> pp(store, "pp", 6, 6, {3, 5}, {2, 3});
    auto x = random_var({1, 6, 6, 6}, rng);
    std::vector<Var<double>> leaves{x};
    auto probes = spread_probes("x", x, 24);
    auto p = store_probes(store, 3, leaves);
    probes.insert(probes.end(), p.begin(), p.end());
    auto rs = check_gradients([&] { return probe_loss(pp(FeatureMap<double>{x, 32}).data); }, leaves, probes);
    record("pasppm", summarize(rs), 40);
  }
  {
    // End to end: cross-entropy of the whole network, one probe per tensor.
    TEFormer<double> model(cfg);
    randomize(model.params(), 5, 0.3);
    auto image = random_var({1, 3, 32, 32}, rng, 1.0, false);
    std::vector<int> target(32 * 32);
    std::uniform_int_distribution<int> cls(0, cfg.num_classes - 1);
    for (auto& t : target) t = cls(rng);
    std::vector<Var<double>> leaves;
    std::vector<Probe> probes;
    std::size_t k = 0;
    for (auto& [name, v] : model.params().entries()) {
      leaves.push_back(v);
      probes.push_back({name, v, (k++ * 7919) % v.numel()});
    }
    auto rs = check_gradients([&] { return ops::cross_entropy(model.forward(image).logits.data, target, 255); }, leaves,
                              probes);
    std::map<std::string, std::size_t> per_module;
    for (const auto& r : rs)
      if (!r.skipped) ++per_module[module_of(r.label)];
    record("model", summarize(rs), kMinModelProbes);
    const std::vector<std::string> required{"encoder", "qco", "tam", "cwsa", "ccab", "dys", "edge",
                                            "dam", "detail", "pasppm", "egffm", "head"};
    std::string missing;
    for (const auto& m : required)
      if (!per_module.count(m)) missing += " " + m;
    if (!missing.empty()) {
      ok = false;
      detail << "modules without a compared probe:" << missing << "; ";
    } else {
      detail << per_module.size() << " modules covered; ";
    }
  }
  const double secs = seconds_since(t0);
  ok &= secs < kGradBudgetS;
  detail << "tol " << fmt(kFdRelTol) << ", step " << fmt(kFdStep) << ", " << fmt(secs) << " s";
  return {ok, detail.str()};
}

double bilinear_oracle(const std::vector<double>& p, int h, int w, int s, int oy, int ox) {
  auto coord = [&](int o, int extent) { return std::clamp((o + 0.5) / s - 0.5, 0.0, double(extent - 1)); };
  const double sy = coord(oy, h), sx = coord(ox, w);
  const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  auto v = [&](int y, int x) { return p[std::size_t(y) * w + x]; };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

// 3. Dynamic upsampler against the scalar oracle, and constancy.
Verdict upsampler_oracle() {
  std::mt19937_64 rng(3);
  double oracle_err = 0, const_err = 0;
  NoGradGuard ng;
  for (int s : {2, 4, 8}) {
    nn::ParamStore<float> store(s);
    DynamicUpsampler<float> up(store, "up", 3, s, UpsamplerMode::kDynamic);
    for (auto& [name, v] : store.entries()) std::fill(v.data().begin(), v.data().end(), 0.0f);
    auto x = random_tensor<float>({2, 3, 5, 6}, rng);
    auto y = up(FeatureMap<float>{x, 16}).data;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(30);
        for (int i = 0; i < 30; ++i) plane[i] = x.at(n, c, i / 6, i % 6);
        for (int oy = 0; oy < 5 * s; ++oy)
          for (int ox = 0; ox < 6 * s; ++ox)
            oracle_err = std::max(oracle_err, std::abs(y.at(n, c, oy, ox) - bilinear_oracle(plane, 5, 6, s, oy, ox)));
      }
    // Random offset predictor: a constant map must stay constant.
    nn::ParamStore<float> learned(100 + s);
    DynamicUpsampler<float> up2(learned, "up", 3, s, UpsamplerMode::kDynamic);
    std::uniform_real_distribution<float> d(-1, 1);
    for (auto& [name, v] : learned.entries())
      for (auto& e : v.data()) e = d(rng);
    Var<float> flat({1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) flat.at(0, c, i / 4, i % 4) = 0.5f - c;
    auto z = up2(FeatureMap<float>{flat, 16}).data;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16 * s * s; ++i)
        const_err = std::max(const_err, std::abs(double(z.at(0, c, i / (4 * s), i % (4 * s))) - (0.5 - c)));
  }
  const bool ok = oracle_err <= kUpsampleTol && const_err <= kUpsampleTol;
  return {ok, "scales 2/4/8 (fp32): oracle " + fmt(oracle_err) + ", constancy " + fmt(const_err) + " (tol " +
                  fmt(kUpsampleTol) + ")"};
}

// 4. Metrics against the hand case and a brute-force scorer.
Verdict metric_oracle() {
  auto r = compute_metrics(confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2, 255));
  const double hand_err = std::max({std::abs(r.miou - 7.0 / 12), std::abs(r.mf1 - 11.0 / 15), std::abs(r.pa - 3.0 / 4)});
  bool ok = hand_err <= kMetricHandTol;
  std::mt19937 rng(4);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 6;
    std::uniform_int_distribution<int> d(0, k - 1);
    std::bernoulli_distribution ignore(0.05);
    std::vector<int> pred(256), gt(256);
    for (int i = 0; i < 256; ++i) {
      pred[i] = d(rng);
      gt[i] = ignore(rng) ? 255 : d(rng);
    }
    auto m = compute_metrics(confusion(pred, gt, k, 255));
    auto b = brute_force(pred, gt, k, 255);
    mismatches += !(m.miou == b.miou && m.mf1 == b.mf1 && m.pa == b.pa);
  }
  ok &= mismatches == 0;
  return {ok, "hand case mIoU " + fmt(r.miou) + " mF1 " + fmt(r.mf1) + " PA " + fmt(r.pa) + " (off by " + fmt(hand_err) +
                  ", tol " + fmt(kMetricHandTol) + ")" +
                  "; 100 random 16x16 pairs, " + std::to_string(mismatches) + " inexact"};
}

// 5. Saturated edge gate silences one stream of the fusion.
Verdict gate_saturation() {
  auto cfg = load("toy.json").model;
  cfg.decoder_bias = false;
  nn::ParamStore<double> store(5);
  Egffm<double> f(store, "fusion", cfg);
  const int cd = cfg.decoder_channels;
  std::mt19937_64 rng(5);
  DecoderBundle<double> d;
  d.p_e = {random_var({1, cd, 8, 8}, rng, 1.0, false), 16};
  d.p_d2 = {random_var({1, cd, 16, 16}, rng, 1.0, false), 8};
  d.p_c = {random_var({1, cd, 4, 4}, rng, 1.0, false), 32};
  auto max_diff = [](const Var<double>& a, const Var<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
  };
  NoGradGuard ng;
  double leak[2] = {0, 0}, kept[2] = {0, 0};
  for (int side = 0; side < 2; ++side) {
    const double logit = side == 0 ? kSaturationLogit : -kSaturationLogit;
    auto run = [&](const DecoderBundle<double>& b) {
      GateProbe<double> probe{logit, {}, {}};
      return f(b, &probe).data;
    };
    auto full = run(d);
    auto silenced = d, surviving = d;
    // +logit keeps the detail stream, so P_c's contribution must vanish.
    (side == 0 ? silenced.p_c : silenced.p_d2).data = Var<double>((side == 0 ? d.p_c : d.p_d2).shape(), 0.0);
    (side == 0 ? surviving.p_d2 : surviving.p_c).data = Var<double>((side == 0 ? d.p_d2 : d.p_c).shape(), 0.0);
    leak[side] = max_diff(full, run(silenced));
    kept[side] = max_diff(full, run(surviving));
  }
  const bool ok = leak[0] <= kSaturationTol && leak[1] <= kSaturationTol && kept[0] > 1e-3 && kept[1] > 1e-3;
  return {ok, "logit +" + fmt(kSaturationLogit) + ": context contribution " + fmt(leak[0]) + "; logit -" +
                  fmt(kSaturationLogit) + ": detail contribution " + fmt(leak[1]) + " (tol " + fmt(kSaturationTol) +
                  "); surviving streams " + fmt(kept[0]) + ", " + fmt(kept[1])};
}

// 6. Toy training halves the smoothed loss, deterministically.
Verdict toy_training() {
  RunConfig cfg = load("toy.json");
  const auto dir = scratch("toy");
  std::vector<double> curves[2];
  double initial = 0, final_loss = 0, secs = 0;
  for (int run = 0; run < 2; ++run) {
    cfg.out_dir = (dir / ("run" + std::to_string(run))).string();
    TEFormer<float> model(cfg.model);
    auto data = open_data(cfg);
    TrainOptions opt;
    opt.out_dir = cfg.out_dir;
    const auto t0 = Clock::now();
    auto r = train(model, *data.train, cfg, opt);
    if (run == 0) {
      secs = seconds_since(t0);
      initial = r.initial_smoothed;
      final_loss = r.final_smoothed;
    }
    curves[run] = r.losses;
  }
  fs::remove_all(dir);
  const double ratio = final_loss / initial;
  const bool same = curves[0] == curves[1];
  const bool ok = ratio <= kLossRatio && same && secs < kToyBudgetS &&
                  static_cast<int>(curves[0].size()) == cfg.train.iterations;
  return {ok, std::to_string(cfg.train.iterations) + " iterations: smoothed loss " + fmt(initial) + " -> " +
                  fmt(final_loss) + " (ratio " + fmt(ratio) + ", limit " + fmt(kLossRatio) + "); repeat run " +
                  (same ? "bit-identical" : "DIFFERS") + "; " + fmt(secs) + " s per run"};
}

// 7. Ablation ordering over seeds.
Verdict ablation_trend() {
  const RunConfig base = load("ablation.json");
  AblationOptions opt;
  opt.only = {"group1", "group5", "tam_qco_only", "tam_full"};
  opt.on_run = [](const std::string& row, std::uint64_t seed, const MetricsReport& r) {
    std::cout << "  " << row << " seed " << seed << " mIoU " << fmt(r.miou) << std::endl;
  };
  const auto t0 = Clock::now();
  const auto results = run_ablation(base, {"tam", "qco_only", "pasppm", "dam", "egffm"}, kAblationSeeds, opt);
  const double secs = seconds_since(t0);
  std::map<std::string, double> med;
  for (const auto& r : results) med[r.row.name] = r.median.miou;
  write_ablation_csv((fs::current_path() / "ablation_acceptance.csv").string(), results);
  const bool decoder = med["group5"] >= med["group1"];
  const bool tam = med["tam_full"] >= med["tam_qco_only"];
  const bool ok = decoder && tam && secs < kAblationBudgetS;
  return {ok, std::to_string(kAblationSeeds) + " seeds x " + std::to_string(base.train.iterations) +
                  " iterations: median mIoU full " + fmt(med["group5"]) + " vs decoder-ablated " + fmt(med["group1"]) +
                  (decoder ? " (ok)" : " (ORDER VIOLATED)") + "; full TaM " + fmt(med["tam_full"]) + " vs QCO-only " +
                  fmt(med["tam_qco_only"]) + (tam ? " (ok)" : " (ORDER VIOLATED)") + "; " + fmt(secs) + " s"};
}

// 8. Pyramid, parameter budget, full-scale complexity report.
Verdict structure() {
  const auto toy = load("toy.json").model;
  TEFormer<float> model(toy);
  std::mt19937_64 rng(8);
  NoGradGuard ng;
  auto pyr = model.encoder()(random_tensor<float>({1, 3, 64, 64}, rng));
  bool ok = true;
  std::string shapes;
  for (int i = 0; i < 4; ++i) {
    const int s = kStageStrides[i];
    ok &= pyr[i].stride == s && pyr[i].shape() == Shape{1, toy.stage_channels[i], 64 / s, 64 / s};
    shapes += " " + pyr[i].shape().str() + "@" + std::to_string(pyr[i].stride);
  }
  const std::size_t analytic = ParamOracle{toy}.total();
  ok &= analytic < kToyParamLimit && analytic == model.params().total_elements();
  const auto full = load("paper_scale.json");
  TEFormer<float> big(full.model);
  const auto cx = count_params_flops(big, full.train.crop, full.train.crop);
  return {ok, "pyramid" + shapes + "; toy params " + std::to_string(analytic) + " (limit " +
                  std::to_string(kToyParamLimit) + "); paper_scale at " + std::to_string(full.train.crop) + ": " +
                  fmt(cx.params / 1e6) + "M params, " + fmt(cx.macs / 1e9) +
                  " GMACs (reference 52.67M / 72.25G, context only)"};
}

// 9. Checkpoint, palette and tiling round trips.
Verdict round_trips() {
  const auto dir = scratch("pipeline");
  bool ok = true;
  std::string detail;
  {
    auto cfg = load("toy.json");
    TEFormer<float> model(cfg.model);
    std::mt19937_64 rng(9);
    std::normal_distribution<float> d(0, 1);
    for (auto& [name, v] : model.params().entries())
      for (auto& e : v.data()) e = d(rng);
    save_model((dir / "a.ckpt").string(), model, cfg);
    auto [loaded, lcfg] = load_model((dir / "a.ckpt").string());
    save_model((dir / "b.ckpt").string(), *loaded, lcfg);
    const bool same = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");
    ok &= same;
    detail += std::string("checkpoint ") + (same ? "byte-stable" : "CHANGED");
  }
  {
    const auto pal = Palette::isprs();
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(pal.colors.size()) - 1);
    std::vector<int> mask(64 * 64);
    for (auto& m : mask) m = cls(rng);
    const bool bijective = decode_labels(encode_labels(mask, 64, 64, pal), pal) == mask &&
                           std::set<Rgb>(pal.colors.begin(), pal.colors.end()).size() == pal.colors.size();
    ok &= bijective;
    detail += std::string("; palette ") + (bijective ? "bijective" : "NOT bijective");
  }
  {
    const int n = 6000, tile = 512;
    Image8 img{n, n, 3, std::vector<std::uint8_t>(std::size_t(n) * n * 3, 0)};
    Image8 lbl{n, n, 3, std::vector<std::uint8_t>(std::size_t(n) * n * 3, 255)};  // all white = class 0
    fs::create_directories(dir / "img");
    fs::create_directories(dir / "lbl");
    write_png((dir / "img" / "big.png").string(), img);
    write_png((dir / "lbl" / "big.png").string(), lbl);
    TileDataset ds((dir / "img").string(), (dir / "lbl").string(), tile, tile, Palette::isprs(), 6);
    std::vector<std::uint8_t> covered(std::size_t(n) * n, 0);
    for (const auto& t : ds.tiles())
      for (int y = t.y; y < t.y + tile; ++y) std::fill_n(covered.begin() + std::size_t(y) * n + t.x, tile, 1);
    const auto hit = std::count(covered.begin(), covered.end(), 1);
    const bool tiles_ok = ds.size() == 144 && hit == static_cast<long>(n) * n;
    ok &= tiles_ok;
    detail += "; 6000x6000 raster -> " + std::to_string(ds.size()) + " tiles, " +
              (hit == static_cast<long>(n) * n ? "every pixel covered" : "GAPS");
  }
  fs::remove_all(dir);
  return {ok, detail};
}

const std::map<int, std::pair<std::string, Verdict (*)()>> kCriteria{
    {1, {"qco-invariants", qco_invariants}},     {2, {"gradient-checks", gradient_checks}},
    {3, {"upsampler-oracle", upsampler_oracle}}, {4, {"metric-oracle", metric_oracle}},
    {5, {"gate-saturation", gate_saturation}},   {6, {"toy-training", toy_training}},
    {7, {"ablation-trend", ablation_trend}},     {8, {"structure", structure}},
    {9, {"round-trips", round_trips}},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (!kCriteria.count(c)) {
      std::cerr << "unknown criterion: " << argv[i] << "\n";
      return 2;
    }
    chosen.push_back(c);
  }
  if (chosen.empty())
    for (const auto& [c, _] : kCriteria) chosen.push_back(c);
  int failures = 0;
  for (int c : chosen) {
    const auto& [name, fn] = kCriteria.at(c);
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << c << " " << name << ": " << v.detail << std::endl;
  }
  return failures ? 1 : 0;
}
