#include "teformer/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "teformer/errors.hpp"
#include "teformer/log.hpp"

namespace teformer {

RunConfig AblationRow::apply(const RunConfig& base) const {
  RunConfig c = base;
  c.model.tam = tam;
  c.model.pasppm = pasppm;
  c.model.dam = dam;
  c.model.egffm = egffm;
  return c;
}

std::vector<std::string> parse_components(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }), item.end());
    std::transform(item.begin(), item.end(), item.begin(), [](unsigned char ch) { return ch == '-' ? '_' : std::tolower(ch); });
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<AblationRow> ablation_rows(const std::vector<std::string>& components) {
  static const std::set<std::string> known{"tam", "qco_only", "pasppm", "dam", "egffm"};
  std::set<std::string> on;
  for (const auto& c : components) {
    if (!known.count(c)) throw ConfigError("unknown ablation component: " + c);
    on.insert(c);
  }
  if (on.empty()) throw ConfigError("no ablation components given");
  std::vector<AblationRow> rows;
  if (on.count("pasppm") || on.count("dam") || on.count("egffm")) {
    // Table layout: group -> (PASPPM, DAM, EgFFM).
    const bool groups[5][3] = {{false, false, false}, {true, false, false}, {false, true, false},
                               {true, true, false}, {true, true, true}};
    for (int g = 0; g < 5; ++g) {
      AblationRow r{"decoder", "group" + std::to_string(g + 1)};
      r.pasppm = on.count("pasppm") ? groups[g][0] : true;
      r.dam = on.count("dam") ? groups[g][1] : true;
      r.egffm = on.count("egffm") ? groups[g][2] : true;
      rows.push_back(r);
    }
  }
  if (on.count("tam") || on.count("qco_only")) {
    if (on.count("tam")) rows.push_back({"tam", "tam_none", TamMode::kNone});
    rows.push_back({"tam", "tam_qco_only", TamMode::kQcoOnly});
    rows.push_back({"tam", "tam_full", TamMode::kFull});
  }
  return rows;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

MetricsReport median_report(const std::vector<MetricsReport>& runs) {
  MetricsReport m = runs.front();
  auto field = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(get(r));
    return median(v);
  };
  m.miou = field([](const MetricsReport& r) { return r.miou; });
  m.mf1 = field([](const MetricsReport& r) { return r.mf1; });
  m.pa = field([](const MetricsReport& r) { return r.pa; });
  m.boundary_f1 = field([](const MetricsReport& r) { return r.boundary_f1; });
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    std::vector<double> iou, f1;
    for (const auto& r : runs)
      if (r.present[c]) iou.push_back(r.iou[c]), f1.push_back(r.f1[c]);
    m.present[c] = !iou.empty();
    m.iou[c] = median(iou);
    m.f1[c] = median(f1);
  }
  return m;
}

}  // namespace

std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<std::string>& components, int seeds,
                                         const AblationOptions& opt) {
  if (seeds < 1) throw ConfigError("ablation needs at least one seed");
  auto rows = ablation_rows(components);
  if (!opt.only.empty()) {
    for (const auto& name : opt.only)
      if (std::none_of(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.name == name; }))
        throw ConfigError("unknown ablation row: " + name);
    std::erase_if(rows, [&](const AblationRow& r) {
      return std::find(opt.only.begin(), opt.only.end(), r.name) == opt.only.end();
    });
  }
  std::map<std::string, std::pair<MetricsReport, double>> cache;  // config hash -> (metrics, seconds)
  std::vector<AblationResult> results;
  for (const auto& row : rows) {
    AblationResult res;
    res.row = row;
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = row.apply(base);
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      cfg.model.seed = cfg.seed;
      const std::string hash = config_hash(cfg);
      if (s == 0) res.config_hash = hash;
      auto it = cache.find(hash);
      if (it == cache.end()) {
        TEFormer<float> model(cfg.model);
        auto data = open_data(cfg);
        log::info("ablation " + row.name + " seed " + std::to_string(cfg.seed));
        const auto tr = train(model, *data.train, cfg);
        const auto ev = evaluate(model, *data.val, cfg.data.palette.ignore_index, cfg.eval.exclude_classes);
        it = cache.emplace(hash, std::make_pair(ev.report, tr.wall_time_s)).first;
      }
      res.seeds.push_back(cfg.seed);
      res.runs.push_back(it->second.first);
      res.wall_time_s += it->second.second;
      if (opt.on_run) opt.on_run(row.name, cfg.seed, it->second.first);
    }
    TEFormer<float> shape_only(row.apply(base).model);
    res.complexity = count_params_flops(shape_only, base.train.crop, base.train.crop);
    res.median = median_report(res.runs);
    results.push_back(std::move(res));
  }
  return results;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationResult>& results) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ablation report: " + path);
  const std::size_t k = results.empty() ? 0 : results.front().median.iou.size();
  out << "table,row,tam,pasppm,dam,egffm,config_hash,seed";
  for (std::size_t c = 0; c < k; ++c) out << ",iou_" << c << ",f1_" << c;
  out << ",miou,mf1,pa,boundary_f1,params,flops,wall_time_s,miou_per_seed\n";
  out.precision(6);
  auto num = [&](double v) {
    std::ostringstream s;
    s.precision(6);
    if (std::isnan(v)) return std::string();
    s << v;
    return s.str();
  };
  for (const auto& r : results) {
    std::string seeds, per_seed;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
      per_seed += (i ? ";" : "") + num(r.runs[i].miou);
    }
    out << r.row.table << ',' << r.row.name << ',' << to_string(r.row.tam) << ',' << r.row.pasppm << ',' << r.row.dam << ','
        << r.row.egffm << ',' << r.config_hash << ',' << seeds;
    for (std::size_t c = 0; c < k; ++c) out << ',' << num(r.median.iou[c]) << ',' << num(r.median.f1[c]);
    out << ',' << num(r.median.miou) << ',' << num(r.median.mf1) << ',' << num(r.median.pa) << ','
        << num(r.median.boundary_f1) << ',' << r.complexity.params << ',' << r.complexity.macs << ','
        << num(r.wall_time_s) << ',' << per_seed << '\n';
  }
}

}  // namespace teformer
