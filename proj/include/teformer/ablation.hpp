#pragma once

#include <functional>
#include <string>
#include <vector>

#include "teformer/config.hpp"
#include "teformer/train.hpp"

namespace teformer {

/// One configuration of the ablation report. `table` is "decoder" for the
/// progressive PASPPM/DAM/EgFFM groups (full TaM encoder) and "tam" for the
/// encoder comparison (full decoder).
struct AblationRow {
  std::string table;
  std::string name;
  TamMode tam = TamMode::kFull;
  bool pasppm = true, dam = true, egffm = true;

  RunConfig apply(const RunConfig& base) const;
};

/// Accepted names: tam, qco_only, pasppm, dam, egffm. Decoder groups 1-5 are
/// produced when any decoder component is named, the TaM rows (none,
/// qco_only, full) when tam or qco_only is named. Unnamed components stay on.
std::vector<AblationRow> ablation_rows(const std::vector<std::string>& components);
std::vector<std::string> parse_components(const std::string& csv);

struct AblationResult {
  AblationRow row;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> runs;
  MetricsReport median;  // per-field median over seeds
  Complexity complexity;
  std::string config_hash;  // of the first seed's config
  double wall_time_s = 0;
};

struct AblationOptions {
  /// Row names to run; empty runs every row.
  std::vector<std::string> only;
  std::function<void(const std::string& row, std::uint64_t seed, const MetricsReport&)> on_run;
};

/// Trains and scores every row for seeds base.seed .. base.seed + seeds - 1 on
/// the configured data; rows with identical configurations share runs.
std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<std::string>& components, int seeds,
                                         const AblationOptions& opt = {});

void write_ablation_csv(const std::string& path, const std::vector<AblationResult>& results);

double median(std::vector<double> v);

}  // namespace teformer
