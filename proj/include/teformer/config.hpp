#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "teformer/core.hpp"

namespace teformer {

using Rgb = std::array<int, 3>;

struct Palette {
  std::vector<Rgb> colors;  // index = class id
  int ignore_index = 255;

  /// ISPRS Potsdam/Vaihingen colour coding.
  static Palette isprs();
  /// Class id of `c`, or -1 when the colour is not declared.
  int decode(const Rgb& c) const;
  /// Throws ConfigError on duplicate colours or components outside [0, 255].
  void validate() const;
};

struct TrainConfig {
  double lr = 6e-5;
  double weight_decay = 0.01;
  int batch_size = 2;
  int iterations = 160000;
  int crop = 512;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double poly_power = 1.0;
  int log_every = 10;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  int val_every = 0;         // 0: validate once at the end
  bool augment = true;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | tiles
  int count = 500;
  int size = 64;
  std::uint64_t seed = 0;  // synthetic scene family, independent of the run seed
  double val_fraction = 0.1;
  std::string image_dir;
  std::string label_dir;
  std::string manifest;  // optional "<id> <split>" lines
  int tile = 512;
  int tile_stride = 512;
  Palette palette = Palette::isprs();
};

struct EvalConfig {
  /// Class ids left out of the metric means (their pixels are still scored
  /// as false positives/negatives for the other classes).
  std::vector<int> exclude_classes;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  int threads = 0;  // 0: OpenMP default

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict conversion: every key must exist in the default schema and carry a
/// value of the same JSON type; missing keys keep their defaults.
RunConfig from_json(const nlohmann::json& j);

/// Reads a JSON config file (an empty file means all defaults) and applies
/// `key.path=value` overrides; values are parsed as JSON, falling back to a
/// plain string.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

/// SHA-256 of the canonical (key-sorted, compact) JSON form, hex encoded.
std::string config_hash(const RunConfig& cfg);

std::string sha256_hex(const std::string& bytes);

}  // namespace teformer
