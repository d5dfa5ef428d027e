#include "teformer/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "teformer/errors.hpp"

namespace teformer {

using nlohmann::json;

Palette Palette::isprs() {
  return Palette{{{255, 255, 255}, {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}, 255};
}

int Palette::decode(const Rgb& c) const {
  for (std::size_t i = 0; i < colors.size(); ++i)
    if (colors[i] == c) return static_cast<int>(i);
  return -1;
}

void Palette::validate() const {
  std::set<Rgb> seen;
  for (const auto& c : colors) {
    for (int v : c)
      if (v < 0 || v > 255) throw ConfigError("data.palette: colour component out of range");
    if (!seen.insert(c).second) throw ConfigError("data.palette: duplicate colour");
  }
}

void RunConfig::validate() const {
  model.validate();
  data.palette.validate();
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(train.lr > 0)) fail("train.lr must be positive");
  if (train.weight_decay < 0) fail("train.weight_decay must be non-negative");
  if (train.batch_size < 1) fail("train.batch_size must be positive");
  if (train.iterations < 1) fail("train.iterations must be positive");
  if (train.crop < 32 || train.crop % 32) fail("train.crop must be a positive multiple of 32");
  if (train.poly_power < 0) fail("train.poly_power must be non-negative");
  if (data.source != "synthetic" && data.source != "tiles") fail("data.source must be synthetic or tiles");
  if (data.source == "synthetic" && (data.size < 32 || data.size % 32)) fail("data.size must be a multiple of 32");
  if (data.count < 1) fail("data.count must be positive");
  if (data.val_fraction < 0 || data.val_fraction >= 1) fail("data.val_fraction must be in [0, 1)");
  if (data.tile < 32 || data.tile % 32 || data.tile_stride < 1) fail("data.tile must be a positive multiple of 32");
  if (static_cast<int>(data.palette.colors.size()) < model.num_classes)
    fail("data.palette declares fewer colours than model.num_classes");
  if (data.palette.ignore_index >= 0 && data.palette.ignore_index < model.num_classes)
    fail("data.palette.ignore_index collides with a class id");
  for (int c : eval.exclude_classes)
    if (c < 0 || c >= model.num_classes) fail("eval.exclude_classes contains an unknown class");
  if (threads < 0) fail("threads must be non-negative");
}

json to_json(const RunConfig& c) {
  const auto& m = c.model;
  json palette = json::array();
  for (const auto& rgb : c.data.palette.colors) palette.push_back(rgb);
  return json{
      {"model",
       {{"num_classes", m.num_classes},
        {"in_channels", m.in_channels},
        {"stage_channels", m.stage_channels},
        {"stage_depths", m.stage_depths},
        {"qco_levels", m.qco_levels},
        {"qco_channels", m.qco_channels},
        {"stripe_width", m.stripe_width},
        {"head_dim", m.head_dim},
        {"mlp_ratio", m.mlp_ratio},
        {"decoder_channels", m.decoder_channels},
        {"pasppm_pool_sizes", m.pasppm_pool_sizes},
        {"pasppm_dilations", m.pasppm_dilations},
        {"upsampler", to_string(m.upsampler)},
        {"tam", to_string(m.tam)},
        {"pasppm", m.pasppm},
        {"dam", m.dam},
        {"egffm", m.egffm},
        {"literal_fusion", m.literal_fusion},
        {"decoder_bias", m.decoder_bias}}},
      {"train",
       {{"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"batch_size", c.train.batch_size},
        {"iterations", c.train.iterations},
        {"crop", c.train.crop},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"eps", c.train.eps},
        {"poly_power", c.train.poly_power},
        {"log_every", c.train.log_every},
        {"checkpoint_every", c.train.checkpoint_every},
        {"val_every", c.train.val_every},
        {"augment", c.train.augment}}},
      {"data",
       {{"source", c.data.source},
        {"count", c.data.count},
        {"size", c.data.size},
        {"seed", c.data.seed},
        {"val_fraction", c.data.val_fraction},
        {"image_dir", c.data.image_dir},
        {"label_dir", c.data.label_dir},
        {"manifest", c.data.manifest},
        {"tile", c.data.tile},
        {"tile_stride", c.data.tile_stride},
        {"palette", palette},
        {"ignore_index", c.data.palette.ignore_index}}},
      {"eval", {{"exclude_classes", c.eval.exclude_classes}}},
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"threads", c.threads},
  };
}

namespace {

bool same_kind(const json& want, const json& got) {
  if (want.is_number_float()) return got.is_number();
  if (want.is_number_unsigned() || want.is_number_integer()) return got.is_number_integer() || got.is_number_unsigned();
  if (want.is_array()) return got.is_array();
  return want.type() == got.type();
}

// Recursively overlays `user` on `base`, rejecting unknown keys and type
// changes. Arrays are replaced whole.
void overlay(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) throw ConfigError("type mismatch for config key: " + key);
      slot = it.value();
    }
  }
}

template <typename V>
V get(const json& j, const std::string& section, const std::string& key) {
  try {
    return j.at(section).at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("type mismatch for config key: " + section + "." + key);
  }
}

}  // namespace

RunConfig from_json(const json& user) {
  json merged = to_json(RunConfig{});
  overlay(merged, user, "");
  RunConfig c;
  auto& m = c.model;
  const json& jm = merged["model"];
  try {
    m.num_classes = jm["num_classes"];
    m.in_channels = jm["in_channels"];
    m.stage_channels = jm["stage_channels"].get<std::array<int, 4>>();
    m.stage_depths = jm["stage_depths"].get<std::array<int, 4>>();
    m.qco_levels = jm["qco_levels"].get<std::array<int, 2>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: malformed array value: ") + e.what());
  }
  m.qco_channels = get<int>(merged, "model", "qco_channels");
  m.stripe_width = get<int>(merged, "model", "stripe_width");
  m.head_dim = get<int>(merged, "model", "head_dim");
  m.mlp_ratio = get<int>(merged, "model", "mlp_ratio");
  m.decoder_channels = get<int>(merged, "model", "decoder_channels");
  m.pasppm_pool_sizes = get<std::vector<int>>(merged, "model", "pasppm_pool_sizes");
  m.pasppm_dilations = get<std::vector<int>>(merged, "model", "pasppm_dilations");
  m.upsampler = upsampler_mode_from(get<std::string>(merged, "model", "upsampler"));
  m.tam = tam_mode_from(get<std::string>(merged, "model", "tam"));
  m.pasppm = get<bool>(merged, "model", "pasppm");
  m.dam = get<bool>(merged, "model", "dam");
  m.egffm = get<bool>(merged, "model", "egffm");
  m.literal_fusion = get<bool>(merged, "model", "literal_fusion");
  m.decoder_bias = get<bool>(merged, "model", "decoder_bias");

  auto& t = c.train;
  t.lr = get<double>(merged, "train", "lr");
  t.weight_decay = get<double>(merged, "train", "weight_decay");
  t.batch_size = get<int>(merged, "train", "batch_size");
  t.iterations = get<int>(merged, "train", "iterations");
  t.crop = get<int>(merged, "train", "crop");
  t.beta1 = get<double>(merged, "train", "beta1");
  t.beta2 = get<double>(merged, "train", "beta2");
  t.eps = get<double>(merged, "train", "eps");
  t.poly_power = get<double>(merged, "train", "poly_power");
  t.log_every = get<int>(merged, "train", "log_every");
  t.checkpoint_every = get<int>(merged, "train", "checkpoint_every");
  t.val_every = get<int>(merged, "train", "val_every");
  t.augment = get<bool>(merged, "train", "augment");

  auto& d = c.data;
  d.source = get<std::string>(merged, "data", "source");
  d.count = get<int>(merged, "data", "count");
  d.size = get<int>(merged, "data", "size");
  d.seed = get<std::uint64_t>(merged, "data", "seed");
  d.val_fraction = get<double>(merged, "data", "val_fraction");
  d.image_dir = get<std::string>(merged, "data", "image_dir");
  d.label_dir = get<std::string>(merged, "data", "label_dir");
  d.manifest = get<std::string>(merged, "data", "manifest");
  d.tile = get<int>(merged, "data", "tile");
  d.tile_stride = get<int>(merged, "data", "tile_stride");
  d.palette.colors = get<std::vector<Rgb>>(merged, "data", "palette");
  d.palette.ignore_index = get<int>(merged, "data", "ignore_index");

  c.eval.exclude_classes = get<std::vector<int>>(merged, "eval", "exclude_classes");
  c.seed = merged["seed"].get<std::uint64_t>();
  c.out_dir = merged["out_dir"].get<std::string>();
  c.threads = merged["threads"].get<int>();
  c.model.seed = c.seed;
  c.validate();
  return c;
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
  json j = to_json(base);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + o);
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // Build the nested patch {a: {b: value}} for "a.b".
    json patch = value;
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    // Reject the key here so the message names it in dotted form.
    const json* node = &j;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!node->is_object() || !node->contains(parts[i])) throw ConfigError("unknown config key: " + key);
      node = &(*node)[parts[i]];
    }
    if (node->is_object()) throw ConfigError("config key names a section, not a value: " + key);
    if (!same_kind(*node, value)) throw ConfigError("type mismatch for config key: " + key);
    j.merge_patch(patch);
  }
  return from_json(j);
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json user = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    user = json::parse(text, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  }
  return apply_overrides(from_json(user), overrides);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

}  // namespace teformer
