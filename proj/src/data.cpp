#include "teformer/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "teformer/errors.hpp"
#include "teformer/log.hpp"

namespace fs = std::filesystem;

namespace teformer {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Texture class_texture(int label) { return static_cast<Texture>((label - 1) % 6); }

ShapeKind class_shape(int label) { return ((label - 1) / 2) % 2 == 0 ? ShapeKind::kRectangle : ShapeKind::kEllipse; }

std::vector<float> render_texture(Texture t, int h, int w, int phase_y, int phase_x, std::mt19937_64& rng) {
  std::vector<float> out(static_cast<std::size_t>(h) * w);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int yy = y + phase_y, xx = x + phase_x;
      int bit = 0;
      switch (t) {
        case Texture::kHorizontalStripes: bit = (yy / 2) % 2; break;
        case Texture::kVerticalStripes: bit = (xx / 2) % 2; break;
        case Texture::kCoarseChecker: bit = (yy / 8 + xx / 8) % 2; break;
        case Texture::kFineChecker: bit = (yy / 2 + xx / 2) % 2; break;
        case Texture::kNoise: bit = coin(rng); break;
        case Texture::kDiagonal: bit = ((yy + xx) / 2) % 2; break;
      }
      out[static_cast<std::size_t>(y) * w + x] = bit ? 1.0f : -1.0f;
    }
  return out;
}

namespace {

constexpr float kMean = 128.0f;
constexpr float kTextureAmplitude = 56.0f;
constexpr float kBackgroundSigma = 10.0f;
constexpr float kSensorSigma = 6.0f;

bool inside(ShapeKind kind, int y, int x, int cy, int cx, int hy, int hx) {
  if (kind == ShapeKind::kRectangle) return std::abs(y - cy) <= hy && std::abs(x - cx) <= hx;
  const double dy = (y - cy) / static_cast<double>(hy), dx = (x - cx) / static_cast<double>(hx);
  return dy * dy + dx * dx <= 1.0;
}

}  // namespace

Sample gen_synthetic(std::size_t index, int size, int num_classes, std::uint64_t seed) {
  if (size < 32 || size % 32) throw ConfigError("synthetic size must be a positive multiple of 32");
  if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  std::mt19937_64 rng(mix_seed(seed, index));
  Sample s;
  s.id = "syn_" + std::to_string(seed) + "_" + std::to_string(index);
  s.image = Image8{size, size, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3)};
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int attempt = 0;; ++attempt) {
    std::normal_distribution<float> bg(0.0f, kBackgroundSigma);
    std::vector<float> value(plane);
    for (auto& v : value) v = kMean + bg(rng);
    s.mask.assign(plane, 0);
    std::uniform_int_distribution<int> n_shapes(2, 5), label_d(1, num_classes - 1), phase(0, 7);
    std::uniform_int_distribution<int> half(size / 12, size / 4), pos(0, size - 1);
    const int shapes = n_shapes(rng);
    for (int k = 0; k < shapes; ++k) {
      const int label = label_d(rng);
      const int cy = pos(rng), cx = pos(rng), hy = half(rng), hx = half(rng);
      const auto tex = render_texture(class_texture(label), size, size, phase(rng), phase(rng), rng);
      const ShapeKind kind = class_shape(label);
      for (int y = std::max(0, cy - hy); y <= std::min(size - 1, cy + hy); ++y)
        for (int x = std::max(0, cx - hx); x <= std::min(size - 1, cx + hx); ++x)
          if (inside(kind, y, x, cy, cx, hy, hx)) {
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            s.mask[i] = label;
            value[i] = kMean + kTextureAmplitude * tex[i];
          }
    }
    std::set<int> present(s.mask.begin(), s.mask.end());
    if (present.size() < 2) {
      if (attempt > 100) throw DataError("synthetic generator failed to place two classes");
      continue;
    }
    std::normal_distribution<float> sensor(0.0f, kSensorSigma);
    for (std::size_t i = 0; i < plane; ++i)
      for (int c = 0; c < 3; ++c)
        s.image.pixels[i * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(value[i] + sensor(rng)), 0L, 255L));
    return s;
  }
}

Sample SyntheticDataset::get(std::size_t index) const {
  if (index >= count_) throw DataError("synthetic index out of range");
  return gen_synthetic(first_ + index, size_, num_classes_, seed_);
}

std::vector<int> tile_origins(int extent, int tile, int stride) {
  if (tile < 1 || stride < 1) throw ConfigError("tile and stride must be positive");
  if (extent < tile) throw DataError("raster extent " + std::to_string(extent) + " is smaller than tile " +
                                     std::to_string(tile));
  std::vector<int> out;
  for (int o = 0; o + tile <= extent; o += stride) out.push_back(o);
  if (out.back() + tile < extent) out.push_back(extent - tile);
  return out;
}

std::vector<int> decode_labels(const Image8& labels, const Palette& palette, std::size_t* unknown) {
  if (labels.channels != 3) throw DataError("label raster must be 3-channel RGB");
  std::map<Rgb, int> lut;
  for (std::size_t i = 0; i < palette.colors.size(); ++i) lut[palette.colors[i]] = static_cast<int>(i);
  std::vector<int> mask(static_cast<std::size_t>(labels.height) * labels.width);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Rgb c{labels.pixels[3 * i], labels.pixels[3 * i + 1], labels.pixels[3 * i + 2]};
    auto it = lut.find(c);
    if (it == lut.end()) {
      mask[i] = palette.ignore_index;
      ++bad;
    } else {
      mask[i] = it->second;
    }
  }
  if (unknown) *unknown = bad;
  return mask;
}

Image8 encode_labels(const std::vector<int>& mask, int height, int width, const Palette& palette) {
  if (mask.size() != static_cast<std::size_t>(height) * width) throw ShapeError("encode_labels: size mismatch");
  Image8 img{height, width, 3, std::vector<std::uint8_t>(mask.size() * 3, 0)};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int id = mask[i];
    if (id == palette.ignore_index) continue;
    if (id < 0 || id >= static_cast<int>(palette.colors.size()))
      throw DataError("encode_labels: class " + std::to_string(id) + " has no palette colour");
    for (int c = 0; c < 3; ++c) img.pixels[3 * i + c] = static_cast<std::uint8_t>(palette.colors[id][c]);
  }
  return img;
}

namespace {

std::map<std::string, fs::path> rasters_by_stem(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".tif" || ext == ".tiff") out[e.path().stem().string()] = e.path();
  }
  return out;
}

}  // namespace

TileDataset::TileDataset(const std::string& image_dir, const std::string& label_dir, int tile, int stride,
                         const Palette& palette, int num_classes, const std::vector<std::string>& ids)
    : tile_(tile), num_classes_(num_classes) {
  palette.validate();
  auto images = rasters_by_stem(image_dir);
  auto labels = rasters_by_stem(label_dir);
  std::set<std::string> wanted(ids.begin(), ids.end());
  for (const auto& [stem, path] : images) {
    if (!wanted.empty() && !wanted.count(stem)) continue;
    if (!labels.count(stem)) throw DataError("no label raster pairs with image " + path.string());
  }
  for (const auto& [stem, path] : labels)
    if ((wanted.empty() || wanted.count(stem)) && !images.count(stem))
      throw DataError("no image raster pairs with label " + path.string());
  for (const auto& id : wanted)
    if (!images.count(id)) throw DataError("manifest id has no raster: " + id);

  for (const auto& [stem, path] : images) {
    if (!wanted.empty() && !wanted.count(stem)) continue;
    Raster r;
    r.id = stem;
    r.image = read_image(path.string());
    if (r.image.channels != 3) throw DataError("image raster must be 3-channel: " + path.string());
    const Image8 lab = read_image(labels[stem].string());
    if (lab.height != r.image.height || lab.width != r.image.width)
      throw DataError("image and label rasters differ in size for " + stem);
    std::size_t bad = 0;
    const auto mask = decode_labels(lab, palette, &bad);
    if (2 * bad > mask.size()) throw DataError("label raster " + stem + " is mostly undecodable");
    if (bad) log::warn("labels " + stem + ": " + std::to_string(bad) + " pixels with unknown colours set to ignore");
    for (int id : mask)
      if (id != palette.ignore_index && id >= num_classes)
        throw DataError("label raster " + stem + " uses class " + std::to_string(id) + " beyond num_classes");
    unknown_ += bad;
    r.mask.assign(mask.begin(), mask.end());
    const std::size_t index = rasters_.size();
    for (int y : tile_origins(r.image.height, tile, stride))
      for (int x : tile_origins(r.image.width, tile, stride)) tiles_.push_back({index, y, x});
    rasters_.push_back(std::move(r));
  }
  if (rasters_.empty()) throw DataError("no rasters found in " + image_dir);
}

Sample TileDataset::get(std::size_t index) const {
  const TileRef& t = tiles_.at(index);
  const Raster& r = rasters_[t.raster];
  Sample s;
  s.id = r.id + "_" + std::to_string(t.y) + "_" + std::to_string(t.x);
  s.image = Image8{tile_, tile_, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(tile_) * tile_ * 3)};
  s.mask.resize(static_cast<std::size_t>(tile_) * tile_);
  for (int y = 0; y < tile_; ++y) {
    const std::size_t src = static_cast<std::size_t>(t.y + y) * r.image.width + t.x;
    std::copy_n(r.image.pixels.begin() + static_cast<std::ptrdiff_t>(src * 3), tile_ * 3,
                s.image.pixels.begin() + static_cast<std::ptrdiff_t>(y) * tile_ * 3);
    std::copy_n(r.mask.begin() + static_cast<std::ptrdiff_t>(src), tile_,
                s.mask.begin() + static_cast<std::ptrdiff_t>(y) * tile_);
  }
  return s;
}

std::vector<std::string> read_manifest(const std::string& path, const std::string& split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id, which;
    if (!(ss >> id >> which)) throw DataError(path + ":" + std::to_string(lineno) + ": expected '<id> <split>'");
    if (which == split) ids.push_back(id);
  }
  return ids;
}

Sample flip_horizontal(const Sample& s) {
  Sample o = s;
  const int h = s.height(), w = s.width(), ch = s.image.channels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * w + x, src = static_cast<std::size_t>(y) * w + (w - 1 - x);
      o.mask[dst] = s.mask[src];
      for (int c = 0; c < ch; ++c) o.image.pixels[dst * ch + c] = s.image.pixels[src * ch + c];
    }
  return o;
}

Sample flip_vertical(const Sample& s) {
  Sample o = s;
  const int h = s.height(), w = s.width(), ch = s.image.channels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * w + x, src = static_cast<std::size_t>(h - 1 - y) * w + x;
      o.mask[dst] = s.mask[src];
      for (int c = 0; c < ch; ++c) o.image.pixels[dst * ch + c] = s.image.pixels[src * ch + c];
    }
  return o;
}

Sample rotate90(const Sample& s) {
  // Counter-clockwise: out(y, x) = in(x, w' - 1 - y) with the axes swapped.
  Sample o = s;
  const int h = s.height(), w = s.width(), ch = s.image.channels;
  o.image.height = w;
  o.image.width = h;
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < h; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * h + x;
      const std::size_t src = static_cast<std::size_t>(x) * w + (w - 1 - y);
      o.mask[dst] = s.mask[src];
      for (int c = 0; c < ch; ++c) o.image.pixels[dst * ch + c] = s.image.pixels[src * ch + c];
    }
  return o;
}

Sample augment(const Sample& s, std::uint64_t seed) {
  const std::uint64_t choice = mix_seed(seed, 0xA06) % 8;
  Sample o = (choice & 4) ? flip_horizontal(s) : s;
  for (std::uint64_t k = 0; k < (choice & 3); ++k) o = rotate90(o);
  return o;
}

Var<float> image_to_tensor(const Image8& image) {
  if (image.channels != 3) throw ShapeError("model input must be 3-channel");
  const int h = image.height, w = image.width;
  std::vector<float> v(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < h * w; ++i)
      v[static_cast<std::size_t>(c) * h * w + i] = (image.pixels[static_cast<std::size_t>(i) * 3 + c] / 255.0f - 0.5f) / 0.25f;
  return Var<float>(Shape{1, 3, h, w}, std::move(v));
}

std::pair<Var<float>, std::vector<int>> make_batch(const std::vector<Sample>& samples, int crop,
                                                   std::uint64_t crop_seed) {
  if (samples.empty()) throw DataError("empty batch");
  int h = samples[0].height(), w = samples[0].width();
  for (const auto& s : samples) {
    h = std::min(h, s.height());
    w = std::min(w, s.width());
  }
  if (crop > 0) h = std::min(h, crop), w = std::min(w, crop);
  const int n = static_cast<int>(samples.size());
  std::vector<float> img(static_cast<std::size_t>(n) * 3 * h * w);
  std::vector<int> targets(static_cast<std::size_t>(n) * h * w);
  for (int b = 0; b < n; ++b) {
    const Sample& s = samples[b];
    std::mt19937_64 rng(mix_seed(crop_seed, static_cast<std::uint64_t>(b)));
    const int oy = s.height() > h ? std::uniform_int_distribution<int>(0, s.height() - h)(rng) : 0;
    const int ox = s.width() > w ? std::uniform_int_distribution<int>(0, s.width() - w)(rng) : 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t src = static_cast<std::size_t>(oy + y) * s.width() + ox + x;
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        targets[static_cast<std::size_t>(b) * h * w + pix] = s.mask[src];
        for (int c = 0; c < 3; ++c)
          img[(static_cast<std::size_t>(b) * 3 + c) * h * w + pix] = (s.image.pixels[src * 3 + c] / 255.0f - 0.5f) / 0.25f;
      }
  }
  return {Var<float>(Shape{n, 3, h, w}, std::move(img)), std::move(targets)};
}

DataSplits open_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  const int k = cfg.model.num_classes;
  if (d.source == "synthetic") {
    const std::size_t total = static_cast<std::size_t>(d.count);
    const std::size_t nval = static_cast<std::size_t>(std::lround(total * d.val_fraction));
    const std::size_t ntrain = total - nval;
    return {std::make_shared<SyntheticDataset>(ntrain, d.size, k, d.seed, 0),
            std::make_shared<SyntheticDataset>(nval == 0 ? 1 : nval, d.size, k, d.seed, ntrain)};
  }
  if (!d.manifest.empty()) {
    for (const char* split : {"train", "val"})
      if (read_manifest(d.manifest, split).empty())
        throw DataError("manifest " + d.manifest + " lists no ids for split " + split);
    return {std::make_shared<TileDataset>(d.image_dir, d.label_dir, d.tile, d.tile_stride, d.palette, k,
                                          read_manifest(d.manifest, "train")),
            std::make_shared<TileDataset>(d.image_dir, d.label_dir, d.tile, d.tile_stride, d.palette, k,
                                          read_manifest(d.manifest, "val"))};
  }
  log::warn("data.manifest not set; validating on the training tiles");
  auto all = std::make_shared<TileDataset>(d.image_dir, d.label_dir, d.tile, d.tile_stride, d.palette, k);
  return {all, all};
}

}  // namespace teformer
