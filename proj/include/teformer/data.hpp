#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "teformer/config.hpp"
#include "teformer/image_io.hpp"
#include "teformer/tensor.hpp"

namespace teformer {

struct Sample {
  Image8 image;           // RGB
  std::vector<int> mask;  // height × width, row-major
  std::string id;

  int height() const { return image.height; }
  int width() const { return image.width; }
};

/// Random-access sample source; `get` is deterministic and thread-safe.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual Sample get(std::size_t index) const = 0;
  virtual int num_classes() const = 0;
};

// ---- synthetic texture scenes ----------------------------------------------

enum class Texture { kHorizontalStripes, kVerticalStripes, kCoarseChecker, kFineChecker, kNoise, kDiagonal };
enum class ShapeKind { kRectangle, kEllipse };

/// Texture and outline shared by class `label` ≥ 1. Consecutive class pairs
/// share an outline and differ only in texture.
Texture class_texture(int label);
ShapeKind class_shape(int label);

/// Zero-mean intensity pattern in [-1, 1], row-major h × w. `phase_y`,
/// `phase_x` shift the pattern; noise draws from `rng`.
std::vector<float> render_texture(Texture t, int h, int w, int phase_y, int phase_x, std::mt19937_64& rng);

/// Scene `index` of the (seed, size, num_classes) family: overlapping shapes
/// over a background of class 0. Every mask holds at least two classes.
Sample gen_synthetic(std::size_t index, int size, int num_classes, std::uint64_t seed);

class SyntheticDataset : public Dataset {
 public:
  SyntheticDataset(std::size_t count, int size, int num_classes, std::uint64_t seed, std::size_t first = 0)
      : count_(count), first_(first), size_(size), num_classes_(num_classes), seed_(seed) {}
  std::size_t size() const override { return count_; }
  Sample get(std::size_t index) const override;
  int num_classes() const override { return num_classes_; }

 private:
  std::size_t count_, first_;
  int size_, num_classes_;
  std::uint64_t seed_;
};

// ---- palette-coded rasters -------------------------------------------------

/// Window origins along one axis: regular steps of `stride`, plus a final
/// window flush with the far edge when the steps do not land there.
std::vector<int> tile_origins(int extent, int tile, int stride);

/// Colour label raster to class ids; unknown colours become the ignore
/// index and are counted in `unknown`.
std::vector<int> decode_labels(const Image8& labels, const Palette& palette, std::size_t* unknown = nullptr);
/// Class ids to colours; ignore pixels are painted black.
Image8 encode_labels(const std::vector<int>& mask, int height, int width, const Palette& palette);

struct TileRef {
  std::size_t raster;
  int y, x;
};

/// Sliding-window tiles over paired image/label rasters matched by file
/// stem. Rasters are decoded once at construction.
class TileDataset : public Dataset {
 public:
  /// `ids` (optional) restricts the rasters to the listed stems.
  TileDataset(const std::string& image_dir, const std::string& label_dir, int tile, int stride,
              const Palette& palette, int num_classes, const std::vector<std::string>& ids = {});

  std::size_t size() const override { return tiles_.size(); }
  Sample get(std::size_t index) const override;
  int num_classes() const override { return num_classes_; }

  const std::vector<TileRef>& tiles() const { return tiles_; }
  std::size_t unknown_pixels() const { return unknown_; }

 private:
  struct Raster {
    std::string id;
    Image8 image;
    std::vector<std::int16_t> mask;
  };
  int tile_;
  int num_classes_;
  std::vector<Raster> rasters_;
  std::vector<TileRef> tiles_;
  std::size_t unknown_ = 0;
};

/// Ids listed for `split` in a manifest of "<id> <split>" lines.
std::vector<std::string> read_manifest(const std::string& path, const std::string& split);

/// Flips and quarter turns, applied identically to image and mask. The
/// choice depends only on `seed`.
Sample augment(const Sample& s, std::uint64_t seed);
Sample flip_horizontal(const Sample& s);
Sample flip_vertical(const Sample& s);
Sample rotate90(const Sample& s);

/// Stacks samples into a normalised (n, 3, h, w) tensor and flat targets.
/// A random crop of `crop` pixels is taken when the sample is larger.
std::pair<Var<float>, std::vector<int>> make_batch(const std::vector<Sample>& samples, int crop = 0,
                                                   std::uint64_t crop_seed = 0);
Var<float> image_to_tensor(const Image8& image);

/// Train/val views of the configured data source.
struct DataSplits {
  std::shared_ptr<Dataset> train;
  std::shared_ptr<Dataset> val;
};
DataSplits open_data(const RunConfig& cfg);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace teformer
