#include "teformer/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "teformer/image_io.hpp"
#include "teformer/log.hpp"

namespace teformer {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kLeft = 70, kRight = 20, kTop = 20, kBottom = 40;

// 3×5 glyphs, one row per byte (low 3 bits, MSB left).
struct Glyph {
  char c;
  unsigned char rows[5];
};
constexpr Glyph kFont[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}},
    {'e', {0, 7, 7, 4, 7}},
};

class Canvas {
 public:
  Canvas() : img_{kHeight, kWidth, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(kWidth) * kHeight * 3, 255)} {}

  void dot(int x, int y, int r, int g, int b) {
    if (x < 0 || y < 0 || x >= kWidth || y >= kHeight) return;
    img_.at(y, x, 0) = static_cast<std::uint8_t>(r);
    img_.at(y, x, 1) = static_cast<std::uint8_t>(g);
    img_.at(y, x, 2) = static_cast<std::uint8_t>(b);
  }

  void line(int x0, int y0, int x1, int y1, int r, int g, int b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      dot(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  void rect(int x0, int y0, int x1, int y1, int r, int g, int b) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) dot(x, y, r, g, b);
  }

  // Scale-2 glyphs, right-aligned at `right`.
  void text(int right, int top, const std::string& s) {
    int x = right - static_cast<int>(s.size()) * 8;
    for (char c : s) {
      for (const auto& g : kFont)
        if (g.c == c)
          for (int row = 0; row < 5; ++row)
            for (int col = 0; col < 3; ++col)
              if (g.rows[row] & (4 >> col)) rect(x + 2 * col, top + 2 * row, x + 2 * col + 1, top + 2 * row + 1, 0, 0, 0);
      x += 8;
    }
  }

  void save(const std::string& path) const { write_png(path, img_); }

 private:
  Image8 img_;
};

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::abs(v) >= 1e4 || (v != 0 && std::abs(v) < 1e-2) ? "%.1e" : "%.3g", v);
  return buf;
}

void axes(Canvas& c, double lo, double hi) {
  c.line(kLeft, kTop, kLeft, kHeight - kBottom, 0, 0, 0);
  c.line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, 0, 0, 0);
  for (int i = 0; i <= 4; ++i) {
    const int y = kHeight - kBottom - i * (kHeight - kTop - kBottom) / 4;
    c.line(kLeft - 4, y, kLeft, y, 0, 0, 0);
    c.text(kLeft - 8, y - 5, label(lo + (hi - lo) * i / 4));
  }
}

std::pair<double, double> range_of(const std::vector<double>& v, bool from_zero) {
  double lo = from_zero ? 0.0 : *std::min_element(v.begin(), v.end());
  double hi = *std::max_element(v.begin(), v.end());
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

}  // namespace

void plot_series(const std::string& path, const std::vector<double>& values, const std::string& title) {
  if (values.empty()) return;
  try {
    Canvas c;
    const auto [lo, hi] = range_of(values, false);
    axes(c, lo, hi);
    const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](std::size_t i) { return kLeft + static_cast<int>(values.size() > 1 ? i * pw / (values.size() - 1) : 0); };
    auto py = [&](double v) { return kHeight - kBottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * ph)); };
    for (std::size_t i = 1; i < values.size(); ++i) c.line(px(i - 1), py(values[i - 1]), px(i), py(values[i]), 30, 90, 200);
    c.text(kWidth - kRight, kHeight - kBottom + 12, std::to_string(values.size()));
    c.save(path);
  } catch (const std::exception& e) {
    log::warn("plot '" + title + "' not written: " + e.what());
  }
}

void plot_bars(const std::string& path, const std::vector<double>& values, const std::string& title) {
  if (values.empty()) return;
  try {
    Canvas c;
    const auto [lo, hi] = range_of(values, true);
    axes(c, lo, hi);
    const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const int slot = pw / static_cast<int>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const int x0 = kLeft + static_cast<int>(i) * slot + slot / 6, x1 = x0 + slot * 2 / 3;
      const int top = kHeight - kBottom - static_cast<int>(std::lround((values[i] - lo) / (hi - lo) * ph));
      c.rect(x0, top, x1, kHeight - kBottom - 1, 200, 110, 40);
      c.text((x0 + x1) / 2 + 4, kHeight - kBottom + 12, std::to_string(i + 1));
    }
    c.save(path);
  } catch (const std::exception& e) {
    log::warn("plot '" + title + "' not written: " + e.what());
  }
}

}  // namespace teformer
