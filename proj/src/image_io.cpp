#include "teformer/image_io.hpp"

#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "teformer/errors.hpp"

namespace teformer {

Image8 read_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot read image: " + path);
  if (m.depth() != CV_8U) throw DataError("image is not 8-bit: " + path);
  if (m.channels() != 1 && m.channels() != 3) m = cv::imread(path, cv::IMREAD_COLOR);
  Image8 img;
  img.height = m.rows;
  img.width = m.cols;
  img.channels = m.channels() == 1 ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      if (img.channels == 1) {
        img.at(y, x, 0) = row[x];
      } else {
        // OpenCV stores BGR.
        img.at(y, x, 0) = row[3 * x + 2];
        img.at(y, x, 1) = row[3 * x + 1];
        img.at(y, x, 2) = row[3 * x + 0];
      }
    }
  }
  return img;
}

void write_png(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("write_png: unsupported channel count");
  cv::Mat m(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      if (image.channels == 1) {
        row[x] = image.at(y, x, 0);
      } else {
        row[3 * x + 2] = image.at(y, x, 0);
        row[3 * x + 1] = image.at(y, x, 1);
        row[3 * x + 0] = image.at(y, x, 2);
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path, m);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw DataError("cannot write image: " + path);
}

void write_npy(const std::string& path, const std::vector<float>& values, const std::vector<std::size_t>& shape) {
  std::string dims;
  for (std::size_t d : shape) dims += std::to_string(d) + ",";
  if (shape.size() > 1) dims.pop_back();
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  // Magic (6) + version (2) + length (2) + header + newline, padded to 64.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write array: " + path);
  out.write("\x93NUMPY\x01\x00", 8);
  const std::uint16_t len = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(len & 0xff));
  out.put(static_cast<char>(len >> 8));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

}  // namespace teformer
