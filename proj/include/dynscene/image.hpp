#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "dynscene/labels.hpp"

namespace dynscene
{

/// Row-major image.
template <typename Pixel>
struct Image
{
  int width = 0;
  int height = 0;
  std::vector<Pixel> data;

  Image() = default;
  Image(int w, int h, Pixel fill = Pixel{}) : width(w), height(h), data(std::size_t(w) * h, fill)
  {
    if (w < 0 || h < 0) {
      throw std::invalid_argument("negative image size");
    }
  }

  Pixel & at(int u, int v) { return data[std::size_t(v) * width + u]; }
  const Pixel & at(int u, int v) const { return data[std::size_t(v) * width + u]; }
  bool empty() const { return data.empty(); }
};

using DepthImage = Image<std::uint16_t>;
using RgbImage = Image<Rgb>;

/// 16-bit single-channel PNG.
DepthImage read_depth_png(const std::filesystem::path & path);
void write_depth_png(const std::filesystem::path & path, const DepthImage & img);
/// 8-bit color PNG (any channel count is converted to RGB).
RgbImage read_rgb_png(const std::filesystem::path & path);
void write_rgb_png(const std::filesystem::path & path, const RgbImage & img);

}  // namespace dynscene
