#include "dynscene/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace dynscene
{

DepthImage read_depth_png(const std::filesystem::path & path)
{
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
  if (m.empty()) {
    throw std::runtime_error("cannot read depth image " + path.string());
  }
  if (m.type() != CV_16UC1) {
    throw std::runtime_error("depth image is not 16-bit single channel: " + path.string());
  }
  DepthImage img(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const auto * row = m.ptr<std::uint16_t>(v);
    std::copy(row, row + m.cols, img.data.begin() + std::ptrdiff_t(v) * m.cols);
  }
  return img;
}

void write_depth_png(const std::filesystem::path & path, const DepthImage & img)
{
  cv::Mat m(img.height, img.width, CV_16UC1, const_cast<std::uint16_t *>(img.data.data()));
  if (!cv::imwrite(path.string(), m)) {
    throw std::runtime_error("cannot write depth image " + path.string());
  }
}

RgbImage read_rgb_png(const std::filesystem::path & path)
{
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) {
    throw std::runtime_error("cannot read color image " + path.string());
  }
  RgbImage img(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const auto * row = m.ptr<cv::Vec3b>(v);
    for (int u = 0; u < m.cols; ++u) {
      img.at(u, v) = {row[u][2], row[u][1], row[u][0]};
    }
  }
  return img;
}

void write_rgb_png(const std::filesystem::path & path, const RgbImage & img)
{
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int v = 0; v < img.height; ++v) {
    auto * row = m.ptr<cv::Vec3b>(v);
    for (int u = 0; u < img.width; ++u) {
      const Rgb & c = img.at(u, v);
      row[u] = cv::Vec3b(c.b, c.g, c.r);
    }
  }
  if (!cv::imwrite(path.string(), m)) {
    throw std::runtime_error("cannot write color image " + path.string());
  }
}

}  // namespace dynscene
