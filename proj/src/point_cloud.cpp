#include "dynscene/point_cloud.hpp"

#include <stdexcept>

namespace dynscene
{

std::vector<LabeledPoint> cloud_from_depth(
  const RgbImage & rgb, const DepthImage & depth, const PoseSE3 & pose_cw,
  const CameraIntrinsics & k, int stride)
{
  if (rgb.width != depth.width || rgb.height != depth.height) {
    throw std::invalid_argument("cloud_from_depth: color and depth resolution differ");
  }
  if (stride < 1) {
    throw std::invalid_argument("cloud_from_depth: stride must be >= 1");
  }
  const PoseSE3 pose_wc = inverse(pose_cw);
  std::vector<LabeledPoint> cloud;
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const std::uint16_t raw = depth.at(u, v);
      if (raw == 0) {
        continue;
      }
      LabeledPoint pt;
      pt.position = pose_wc.apply(backproject(u, v, raw, k));
      pt.color = rgb.at(u, v);
      cloud.push_back(pt);
    }
  }
  return cloud;
}

}  // namespace dynscene
