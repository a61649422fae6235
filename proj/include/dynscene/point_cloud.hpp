#pragma once

#include <vector>

#include "dynscene/geometry.hpp"
#include "dynscene/image.hpp"
#include "dynscene/semantic_octree.hpp"

namespace dynscene
{

/// Back-projects every stride-th pixel with non-zero depth into the world
/// frame (via inverse(pose_cw)), carrying its color. Points come out
/// unlabeled and static. Throws std::invalid_argument when the images
/// differ in size or stride < 1.
std::vector<LabeledPoint> cloud_from_depth(
  const RgbImage & rgb, const DepthImage & depth, const PoseSE3 & pose_cw,
  const CameraIntrinsics & k, int stride = 2);

}  // namespace dynscene
