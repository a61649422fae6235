#include "dynscene/fusion.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

namespace dynscene
{

namespace
{

constexpr double kNearPlane = 1e-3;

std::optional<std::pair<double, double>> missing_range(
  const FusionInput & in, Plane plane, std::span<const Box3D> latest_boxes)
{
  const int axis = plane_normal_axis(plane);
  if (in.anchor) {
    return std::pair{in.anchor->p1[axis], in.anchor->p2[axis]};
  }
  double best = 0.0;
  const Box3D * best_box = nullptr;
  for (const Box3D & latest : latest_boxes) {
    const double iou = iou_2d(in.box, project_to_plane(latest, plane));
    if (iou > best) {
      best = iou;
      best_box = &latest;
    }
  }
  if (!best_box) {
    return std::nullopt;
  }
  return std::pair{best_box->p1[axis], best_box->p2[axis]};
}

Box3D lift_plane_box(const Box2D & box, Plane plane, int axis_value_axis, double lo, double hi)
{
  const auto [i, j] = plane_axes(plane);
  Box3D out;
  out.p1[i] = box.min_corner.x();
  out.p2[i] = box.max_corner.x();
  out.p1[j] = box.min_corner.y();
  out.p2[j] = box.max_corner.y();
  out.p1[axis_value_axis] = lo;
  out.p2[axis_value_axis] = hi;
  return out;
}

}  // namespace

Plane select_primary_plane(const std::array<std::vector<FusionInput>, 3> & per_plane)
{
  Plane best = Plane::kXOY;
  for (Plane p : kAllPlanes) {
    if (per_plane[static_cast<int>(p)].size() > per_plane[static_cast<int>(best)].size()) {
      best = p;
    }
  }
  return best;
}

FusionOutput fuse_planes(
  const std::array<std::vector<FusionInput>, 3> & per_plane, std::span<const Box3D> latest_boxes)
{
  FusionOutput out;
  out.primary = select_primary_plane(per_plane);
  const int c_axis = plane_normal_axis(out.primary);

  std::vector<Box3D> secondaries;
  for (Plane p : kAllPlanes) {
    if (p == out.primary) {
      continue;
    }
    for (const FusionInput & in : per_plane[static_cast<int>(p)]) {
      const auto range = missing_range(in, p, latest_boxes);
      if (!range) {
        continue;
      }
      secondaries.push_back(
        lift_plane_box(in.box, p, plane_normal_axis(p), range->first, range->second));
    }
  }

  for (const FusionInput & in : per_plane[static_cast<int>(out.primary)]) {
    Box3D fused = lift_plane_box(in.box, out.primary, c_axis, 0.0, 0.0);
    fused.label = in.label;
    fused.track_id = in.track_id;

    double best = 0.0;
    const Box3D * best_box = nullptr;
    for (const Box3D & s : secondaries) {
      const double iou = iou_2d(in.box, project_to_plane(s, out.primary));
      if (iou > best) {
        best = iou;
        best_box = &s;
      }
    }
    if (best_box) {
      fused.p1[c_axis] = best_box->p1[c_axis];
      fused.p2[c_axis] = best_box->p2[c_axis];
    } else if (in.anchor) {
      fused.p1[c_axis] = in.anchor->p1[c_axis];
      fused.p2[c_axis] = in.anchor->p2[c_axis];
    } else {
      ++out.dropped;
      continue;
    }
    out.boxes.push_back(fused);
  }
  return out;
}

FusionEngine::FusionEngine(FusionConfig cfg)
: cfg_(std::move(cfg)),
  trackers_{PlaneTracker(cfg_.tracker), PlaneTracker(cfg_.tracker), PlaneTracker(cfg_.tracker)}
{
}

std::size_t FusionEngine::active_tracks() const
{
  std::size_t n = 0;
  for (const auto & t : trackers_) {
    n = std::max(n, t.tracks().size());
  }
  return n;
}

PredictionResult FusionEngine::ingest_keyframe(
  std::span<const Detection2D> detections, const PoseSE3 & pose_cw, const CameraIntrinsics & k,
  double t)
{
  const double dt = last_keyframe_time_ ? t - *last_keyframe_time_ : 0.0;
  if (dt < 0.0) {
    throw std::invalid_argument("ingest_keyframe: timestamp earlier than the last keyframe");
  }

  std::vector<Box3D> lifted;
  std::size_t skipped = 0;
  for (const Detection2D & d : detections) {
    if (!cfg_.movable_classes.contains(d.label)) {
      continue;
    }
    try {
      lifted.push_back(lift_detection(d, pose_cw, k, cfg_.lift));
    } catch (const InvalidDepth &) {
      ++skipped;
    }
  }

  std::array<std::vector<PlaneBox>, 3> emitted;
  for (Plane p : kAllPlanes) {
    const int idx = static_cast<int>(p);
    std::vector<PlaneDetection> dets;
    dets.reserve(lifted.size());
    for (const Box3D & b : lifted) {
      dets.push_back({project_to_plane(b, p), b.label});
    }
    emitted[idx] = trackers_[idx].step(std::span<const PlaneDetection>(dets), dt);

    auto & anchors = anchors_[idx];
    for (const PlaneBox & pb : emitted[idx]) {
      if (pb.detection) {
        anchors[pb.track_id] = lifted[*pb.detection];
      }
    }
    std::erase_if(anchors, [&](const auto & kv) {
      const auto & tracks = trackers_[idx].tracks();
      return std::none_of(tracks.begin(), tracks.end(), [&](const PlaneTrack & tr) {
        return tr.track_id == kv.first;
      });
    });
  }

  latest_lifted_boxes_ = std::move(lifted);
  latest_keyframe_pose_ = pose_cw;
  last_keyframe_time_ = t;

  PredictionResult result = finish(emitted, pose_cw, t);
  result.skipped_detections = skipped;
  return result;
}

PredictionResult FusionEngine::predict_frame(const PoseSE3 & pose_cw, double t) const
{
  if (!last_keyframe_time_) {
    PredictionResult empty;
    empty.timestamp = t;
    return empty;
  }
  const double dt = t - *last_keyframe_time_;
  if (dt < 0.0) {
    throw std::invalid_argument("predict_frame: timestamp earlier than the last keyframe");
  }
  std::array<std::vector<PlaneBox>, 3> per_plane;
  for (Plane p : kAllPlanes) {
    per_plane[static_cast<int>(p)] = trackers_[static_cast<int>(p)].extrapolate(dt);
  }
  return finish(per_plane, pose_cw, t);
}

PredictionResult FusionEngine::finish(
  const std::array<std::vector<PlaneBox>, 3> & per_plane, const PoseSE3 & pose_cw, double t) const
{
  std::array<std::vector<FusionInput>, 3> inputs;
  for (Plane p : kAllPlanes) {
    const int idx = static_cast<int>(p);
    for (const PlaneBox & pb : per_plane[idx]) {
      FusionInput in{pb.box, pb.track_id, pb.label, std::nullopt};
      if (auto it = anchors_[idx].find(pb.track_id); it != anchors_[idx].end()) {
        in.anchor = it->second;
      }
      inputs[idx].push_back(std::move(in));
    }
  }
  FusionOutput fused = fuse_planes(inputs, latest_lifted_boxes_);

  PredictionResult result;
  result.timestamp = t;
  result.dropped_boxes = fused.dropped;
  result.boxes_world = std::move(fused.boxes);
  result.boxes_camera.reserve(result.boxes_world.size());
  for (const Box3D & b : result.boxes_world) {
    result.boxes_camera.push_back(transform_box(pose_cw, b));
  }
  assert(result.boxes_camera.size() == result.boxes_world.size());
  return result;
}

std::optional<Box2D> project_box_to_image(
  const Box3D & box_world, const PoseSE3 & pose_cw, const CameraIntrinsics & k)
{
  std::array<Vec3, 8> cam;
  const auto corners = box_world.corners();
  for (int i = 0; i < 8; ++i) {
    cam[i] = pose_cw.apply(corners[i]);
  }

  std::vector<Vec3> visible;
  visible.reserve(20);
  for (const Vec3 & c : cam) {
    if (c.z() >= kNearPlane) {
      visible.push_back(c);
    }
  }
  if (visible.empty()) {
    return std::nullopt;
  }
  if (visible.size() < 8) {
    // Clip the 12 edges against the near plane.
    for (int i = 0; i < 8; ++i) {
      for (int bit = 0; bit < 3; ++bit) {
        if (i & (1 << bit)) {
          continue;
        }
        const Vec3 & a = cam[i];
        const Vec3 & b = cam[i | (1 << bit)];
        if ((a.z() < kNearPlane) != (b.z() < kNearPlane)) {
          const double s = (kNearPlane - a.z()) / (b.z() - a.z());
          visible.push_back(a + s * (b - a));
        }
      }
    }
  }

  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const Vec3 & c : visible) {
    const Vec2 px = project(c, k);
    lo = lo.cwiseMin(px);
    hi = hi.cwiseMax(px);
  }
  return Box2D{lo, hi};
}

CullResult cull_keypoints(
  std::span<const Vec2> points, const PredictionResult & pred, const PoseSE3 & pose_cw,
  const CameraIntrinsics & k, double margin)
{
  std::vector<Box2D> regions;
  regions.reserve(pred.boxes_world.size());
  for (const Box3D & b : pred.boxes_world) {
    if (auto px = project_box_to_image(b, pose_cw, k)) {
      regions.push_back(px->inflated(margin));
    }
  }

  CullResult out;
  out.kept.reserve(points.size());
  for (const Vec2 & p : points) {
    const bool inside = std::any_of(
      regions.begin(), regions.end(), [&](const Box2D & r) { return r.contains(p); });
    (inside ? out.removed : out.kept).push_back(p);
  }
  return out;
}

}  // namespace dynscene
