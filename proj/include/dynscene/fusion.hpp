#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "dynscene/geometry.hpp"
#include "dynscene/plane_tracker.hpp"

namespace dynscene
{

/// One tracked box on a plane, plus the world box of the detection its
/// track last matched (used to recover the coordinate the plane drops).
struct FusionInput
{
  Box2D box;
  int track_id = 0;
  ObjectClass label = ObjectClass::kNone;
  std::optional<Box3D> anchor;
};

struct FusionOutput
{
  std::vector<Box3D> boxes;
  Plane primary = Plane::kXOY;
  /// Primary boxes that found neither a secondary match nor an anchor.
  std::size_t dropped = 0;
};

/// Plane with the most boxes; ties go to xOy, then yOz, then zOx.
Plane select_primary_plane(const std::array<std::vector<FusionInput>, 3> & per_plane);

/// Rebuilds 3D boxes from the three plane projections. The primary plane
/// supplies (a, b); each secondary box is lifted using its anchor (or the
/// best-overlapping latest box) for the coordinate it lacks; the primary
/// box copies c from the secondary box with the largest IOU in aOb.
FusionOutput fuse_planes(
  const std::array<std::vector<FusionInput>, 3> & per_plane, std::span<const Box3D> latest_boxes);

struct PredictionResult
{
  double timestamp = 0.0;
  std::vector<Box3D> boxes_world;
  /// boxes_camera[i] == transform_box(pose_cw, boxes_world[i]).
  std::vector<Box3D> boxes_camera;
  std::size_t skipped_detections = 0;
  std::size_t dropped_boxes = 0;
};

struct FusionConfig
{
  TrackerConfig tracker;
  std::set<ObjectClass> movable_classes = default_movable_classes();
  LiftOptions lift;
};

/// Tracks movable objects across keyframes on the three global planes and
/// predicts their world boxes at arbitrary later timestamps.
class FusionEngine
{
public:
  explicit FusionEngine(FusionConfig cfg = {});

  /// Lifts the movable detections, steps every plane tracker and fuses.
  /// Detections with invalid depth are counted in skipped_detections.
  PredictionResult ingest_keyframe(
    std::span<const Detection2D> detections, const PoseSE3 & pose_cw, const CameraIntrinsics & k,
    double t);

  /// Constant-velocity prediction from the last keyframe. Does not mutate
  /// the engine; empty before the first keyframe.
  PredictionResult predict_frame(const PoseSE3 & pose_cw, double t) const;

  bool has_keyframe() const { return last_keyframe_time_.has_value(); }
  std::optional<double> last_keyframe_time() const { return last_keyframe_time_; }
  const PoseSE3 & latest_keyframe_pose() const { return latest_keyframe_pose_; }
  const std::vector<Box3D> & latest_lifted_boxes() const { return latest_lifted_boxes_; }
  const PlaneTracker & tracker(Plane plane) const { return trackers_[static_cast<int>(plane)]; }
  const FusionConfig & config() const { return cfg_; }
  std::size_t active_tracks() const;

private:
  PredictionResult finish(
    const std::array<std::vector<PlaneBox>, 3> & per_plane, const PoseSE3 & pose_cw,
    double t) const;

  FusionConfig cfg_;
  std::array<PlaneTracker, 3> trackers_;
  std::array<std::map<int, Box3D>, 3> anchors_;
  PoseSE3 latest_keyframe_pose_;
  std::vector<Box3D> latest_lifted_boxes_;
  std::optional<double> last_keyframe_time_;
};

struct CullResult
{
  std::vector<Vec2> kept;
  std::vector<Vec2> removed;
};

/// Pixel box covering the projection of a world box seen from pose_cw,
/// clipped to the part in front of the camera. nullopt when fully behind.
std::optional<Box2D> project_box_to_image(
  const Box3D & box_world, const PoseSE3 & pose_cw, const CameraIntrinsics & k);

/// Removes keypoints that fall inside any predicted box's pixel hull
/// (inflated by margin pixels).
CullResult cull_keypoints(
  std::span<const Vec2> points, const PredictionResult & pred, const PoseSE3 & pose_cw,
  const CameraIntrinsics & k, double margin);

}  // namespace dynscene
