#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dynscene/dataset.hpp"
#include "dynscene/geometry.hpp"
#include "dynscene/image.hpp"
#include "dynscene/semantic_octree.hpp"

namespace dynscene
{

struct SceneSlab
{
  Box3D box;
  Rgb color;
};

struct Waypoint
{
  double t = 0.0;  // seconds from scene start
  Vec3 position = Vec3::Zero();
};

/// Rigid box moving along a piecewise-linear path of its center.
struct MovingObject
{
  Vec3 size = Vec3::Ones();
  ObjectClass label = ObjectClass::kPerson;
  Rgb color{200, 40, 40};
  std::vector<Waypoint> path;

  Box3D box_at(double t) const;
};

/// Camera pose key: world position and roll/pitch/yaw (degrees) of the
/// camera -> world rotation Ry(yaw) * Rx(pitch) * Rz(roll).
struct CameraWaypoint
{
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 roll_pitch_yaw_deg = Vec3::Zero();
};

enum class DetectorKind { kPerfect, kJittered };

struct DetectorModel
{
  DetectorKind kind = DetectorKind::kPerfect;
  double pixel_sigma = 0.0;
  double drop_probability = 0.0;
  std::uint32_t seed = 7;
};

struct SyntheticScene
{
  CameraIntrinsics camera;
  int width = 640;
  int height = 480;
  double fps = 30.0;
  int frame_count = 180;
  double start_time = 1000.0;
  int keyframe_every = 5;
  std::vector<SceneSlab> statics;
  std::vector<MovingObject> movables;
  std::vector<CameraWaypoint> camera_path;
  DetectorModel detector;

  /// Absolute timestamp of frame i.
  double frame_time(int i) const { return start_time + i / fps; }
  double duration() const { return (frame_count - 1) / fps; }
  /// Scene-relative time t (seconds from start).
  PoseSE3 camera_pose_cw(double t) const;

  /// Throws std::invalid_argument if a path does not cover [0, duration].
  void validate() const;

  /// One person-sized box moving at 0.1 m/s in front of a back wall and a
  /// floor, seen by a slowly translating and yawing camera.
  static SyntheticScene one_object();
};

/// Entry distance along the ray origin + s * dir, if the ray hits the box
/// in front of the origin. Origins inside the box do not hit.
std::optional<double> intersect_ray_box(const Vec3 & origin, const Vec3 & dir, const Box3D & box);

inline constexpr std::int16_t kNoSurface = -1;

/// Surface index convention: statics first, then movables.
struct RenderedFrame
{
  DepthImage depth;
  RgbImage rgb;
  Image<std::int16_t> surface;
};

/// Per-pixel nearest hit at scene time t. Depth is quantized to the camera
/// depth_scale; hits beyond the 16-bit range read as 0.
RenderedFrame render_frame(const SyntheticScene & scene, double t);

/// Detector output for one rendered frame (movable objects only).
std::vector<Detection2D> detect_objects(
  const SyntheticScene & scene, double t, const RenderedFrame & frame, std::mt19937 & rng);

struct GenerationSummary
{
  int frames = 0;
  std::size_t detections = 0;
};

/// Writes a TUM-layout dataset: rgb/, depth/, rgb.txt, depth.txt,
/// groundtruth.txt, camera.txt, detections.txt (keyframes only),
/// gt_boxes.txt ("timestamp object_id label x1 y1 z1 x2 y2 z2") and scene.json.
GenerationSummary generate_synthetic(const SyntheticScene & scene, const std::filesystem::path & out_dir);

void save_scene(const SyntheticScene & scene, const std::filesystem::path & path);
SyntheticScene load_scene(const std::filesystem::path & path);

struct MapQuality
{
  std::size_t occupied_voxels = 0;
  std::size_t occupied_in_swept_region = 0;
  double movable_region_fraction = 0.0;
  std::size_t visible_static_voxels = 0;
  std::size_t visible_static_occupied = 0;
  double static_surface_fraction = 0.0;
  std::size_t labeled_voxels = 0;
  std::size_t labeled_correct = 0;
  double label_accuracy = 0.0;
};

struct EvalOptions
{
  int stride = 2;
  /// Poses the map was built with; defaults to the scene's exact poses.
  std::optional<Trajectory> poses;
};

/// Scores a map against the scene: occupied voxels inside the movable
/// objects' swept region, coverage of static surfaces seen at keyframes,
/// and label accuracy.
MapQuality eval_map(const SemanticOctree & map, const SyntheticScene & scene, const EvalOptions & opts = {});

}  // namespace dynscene
