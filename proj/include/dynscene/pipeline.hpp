#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dynscene/dataset.hpp"
#include "dynscene/fusion.hpp"
#include "dynscene/semantic_octree.hpp"

namespace dynscene
{

struct RunConfig
{
  std::filesystem::path sequence_dir;
  /// Detection file; without it no frame has detections.
  std::optional<std::filesystem::path> detections_path;
  /// Poses to use; defaults to the sequence's groundtruth.txt.
  std::optional<std::filesystem::path> trajectory_path;
  std::set<ObjectClass> movable_classes = default_movable_classes();
  /// Unset: keyframes are the frames with detection entries. Set: every
  /// N-th frame (by index) is a keyframe.
  std::optional<int> keyframe_every;
  TrackerConfig tracker;
  MapConfig map;
  LiftOptions lift;
  int stride = 2;
  double margin = 0.0;  // culling margin, pixels
  double box_margin = 0.01;  // map box membership slack, meters
  int keypoint_grid = 16;
  bool deterministic = false;
  bool camera_boxes = false;
  double association_tolerance = kDefaultAssociationTolerance;

  std::optional<std::filesystem::path> out_map;
  std::optional<std::filesystem::path> out_boxes;
  std::optional<std::filesystem::path> out_culled;
  std::optional<std::filesystem::path> out_metrics;
  std::optional<std::filesystem::path> export_ply;

  void validate() const;
};

struct StageTiming
{
  std::size_t count = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;

  static StageTiming from_samples(std::vector<double> samples_ms);
};

struct RunReport
{
  std::size_t frames = 0;
  std::size_t keyframes = 0;
  std::size_t frames_without_pose = 0;
  std::size_t unmatched_frames = 0;
  std::size_t detections = 0;
  std::size_t skipped_detections = 0;
  std::size_t dropped_boxes = 0;
  std::size_t predicted_boxes = 0;
  std::size_t max_active_tracks = 0;
  std::size_t keypoints = 0;
  std::size_t keypoints_removed = 0;
  InsertionStats insertion;
  std::size_t map_leaves = 0;
  std::size_t map_occupied = 0;
  StageTiming prediction;
  StageTiming keyframe;
  StageTiming mapping;

  /// key=value sections; [timing] comes last.
  std::string to_metrics() const;
};

struct RunOutput
{
  RunReport report;
  SemanticOctree map;
};

/// Keypoint stand-ins: a regular pixel grid of the given spacing.
std::vector<Vec2> grid_keypoints(int width, int height, int spacing);

/// Reads "fx fy cx cy depth_scale width height" from dir/camera.txt if
/// present, else the TUM defaults at 640x480.
struct CameraSetup
{
  CameraIntrinsics intrinsics;
  int width = 640;
  int height = 480;
};
CameraSetup load_camera(const std::filesystem::path & sequence_dir);

/// Processes every frame in timestamp order: keyframes feed the fusion
/// engine and the map, other frames get predicted boxes; all frames with a
/// pose get keypoint culling. Errors are rethrown tagged with the frame time.
RunOutput run_pipeline(const RunConfig & cfg);

}  // namespace dynscene
