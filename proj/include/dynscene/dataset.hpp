#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynscene/geometry.hpp"

namespace dynscene
{

/// Malformed input file; the message names the file and line.
class ParseError : public std::runtime_error
{
public:
  ParseError(const std::filesystem::path & file, int line, const std::string & msg);
  int line() const { return line_; }

private:
  int line_;
};

inline constexpr double kDefaultAssociationTolerance = 0.02;

struct TimedPose
{
  double timestamp = 0.0;
  PoseSE3 pose_cw;
};

/// Poses in strictly increasing time order, stored world -> camera.
class Trajectory
{
public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TimedPose> poses);

  /// Appends; throws std::invalid_argument unless t is strictly increasing.
  void push_back(double t, const PoseSE3 & pose_cw);

  /// Pose with the nearest timestamp within tolerance.
  std::optional<PoseSE3> pose_at(double t, double tolerance = kDefaultAssociationTolerance) const;
  std::optional<std::size_t> nearest_index(double t, double tolerance) const;

  const std::vector<TimedPose> & poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }

private:
  std::vector<TimedPose> poses_;
};

struct FrameRecord
{
  double timestamp = 0.0;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::optional<PoseSE3> pose_cw;
  bool is_keyframe = false;
  std::vector<Detection2D> detections;
};

struct SequenceLoad
{
  std::vector<FrameRecord> frames;
  /// rgb entries without a depth image within tolerance.
  std::size_t unmatched_frames = 0;
  /// frames without a ground-truth pose within tolerance (0 when no groundtruth.txt).
  std::size_t frames_without_groundtruth = 0;
  bool has_groundtruth = false;
};

/// Reads rgb.txt / depth.txt / optional groundtruth.txt of a TUM RGB-D
/// directory. Ground truth (camera -> world) is inverted to pose_cw here.
SequenceLoad load_tum_sequence(
  const std::filesystem::path & dir, double tolerance = kDefaultAssociationTolerance);

/// TUM 8-column file "t tx ty tz qx qy qz qw" (camera -> world) as T_cw poses.
Trajectory load_trajectory(const std::filesystem::path & path);
/// Writes the TUM 8-column format (camera -> world), 9 decimals.
void write_trajectory(const Trajectory & traj, const std::filesystem::path & path);

using DetectionMap = std::map<double, std::vector<Detection2D>>;

/// "timestamp label score xmin ymin xmax ymax center_depth" per line, '#'
/// comments. Lines sharing a timestamp form one keyframe.
DetectionMap load_detections(const std::filesystem::path & path);
void write_detections(const DetectionMap & detections, const std::filesystem::path & path);

/// Detections whose timestamp is nearest to t within tolerance, or nullptr.
const std::vector<Detection2D> * detections_at(
  const DetectionMap & detections, double t, double tolerance = kDefaultAssociationTolerance);

/// Root mean square translational error between camera centers after
/// nearest-timestamp association, optionally after the least-squares rigid
/// alignment of the estimate onto the ground truth (no scale). Throws
/// std::invalid_argument with fewer than two associations.
double ate_rmse(
  const Trajectory & estimated, const Trajectory & ground_truth, bool align,
  double tolerance = kDefaultAssociationTolerance);

/// Closed-form rigid alignment: returns T minimizing sum |T src_i - dst_i|^2.
PoseSE3 align_rigid(const std::vector<Vec3> & src, const std::vector<Vec3> & dst);

}  // namespace dynscene
