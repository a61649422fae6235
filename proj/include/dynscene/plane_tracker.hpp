#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynscene/geometry.hpp"

namespace dynscene
{

/// Kalman update refused because the observed box has no area.
class RejectedUpdate : public std::invalid_argument
{
public:
  explicit RejectedUpdate(const std::string & what) : std::invalid_argument(what) {}
};

struct KalmanNoise
{
  /// Scales diag(1, 1, 1, 1, 0.01, 0.01, 1e-4) per second of prediction.
  double process = 1e-4;
  /// Scales diag(1, 1, 10, 10) on [ca, cb, s, r]. Also scales the initial
  /// covariance diag(10, 10, 10, 10, v, v, v) with v = initial_velocity.
  double measurement = 1e-4;
  double initial_velocity = 1e4;
};

/// Constant-velocity box state on one coordinate plane:
/// [ca, cb, s, r, v_ca, v_cb, v_s] with center, area and aspect ratio
/// (r carries no velocity).
struct KalmanBoxState
{
  using Vector7 = Eigen::Matrix<double, 7, 1>;
  using Matrix7 = Eigen::Matrix<double, 7, 7>;

  Vector7 mean = Vector7::Zero();
  Matrix7 covariance = Matrix7::Identity();

  Box2D box() const;
};

/// Measurement [ca, cb, s, r] of a box. Throws RejectedUpdate if degenerate.
Eigen::Vector4d box_to_measurement(const Box2D & box);
Box2D measurement_to_box(double ca, double cb, double s, double r);

KalmanBoxState kalman_init(const Box2D & observed, const KalmanNoise & noise = {});
KalmanBoxState kalman_predict(const KalmanBoxState & st, double dt, const KalmanNoise & noise = {});
KalmanBoxState kalman_update(
  const KalmanBoxState & st, const Box2D & observed, const KalmanNoise & noise = {});

struct TrackerConfig
{
  double iou_gate = 0.3;
  int max_age = 3;
  int min_hits = 1;
  KalmanNoise noise;

  void validate() const;
};

struct PlaneTrack
{
  int track_id = 0;
  KalmanBoxState kalman;
  int hits = 0;
  int age_since_update = 0;
  ObjectClass label = ObjectClass::kNone;
};

struct PlaneDetection
{
  Box2D box;
  ObjectClass label = ObjectClass::kNone;
};

/// Box reported by a tracker for one track.
struct PlaneBox
{
  Box2D box;
  int track_id = 0;
  ObjectClass label = ObjectClass::kNone;
  /// Index of the detection this track matched (or was spawned from)
  /// during the step that produced this box.
  std::optional<std::size_t> detection;
};

/// SORT-style tracker on one coordinate plane. Single writer.
class PlaneTracker
{
public:
  explicit PlaneTracker(TrackerConfig cfg = {});

  /// Predicts every track by dt, then associates detections when present
  /// (nullopt means "no observation": tracks coast without aging).
  /// Returns the boxes of tracks with at least min_hits matches.
  std::vector<PlaneBox> step(std::optional<std::span<const PlaneDetection>> detections, double dt);

  /// Constant-velocity extrapolation by dt without touching tracker state.
  std::vector<PlaneBox> extrapolate(double dt) const;

  const std::vector<PlaneTrack> & tracks() const { return tracks_; }
  const TrackerConfig & config() const { return cfg_; }
  /// Detections skipped this lifetime because their box had no area.
  std::size_t rejected_detections() const { return rejected_; }

private:
  TrackerConfig cfg_;
  std::vector<PlaneTrack> tracks_;
  int next_id_ = 0;
  std::size_t rejected_ = 0;
};

}  // namespace dynscene
