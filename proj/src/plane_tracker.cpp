#include "dynscene/plane_tracker.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "dynscene/hungarian.hpp"

namespace dynscene
{

namespace
{

constexpr double kMinArea = 1e-9;

using Matrix47 = Eigen::Matrix<double, 4, 7>;

Matrix47 measurement_matrix()
{
  Matrix47 h = Matrix47::Zero();
  h.leftCols<4>().setIdentity();
  return h;
}

Eigen::Matrix4d measurement_noise(const KalmanNoise & noise)
{
  return noise.measurement * Eigen::Vector4d(1.0, 1.0, 10.0, 10.0).asDiagonal();
}

void symmetrize(KalmanBoxState::Matrix7 & p)
{
  p = 0.5 * (p + p.transpose()).eval();
}

}  // namespace

Box2D KalmanBoxState::box() const
{
  return measurement_to_box(mean[0], mean[1], mean[2], mean[3]);
}

Eigen::Vector4d box_to_measurement(const Box2D & box)
{
  const double w = box.width();
  const double h = box.height();
  if (!(w > 0.0) || !(h > 0.0)) {
    throw RejectedUpdate("degenerate box observation");
  }
  const Vec2 c = box.center();
  return {c.x(), c.y(), w * h, w / h};
}

Box2D measurement_to_box(double ca, double cb, double s, double r)
{
  s = std::max(s, kMinArea);
  r = std::max(r, kMinArea);
  const double w = std::sqrt(s * r);
  const double h = s / w;
  return {Vec2(ca - 0.5 * w, cb - 0.5 * h), Vec2(ca + 0.5 * w, cb + 0.5 * h)};
}

KalmanBoxState kalman_init(const Box2D & observed, const KalmanNoise & noise)
{
  KalmanBoxState st;
  st.mean.head<4>() = box_to_measurement(observed);
  KalmanBoxState::Vector7 diag;
  const double v = noise.initial_velocity;
  diag << 10.0, 10.0, 10.0, 10.0, v, v, v;
  st.covariance = (noise.measurement * diag).asDiagonal();
  return st;
}

KalmanBoxState kalman_predict(const KalmanBoxState & st, double dt, const KalmanNoise & noise)
{
  if (dt < 0.0) {
    throw std::invalid_argument("kalman_predict: negative dt");
  }
  KalmanBoxState::Matrix7 f = KalmanBoxState::Matrix7::Identity();
  f(0, 4) = dt;
  f(1, 5) = dt;
  f(2, 6) = dt;
  KalmanBoxState::Vector7 q;
  q << 1.0, 1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-4;

  KalmanBoxState out;
  out.mean = f * st.mean;
  out.mean[2] = std::max(out.mean[2], kMinArea);
  out.covariance = f * st.covariance * f.transpose();
  out.covariance.diagonal() += noise.process * dt * q;
  symmetrize(out.covariance);
  return out;
}

KalmanBoxState kalman_update(
  const KalmanBoxState & st, const Box2D & observed, const KalmanNoise & noise)
{
  const Eigen::Vector4d z = box_to_measurement(observed);
  const Matrix47 h = measurement_matrix();
  const Eigen::Matrix4d s = h * st.covariance * h.transpose() + measurement_noise(noise);
  const Eigen::Matrix<double, 7, 4> gain =
    (s.ldlt().solve(h * st.covariance)).transpose();

  KalmanBoxState out;
  out.mean = st.mean + gain * (z - h * st.mean);
  // Joseph form keeps the covariance symmetric PSD.
  const KalmanBoxState::Matrix7 i_kh = KalmanBoxState::Matrix7::Identity() - gain * h;
  out.covariance = i_kh * st.covariance * i_kh.transpose() +
                   gain * measurement_noise(noise) * gain.transpose();
  symmetrize(out.covariance);
  return out;
}

void TrackerConfig::validate() const
{
  if (!(iou_gate >= 0.0 && iou_gate <= 1.0)) {
    throw std::invalid_argument("iou_gate must lie in [0, 1]");
  }
  if (max_age < 1) {
    throw std::invalid_argument("max_age must be >= 1");
  }
  if (min_hits < 1) {
    throw std::invalid_argument("min_hits must be >= 1");
  }
  if (!(noise.process >= 0.0) || !(noise.measurement > 0.0) || !(noise.initial_velocity > 0.0)) {
    throw std::invalid_argument("Kalman noise scales must be positive");
  }
}

PlaneTracker::PlaneTracker(TrackerConfig cfg) : cfg_(std::move(cfg))
{
  cfg_.validate();
}

std::vector<PlaneBox> PlaneTracker::step(
  std::optional<std::span<const PlaneDetection>> detections, double dt)
{
  if (dt < 0.0) {
    throw std::invalid_argument("tracker step: negative dt");
  }
  for (auto & t : tracks_) {
    t.kalman = kalman_predict(t.kalman, dt, cfg_.noise);
  }

  std::vector<std::optional<std::size_t>> matched_detection(tracks_.size());
  if (detections) {
    const auto & dets = *detections;
    std::vector<char> det_used(dets.size(), 0);

    if (!tracks_.empty() && !dets.empty()) {
      Eigen::MatrixXd cost(tracks_.size(), dets.size());
      for (std::size_t i = 0; i < tracks_.size(); ++i) {
        const Box2D predicted = tracks_[i].kalman.box();
        for (std::size_t j = 0; j < dets.size(); ++j) {
          cost(i, j) = 1.0 - iou_2d(predicted, dets[j].box);
        }
      }
      for (const auto & [row, col] : hungarian_assign(cost)) {
        const double iou = 1.0 - cost(row, col);
        if (iou < cfg_.iou_gate || !(dets[col].box.area() > 0.0)) {
          continue;
        }
        auto & track = tracks_[row];
        track.kalman = kalman_update(track.kalman, dets[col].box, cfg_.noise);
        track.hits += 1;
        track.age_since_update = 0;
        track.label = dets[col].label;
        matched_detection[row] = col;
        det_used[col] = 1;
      }
    }

    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      if (!matched_detection[i]) {
        tracks_[i].age_since_update += 1;
      }
    }

    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (det_used[j]) {
        continue;
      }
      if (!(dets[j].box.area() > 0.0)) {
        ++rejected_;
        continue;
      }
      PlaneTrack t;
      t.track_id = next_id_++;
      t.kalman = kalman_init(dets[j].box, cfg_.noise);
      t.hits = 1;
      t.label = dets[j].label;
      tracks_.push_back(t);
      matched_detection.emplace_back(j);
    }
  }

  std::vector<PlaneTrack> alive;
  std::vector<PlaneBox> emitted;
  alive.reserve(tracks_.size());
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const auto & t = tracks_[i];
    if (t.age_since_update > cfg_.max_age) {
      continue;
    }
    if (t.hits >= cfg_.min_hits) {
      emitted.push_back({t.kalman.box(), t.track_id, t.label, matched_detection[i]});
    }
    alive.push_back(t);
  }
  tracks_ = std::move(alive);
  return emitted;
}

std::vector<PlaneBox> PlaneTracker::extrapolate(double dt) const
{
  if (dt < 0.0) {
    throw std::invalid_argument("extrapolate: negative dt");
  }
  std::vector<PlaneBox> out;
  for (const auto & t : tracks_) {
    if (t.hits < cfg_.min_hits) {
      continue;
    }
    out.push_back({kalman_predict(t.kalman, dt, cfg_.noise).box(), t.track_id, t.label, {}});
  }
  return out;
}

}  // namespace dynscene
