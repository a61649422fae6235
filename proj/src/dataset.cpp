#include "dynscene/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

namespace dynscene
{

namespace
{

std::vector<std::string> split_ws(const std::string & line)
{
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    out.push_back(tok);
  }
  return out;
}

bool is_blank_or_comment(const std::string & line)
{
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

std::optional<double> parse_double(const std::string & tok)
{
  if (tok.empty()) {
    return std::nullopt;
  }
  char * end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

double require_double(
  const std::string & tok, const std::filesystem::path & file, int line, const char * field)
{
  auto v = parse_double(tok);
  if (!v) {
    throw ParseError(file, line, std::string("invalid ") + field + " '" + tok + "'");
  }
  return *v;
}

struct IndexEntry
{
  double timestamp;
  std::filesystem::path file;
};

std::vector<IndexEntry> load_index(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing index file " + path.string());
  }
  std::vector<IndexEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) {
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() < 2) {
      throw ParseError(path, line_no, "expected 'timestamp filename'");
    }
    const double t = require_double(tok[0], path, line_no, "timestamp");
    if (!out.empty() && t <= out.back().timestamp) {
      throw ParseError(path, line_no, "timestamps must be strictly increasing");
    }
    out.push_back({t, path.parent_path() / tok[1]});
  }
  return out;
}

template <typename T, typename Key>
std::optional<std::size_t> nearest_sorted(
  const std::vector<T> & items, double t, double tolerance, Key key)
{
  if (items.empty()) {
    return std::nullopt;
  }
  const auto it = std::lower_bound(
    items.begin(), items.end(), t, [&](const T & a, double v) { return key(a) < v; });
  std::optional<std::size_t> best;
  double best_dist = tolerance;
  auto consider = [&](std::size_t idx) {
    const double d = std::abs(key(items[idx]) - t);
    if (d <= best_dist && (!best || d < best_dist)) {
      best = idx;
      best_dist = d;
    }
  };
  const auto idx = static_cast<std::size_t>(it - items.begin());
  if (idx > 0) {
    consider(idx - 1);
  }
  if (idx < items.size()) {
    consider(idx);
  }
  return best;
}

Trajectory parse_trajectory_file(const std::filesystem::path & path, bool required)
{
  std::ifstream in(path);
  if (!in) {
    if (required) {
      throw std::runtime_error("cannot open trajectory " + path.string());
    }
    return {};
  }
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) {
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() != 8) {
      throw ParseError(path, line_no, "expected 8 columns 'timestamp tx ty tz qx qy qz qw'");
    }
    std::array<double, 8> v{};
    static constexpr std::array<const char *, 8> kFields{
      "timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"};
    for (int i = 0; i < 8; ++i) {
      v[i] = require_double(tok[i], path, line_no, kFields[i]);
    }
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) {
      throw ParseError(path, line_no, "zero quaternion");
    }
    const PoseSE3 pose_wc = PoseSE3::from_quaternion(q, Vec3(v[1], v[2], v[3]));
    if (!traj.empty() && v[0] <= traj.poses().back().timestamp) {
      throw ParseError(path, line_no, "timestamps must be strictly increasing");
    }
    traj.push_back(v[0], inverse(pose_wc));
  }
  return traj;
}

}  // namespace

ParseError::ParseError(const std::filesystem::path & file, int line, const std::string & msg)
: std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + msg), line_(line)
{
}

Trajectory::Trajectory(std::vector<TimedPose> poses)
{
  for (const auto & p : poses) {
    push_back(p.timestamp, p.pose_cw);
  }
}

void Trajectory::push_back(double t, const PoseSE3 & pose_cw)
{
  if (!poses_.empty() && !(t > poses_.back().timestamp)) {
    throw std::invalid_argument("trajectory timestamps must be strictly increasing");
  }
  poses_.push_back({t, pose_cw});
}

std::optional<std::size_t> Trajectory::nearest_index(double t, double tolerance) const
{
  return nearest_sorted(poses_, t, tolerance, [](const TimedPose & p) { return p.timestamp; });
}

std::optional<PoseSE3> Trajectory::pose_at(double t, double tolerance) const
{
  if (auto idx = nearest_index(t, tolerance)) {
    return poses_[*idx].pose_cw;
  }
  return std::nullopt;
}

SequenceLoad load_tum_sequence(const std::filesystem::path & dir, double tolerance)
{
  const auto rgb = load_index(dir / "rgb.txt");
  const auto depth = load_index(dir / "depth.txt");
  const auto gt_path = dir / "groundtruth.txt";

  SequenceLoad out;
  Trajectory gt;
  if (std::filesystem::exists(gt_path)) {
    gt = parse_trajectory_file(gt_path, true);
    out.has_groundtruth = true;
  }

  for (const IndexEntry & r : rgb) {
    const auto d = nearest_sorted(
      depth, r.timestamp, tolerance, [](const IndexEntry & e) { return e.timestamp; });
    if (!d) {
      ++out.unmatched_frames;
      continue;
    }
    FrameRecord f;
    f.timestamp = r.timestamp;
    f.rgb_path = r.file;
    f.depth_path = depth[*d].file;
    if (out.has_groundtruth) {
      f.pose_cw = gt.pose_at(r.timestamp, tolerance);
      if (!f.pose_cw) {
        ++out.frames_without_groundtruth;
      }
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

Trajectory load_trajectory(const std::filesystem::path & path)
{
  return parse_trajectory_file(path, true);
}

void write_trajectory(const Trajectory & traj, const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write trajectory " + path.string());
  }
  char buf[256];
  for (const TimedPose & p : traj.poses()) {
    const PoseSE3 wc = inverse(p.pose_cw);
    const Eigen::Quaterniond q = wc.quaternion();
    std::snprintf(
      buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", p.timestamp,
      wc.translation.x(), wc.translation.y(), wc.translation.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
  out.flush();
  if (!out) {
    throw std::runtime_error("failed writing trajectory " + path.string());
  }
}

DetectionMap load_detections(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open detections " + path.string());
  }
  DetectionMap out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) {
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() != 8) {
      throw ParseError(
        path, line_no,
        "expected 8 fields 'timestamp label score xmin ymin xmax ymax center_depth', got " +
          std::to_string(tok.size()));
    }
    const double t = require_double(tok[0], path, line_no, "timestamp");
    const auto label = parse_class(tok[1]);
    if (!label) {
      throw ParseError(
        path, line_no, "unknown label '" + tok[1] + "'; accepted: " + accepted_class_names());
    }
    Detection2D d;
    d.label = *label;
    d.score = require_double(tok[2], path, line_no, "score");
    if (d.score < 0.0 || d.score > 1.0) {
      throw ParseError(path, line_no, "score must lie in [0, 1]");
    }
    const Vec2 a(
      require_double(tok[3], path, line_no, "xmin"), require_double(tok[4], path, line_no, "ymin"));
    const Vec2 b(
      require_double(tok[5], path, line_no, "xmax"), require_double(tok[6], path, line_no, "ymax"));
    d.box = Box2D::from_corners(a, b);
    d.center_depth = require_double(tok[7], path, line_no, "center_depth");
    out[t].push_back(d);
  }
  return out;
}

void write_detections(const DetectionMap & detections, const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write detections " + path.string());
  }
  out << "# timestamp label score xmin ymin xmax ymax center_depth\n";
  char buf[256];
  for (const auto & [t, dets] : detections) {
    for (const Detection2D & d : dets) {
      std::snprintf(
        buf, sizeof(buf), "%.6f %s %.4f %.6f %.6f %.6f %.6f %.6f\n", t,
        std::string(class_name(d.label)).c_str(), d.score, d.box.min_corner.x(),
        d.box.min_corner.y(), d.box.max_corner.x(), d.box.max_corner.y(), d.center_depth);
      out << buf;
    }
  }
  if (!out) {
    throw std::runtime_error("failed writing detections " + path.string());
  }
}

const std::vector<Detection2D> * detections_at(
  const DetectionMap & detections, double t, double tolerance)
{
  const std::vector<Detection2D> * best = nullptr;
  double best_dist = tolerance;
  auto it = detections.lower_bound(t);
  auto consider = [&](DetectionMap::const_iterator i) {
    const double d = std::abs(i->first - t);
    if (d <= best_dist && (!best || d < best_dist)) {
      best = &i->second;
      best_dist = d;
    }
  };
  if (it != detections.begin()) {
    consider(std::prev(it));
  }
  if (it != detections.end()) {
    consider(it);
  }
  return best;
}

PoseSE3 align_rigid(const std::vector<Vec3> & src, const std::vector<Vec3> & dst)
{
  if (src.size() != dst.size() || src.empty()) {
    throw std::invalid_argument("align_rigid: point sets must be non-empty and equal length");
  }
  const double n = static_cast<double>(src.size());
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    s(2, 2) = -1.0;
  }
  PoseSE3 out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.translation = mu_d - out.rotation * mu_s;
  return out;
}

double ate_rmse(
  const Trajectory & estimated, const Trajectory & ground_truth, bool align, double tolerance)
{
  std::vector<Vec3> est;
  std::vector<Vec3> gt;
  for (const TimedPose & p : estimated.poses()) {
    if (auto g = ground_truth.pose_at(p.timestamp, tolerance)) {
      est.push_back(inverse(p.pose_cw).translation);
      gt.push_back(inverse(*g).translation);
    }
  }
  if (est.size() < 2) {
    throw std::invalid_argument("ate_rmse: fewer than two associated poses");
  }
  if (align) {
    const PoseSE3 t = align_rigid(est, gt);
    for (Vec3 & p : est) {
      p = t.apply(p);
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    sum += (est[i] - gt[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(est.size()));
}

}  // namespace dynscene
