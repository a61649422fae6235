#include "dynscene/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynscene
{

PoseSE3 PoseSE3::translate(double x, double y, double z)
{
  PoseSE3 p;
  p.translation = Vec3(x, y, z);
  return p;
}

PoseSE3 PoseSE3::rot_x(double radians)
{
  PoseSE3 p;
  p.rotation = Eigen::AngleAxisd(radians, Vec3::UnitX()).toRotationMatrix();
  return p;
}

PoseSE3 PoseSE3::rot_y(double radians)
{
  PoseSE3 p;
  p.rotation = Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix();
  return p;
}

PoseSE3 PoseSE3::rot_z(double radians)
{
  PoseSE3 p;
  p.rotation = Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
  return p;
}

PoseSE3 PoseSE3::from_quaternion(const Eigen::Quaterniond & q, const Vec3 & t)
{
  PoseSE3 p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = t;
  return p;
}

Eigen::Quaterniond PoseSE3::quaternion() const
{
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) {
    q.coeffs() *= -1.0;
  }
  return q;
}

Eigen::Matrix4d PoseSE3::matrix() const
{
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool PoseSE3::is_valid(double tol) const
{
  if (!rotation.allFinite() || !translation.allFinite()) {
    return false;
  }
  const Mat3 should_be_identity = rotation.transpose() * rotation;
  return (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

PoseSE3 compose(const PoseSE3 & a, const PoseSE3 & b)
{
  PoseSE3 out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

PoseSE3 inverse(const PoseSE3 & p)
{
  PoseSE3 out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

Box2D Box2D::from_corners(const Vec2 & a, const Vec2 & b)
{
  return {a.cwiseMin(b), a.cwiseMax(b)};
}

bool Box2D::contains(const Vec2 & p) const
{
  return p.x() >= min_corner.x() && p.x() <= max_corner.x() && p.y() >= min_corner.y() &&
         p.y() <= max_corner.y();
}

Box2D Box2D::inflated(double margin) const
{
  const Vec2 m(margin, margin);
  return {min_corner - m, max_corner + m};
}

Box3D Box3D::from_corners(
  const Vec3 & a, const Vec3 & b, ObjectClass label, std::optional<int> track_id)
{
  Box3D box;
  box.p1 = a.cwiseMin(b);
  box.p2 = a.cwiseMax(b);
  box.label = label;
  box.track_id = track_id;
  return box;
}

double Box3D::volume() const
{
  const Vec3 e = extent();
  return e.x() * e.y() * e.z();
}

bool Box3D::contains(const Vec3 & p, double margin) const
{
  for (int i = 0; i < 3; ++i) {
    if (p[i] < p1[i] - margin || p[i] > p2[i] + margin) {
      return false;
    }
  }
  return true;
}

std::array<Vec3, 8> Box3D::corners() const
{
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    out[i] = Vec3((i & 1) ? p2.x() : p1.x(), (i & 2) ? p2.y() : p1.y(), (i & 4) ? p2.z() : p1.z());
  }
  return out;
}

double iou_3d(const Box3D & a, const Box3D & b)
{
  const Vec3 lo = a.p1.cwiseMax(b.p1);
  const Vec3 hi = a.p2.cwiseMin(b.p2);
  const Vec3 overlap = (hi - lo).cwiseMax(0.0);
  const double inter = overlap.x() * overlap.y() * overlap.z();
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::array<int, 2> plane_axes(Plane plane)
{
  switch (plane) {
    case Plane::kXOY:
      return {0, 1};
    case Plane::kYOZ:
      return {1, 2};
    case Plane::kZOX:
      return {2, 0};
  }
  return {0, 1};
}

int plane_normal_axis(Plane plane)
{
  switch (plane) {
    case Plane::kXOY:
      return 2;
    case Plane::kYOZ:
      return 0;
    case Plane::kZOX:
      return 1;
  }
  return 2;
}

const char * plane_name(Plane plane)
{
  switch (plane) {
    case Plane::kXOY:
      return "xOy";
    case Plane::kYOZ:
      return "yOz";
    case Plane::kZOX:
      return "zOx";
  }
  return "?";
}

Box3D transform_box(const PoseSE3 & pose, const Box3D & box)
{
  // Axis-aligned hull of the transformed corners. For rotations that only
  // permute axes this is exactly the re-normalized corner pair.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3 & c : box.corners()) {
    const Vec3 q = pose.apply(c);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  Box3D out = box;
  out.p1 = lo;
  out.p2 = hi;
  return out;
}

Vec3 backproject_metric(double u, double v, double depth_m, const CameraIntrinsics & k)
{
  if (!(depth_m > 0.0) || !std::isfinite(depth_m)) {
    throw InvalidDepth("non-positive depth " + std::to_string(depth_m));
  }
  return {(u - k.cx) * depth_m / k.fx, (v - k.cy) * depth_m / k.fy, depth_m};
}

Vec3 backproject(double u, double v, double depth_raw, const CameraIntrinsics & k)
{
  if (!(depth_raw > 0.0)) {
    throw InvalidDepth("non-positive raw depth " + std::to_string(depth_raw));
  }
  return backproject_metric(u, v, depth_raw / k.depth_scale, k);
}

Vec2 project(const Vec3 & p_cam, const CameraIntrinsics & k)
{
  return {k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy};
}

Box3D lift_detection(
  const Detection2D & d, const PoseSE3 & pose_cw, const CameraIntrinsics & k,
  const LiftOptions & opts)
{
  const double depth = d.center_depth;
  const Vec3 a = backproject_metric(d.box.min_corner.x(), d.box.min_corner.y(), depth, k);
  const Vec3 b = backproject_metric(d.box.max_corner.x(), d.box.max_corner.y(), depth, k);
  const double w = std::abs(b.x() - a.x());
  const double h = std::abs(b.y() - a.y());
  const double extent = opts.depth_extent_ratio * std::min(w, h);
  const Box3D camera_box = Box3D::from_corners(a, Vec3(b.x(), b.y(), depth + extent), d.label);
  return transform_box(inverse(pose_cw), camera_box);
}

Box2D project_to_plane(const Box3D & b, Plane plane)
{
  const auto [i, j] = plane_axes(plane);
  return {Vec2(b.p1[i], b.p1[j]), Vec2(b.p2[i], b.p2[j])};
}

double iou_2d(const Box2D & a, const Box2D & b)
{
  const double iw = std::min(a.max_corner.x(), b.max_corner.x()) -
                    std::max(a.min_corner.x(), b.min_corner.x());
  const double ih = std::min(a.max_corner.y(), b.max_corner.y()) -
                    std::max(a.min_corner.y(), b.min_corner.y());
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) {
    return 0.0;
  }
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace dynscene
