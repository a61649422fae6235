#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dynscene/labels.hpp"

namespace dynscene
{

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised when a depth value cannot be used for back-projection.
class InvalidDepth : public std::domain_error
{
public:
  explicit InvalidDepth(const std::string & what) : std::domain_error(what) {}
};

/// Rigid-body transform. Stored as rotation matrix + translation; frames
/// follow the T_cw (world -> camera) convention unless a name says otherwise.
struct PoseSE3
{
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 translate(double x, double y, double z);
  static PoseSE3 rot_x(double radians);
  static PoseSE3 rot_y(double radians);
  static PoseSE3 rot_z(double radians);
  /// Unit quaternion (any sign) plus translation.
  static PoseSE3 from_quaternion(const Eigen::Quaterniond & q, const Vec3 & t);

  Vec3 apply(const Vec3 & p) const { return rotation * p + translation; }
  Eigen::Quaterniond quaternion() const;
  Eigen::Matrix4d matrix() const;

  /// Orthonormal with det +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

/// a after b: (a * b)(p) = a(b(p)).
PoseSE3 compose(const PoseSE3 & a, const PoseSE3 & b);
PoseSE3 inverse(const PoseSE3 & p);

struct CameraIntrinsics
{
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  /// Raw depth units per meter (TUM: 5000).
  double depth_scale = 5000.0;

  static CameraIntrinsics tum_default() { return {}; }
  bool is_valid() const { return fx > 0.0 && fy > 0.0 && depth_scale > 0.0; }
};

struct Box2D
{
  Vec2 min_corner = Vec2::Zero();
  Vec2 max_corner = Vec2::Zero();

  /// Orders the corners componentwise.
  static Box2D from_corners(const Vec2 & a, const Vec2 & b);

  double width() const { return max_corner.x() - min_corner.x(); }
  double height() const { return max_corner.y() - min_corner.y(); }
  double area() const { return width() * height(); }
  Vec2 center() const { return 0.5 * (min_corner + max_corner); }
  bool contains(const Vec2 & p) const;
  Box2D inflated(double margin) const;
};

/// Axis-aligned world box held as two ordered corners (p1 <= p2).
struct Box3D
{
  Vec3 p1 = Vec3::Zero();
  Vec3 p2 = Vec3::Zero();
  ObjectClass label = ObjectClass::kNone;
  std::optional<int> track_id;

  static Box3D from_corners(
    const Vec3 & a, const Vec3 & b, ObjectClass label = ObjectClass::kNone,
    std::optional<int> track_id = std::nullopt);

  Vec3 extent() const { return p2 - p1; }
  Vec3 center() const { return 0.5 * (p1 + p2); }
  double volume() const;
  /// Inclusive bounds, optionally grown by `margin` on every side.
  bool contains(const Vec3 & p, double margin = 0.0) const;
  std::array<Vec3, 8> corners() const;
};

double iou_3d(const Box3D & a, const Box3D & b);

/// The three global coordinate planes. Axis order is fixed:
/// xOy -> (x, y), yOz -> (y, z), zOx -> (z, x).
enum class Plane { kXOY = 0, kYOZ = 1, kZOX = 2 };

inline constexpr std::array<Plane, 3> kAllPlanes{Plane::kXOY, Plane::kYOZ, Plane::kZOX};

/// World axis indices (first, second) spanned by the plane.
std::array<int, 2> plane_axes(Plane plane);
/// The world axis the plane drops.
int plane_normal_axis(Plane plane);
const char * plane_name(Plane plane);

Box3D transform_box(const PoseSE3 & pose, const Box3D & box);

/// Pinhole lift of pixel (u, v) with raw depth into the camera frame.
Vec3 backproject(double u, double v, double depth_raw, const CameraIntrinsics & k);
/// Same lift with depth already in meters.
Vec3 backproject_metric(double u, double v, double depth_m, const CameraIntrinsics & k);
/// Forward pinhole; requires p.z() > 0.
Vec2 project(const Vec3 & p_cam, const CameraIntrinsics & k);

struct Detection2D
{
  ObjectClass label = ObjectClass::kNone;
  double score = 1.0;
  Box2D box;                 // pixels
  double center_depth = 0.;  // meters
};

struct LiftOptions
{
  /// The lifted box extends from the center depth away from the camera by
  /// ratio * min(metric width, metric height). 0 gives a flat box.
  double depth_extent_ratio = 1.0;
};

/// Lifts a detection to a world-frame box using the depth at its center.
Box3D lift_detection(
  const Detection2D & d, const PoseSE3 & pose_cw, const CameraIntrinsics & k,
  const LiftOptions & opts = {});

Box2D project_to_plane(const Box3D & b, Plane plane);

/// Intersection over union; 0 when the union has no area.
double iou_2d(const Box2D & a, const Box2D & b);

}  // namespace dynscene
