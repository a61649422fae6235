#include "dynscene/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include <json.hpp>

#include "dynscene/fusion.hpp"

namespace dynscene
{

namespace
{

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

template <typename Key, typename Value, typename Lerp>
Value interpolate_path(const std::vector<Key> & path, double t, Lerp lerp)
{
  if (path.empty()) {
    throw std::invalid_argument("empty path");
  }
  if (t <= path.front().t) {
    return lerp(path.front(), path.front(), 0.0);
  }
  if (t >= path.back().t) {
    return lerp(path.back(), path.back(), 0.0);
  }
  const auto it = std::upper_bound(
    path.begin(), path.end(), t, [](double v, const Key & k) { return v < k.t; });
  const Key & b = *it;
  const Key & a = *std::prev(it);
  const double span = b.t - a.t;
  return lerp(a, b, span > 0.0 ? (t - a.t) / span : 0.0);
}

Mat3 rotation_from_rpy_deg(const Vec3 & rpy)
{
  return (Eigen::AngleAxisd(rpy.z() * kDeg, Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.y() * kDeg, Vec3::UnitX()) *
          Eigen::AngleAxisd(rpy.x() * kDeg, Vec3::UnitZ()))
    .toRotationMatrix();
}

std::string stamp(double t)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", t);
  return buf;
}

json to_json(const Vec3 & v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json & j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json to_json(const Rgb & c) { return json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const json & j)
{
  return {j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

ObjectClass class_from(const json & j)
{
  const auto name = j.get<std::string>();
  if (name == "none") {
    return ObjectClass::kNone;
  }
  auto c = parse_class(name);
  if (!c) {
    throw std::invalid_argument("scene: unknown label '" + name + "'");
  }
  return *c;
}

}  // namespace

Box3D MovingObject::box_at(double t) const
{
  const Vec3 center = interpolate_path<Waypoint, Vec3>(
    path, t, [](const Waypoint & a, const Waypoint & b, double s) {
      return Vec3(a.position + s * (b.position - a.position));
    });
  return Box3D::from_corners(center - 0.5 * size, center + 0.5 * size, label);
}

PoseSE3 SyntheticScene::camera_pose_cw(double t) const
{
  const PoseSE3 pose_wc = interpolate_path<CameraWaypoint, PoseSE3>(
    camera_path, t, [](const CameraWaypoint & a, const CameraWaypoint & b, double s) {
      PoseSE3 p;
      p.translation = a.position + s * (b.position - a.position);
      p.rotation = rotation_from_rpy_deg(
        a.roll_pitch_yaw_deg + s * (b.roll_pitch_yaw_deg - a.roll_pitch_yaw_deg));
      return p;
    });
  return inverse(pose_wc);
}

void SyntheticScene::validate() const
{
  if (!camera.is_valid() || width <= 0 || height <= 0 || !(fps > 0.0) || frame_count < 1 ||
      keyframe_every < 1) {
    throw std::invalid_argument("scene: invalid camera, frame rate or frame count");
  }
  const double end = duration();
  auto covers = [end](const auto & path) {
    return !path.empty() && path.front().t <= 0.0 && path.back().t >= end;
  };
  if (!covers(camera_path)) {
    throw std::invalid_argument("scene: camera path must cover the full time span");
  }
  for (const MovingObject & m : movables) {
    if (!covers(m.path)) {
      throw std::invalid_argument("scene: object path must cover the full time span");
    }
  }
  if (statics.size() + movables.size() > std::size_t(std::numeric_limits<std::int16_t>::max())) {
    throw std::invalid_argument("scene: too many surfaces");
  }
}

SyntheticScene SyntheticScene::one_object()
{
  SyntheticScene s;
  const double end = s.duration();
  s.statics = {
    // back wall
    {Box3D::from_corners(Vec3(-4.0, -2.03, 4.03), Vec3(4.0, 1.03, 4.23)), Rgb{150, 150, 150}},
    // floor
    {Box3D::from_corners(Vec3(-4.0, 1.03, 0.31), Vec3(4.0, 1.23, 4.23)), Rgb{120, 90, 60}},
    // left wall
    {Box3D::from_corners(Vec3(-2.47, -2.03, 0.31), Vec3(-2.27, 1.03, 4.03)), Rgb{90, 130, 160}},
  };
  MovingObject person;
  person.size = Vec3(0.5, 1.0, 0.5);
  person.label = ObjectClass::kPerson;
  person.color = Rgb{200, 40, 40};
  person.path = {{0.0, Vec3(-0.6, 0.2, 2.5)}, {end, Vec3(-0.6 + 0.1 * end, 0.2, 2.5)}};
  s.movables = {person};
  s.camera_path = {
    {0.0, Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0)},
    {end, Vec3(0.3, 0.0, 0.0), Vec3(0.0, 0.0, 4.0)},
  };
  return s;
}

std::optional<double> intersect_ray_box(const Vec3 & origin, const Vec3 & dir, const Box3D & box)
{
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (dir[i] == 0.0) {
      if (origin[i] < box.p1[i] || origin[i] > box.p2[i]) {
        return std::nullopt;
      }
      continue;
    }
    double a = (box.p1[i] - origin[i]) / dir[i];
    double b = (box.p2[i] - origin[i]) / dir[i];
    if (a > b) {
      std::swap(a, b);
    }
    t_near = std::max(t_near, a);
    t_far = std::min(t_far, b);
  }
  if (t_near > t_far || t_near <= 0.0) {
    return std::nullopt;
  }
  return t_near;
}

RenderedFrame render_frame(const SyntheticScene & scene, double t)
{
  const PoseSE3 pose_wc = inverse(scene.camera_pose_cw(t));
  const CameraIntrinsics & k = scene.camera;

  std::vector<Box3D> boxes;
  std::vector<Rgb> colors;
  for (const SceneSlab & s : scene.statics) {
    boxes.push_back(s.box);
    colors.push_back(s.color);
  }
  for (const MovingObject & m : scene.movables) {
    boxes.push_back(m.box_at(t));
    colors.push_back(m.color);
  }

  RenderedFrame out{
    DepthImage(scene.width, scene.height, 0), RgbImage(scene.width, scene.height),
    Image<std::int16_t>(scene.width, scene.height, kNoSurface)};
  const Vec3 origin = pose_wc.translation;
  for (int v = 0; v < scene.height; ++v) {
    for (int u = 0; u < scene.width; ++u) {
      // Camera-frame direction with unit z, so the hit distance is the depth.
      const Vec3 dir = pose_wc.rotation * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int hit = -1;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        if (auto s = intersect_ray_box(origin, dir, boxes[b]); s && *s < best) {
          best = *s;
          hit = static_cast<int>(b);
        }
      }
      if (hit < 0) {
        continue;
      }
      const double raw = std::round(best * k.depth_scale);
      if (raw < 1.0 || raw > 65535.0) {
        continue;
      }
      out.depth.at(u, v) = static_cast<std::uint16_t>(raw);
      out.rgb.at(u, v) = colors[hit];
      out.surface.at(u, v) = static_cast<std::int16_t>(hit);
    }
  }
  return out;
}

std::vector<Detection2D> detect_objects(
  const SyntheticScene & scene, double t, const RenderedFrame & frame, std::mt19937 & rng)
{
  const PoseSE3 pose_cw = scene.camera_pose_cw(t);
  std::vector<Detection2D> out;
  std::normal_distribution<double> noise(0.0, std::max(scene.detector.pixel_sigma, 0.0));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool jitter = scene.detector.kind == DetectorKind::kJittered;

  for (std::size_t i = 0; i < scene.movables.size(); ++i) {
    const MovingObject & m = scene.movables[i];
    const auto surface_id = static_cast<std::int16_t>(scene.statics.size() + i);
    if (std::none_of(frame.surface.data.begin(), frame.surface.data.end(),
                     [&](std::int16_t s) { return s == surface_id; })) {
      continue;  // fully occluded or out of view
    }
    auto hull = project_box_to_image(m.box_at(t), pose_cw, scene.camera);
    if (!hull) {
      continue;
    }
    Box2D box = *hull;
    if (jitter) {
      if (coin(rng) < scene.detector.drop_probability) {
        continue;
      }
      if (scene.detector.pixel_sigma > 0.0) {
        box = Box2D::from_corners(
          box.min_corner + Vec2(noise(rng), noise(rng)), box.max_corner + Vec2(noise(rng), noise(rng)));
      }
    }
    const Vec2 lo(0.0, 0.0);
    const Vec2 hi(scene.width - 1.0, scene.height - 1.0);
    box = Box2D{box.min_corner.cwiseMax(lo).cwiseMin(hi), box.max_corner.cwiseMax(lo).cwiseMin(hi)};
    if (!(box.area() > 0.0)) {
      continue;
    }
    const Vec2 c = box.center();
    const int cu = std::clamp(static_cast<int>(std::lround(c.x())), 0, scene.width - 1);
    const int cv = std::clamp(static_cast<int>(std::lround(c.y())), 0, scene.height - 1);
    Detection2D d;
    d.label = m.label;
    d.score = jitter ? 0.9 : 1.0;
    d.box = box;
    d.center_depth = frame.depth.at(cu, cv) / scene.camera.depth_scale;
    out.push_back(d);
  }
  return out;
}

GenerationSummary generate_synthetic(const SyntheticScene & scene, const std::filesystem::path & out_dir)
{
  scene.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "rgb");
  fs::create_directories(out_dir / "depth");

  std::ofstream rgb_txt(out_dir / "rgb.txt");
  std::ofstream depth_txt(out_dir / "depth.txt");
  std::ofstream gt_boxes(out_dir / "gt_boxes.txt");
  if (!rgb_txt || !depth_txt || !gt_boxes) {
    throw std::runtime_error("cannot write synthetic dataset to " + out_dir.string());
  }
  rgb_txt << "# color images\n# timestamp filename\n";
  depth_txt << "# depth maps\n# timestamp filename\n";
  gt_boxes << "# timestamp object_id label x1 y1 z1 x2 y2 z2\n";

  {
    std::ofstream cam(out_dir / "camera.txt");
    char buf[256];
    std::snprintf(
      buf, sizeof(buf), "%.9g %.9g %.9g %.9g %.9g %d %d\n", scene.camera.fx, scene.camera.fy,
      scene.camera.cx, scene.camera.cy, scene.camera.depth_scale, scene.width, scene.height);
    cam << "# fx fy cx cy depth_scale width height\n" << buf;
  }

  Trajectory gt;
  DetectionMap detections;
  std::mt19937 rng(scene.detector.seed);
  GenerationSummary summary;
  char buf[256];

  for (int i = 0; i < scene.frame_count; ++i) {
    const double rel = i / scene.fps;
    const double t = scene.frame_time(i);
    const std::string ts = stamp(t);
    const RenderedFrame frame = render_frame(scene, rel);
    write_rgb_png(out_dir / "rgb" / (ts + ".png"), frame.rgb);
    write_depth_png(out_dir / "depth" / (ts + ".png"), frame.depth);
    rgb_txt << ts << " rgb/" << ts << ".png\n";
    depth_txt << ts << " depth/" << ts << ".png\n";
    gt.push_back(t, scene.camera_pose_cw(rel));

    for (std::size_t m = 0; m < scene.movables.size(); ++m) {
      const Box3D b = scene.movables[m].box_at(rel);
      std::snprintf(
        buf, sizeof(buf), "%s %zu %s %.6f %.6f %.6f %.6f %.6f %.6f\n", ts.c_str(), m,
        std::string(class_name(b.label)).c_str(), b.p1.x(), b.p1.y(), b.p1.z(), b.p2.x(), b.p2.y(),
        b.p2.z());
      gt_boxes << buf;
    }

    if (i % scene.keyframe_every == 0) {
      auto dets = detect_objects(scene, rel, frame, rng);
      summary.detections += dets.size();
      if (!dets.empty()) {
        detections[t] = std::move(dets);
      }
    }
    ++summary.frames;
  }
  write_trajectory(gt, out_dir / "groundtruth.txt");
  write_detections(detections, out_dir / "detections.txt");
  save_scene(scene, out_dir / "scene.json");
  return summary;
}

void save_scene(const SyntheticScene & scene, const std::filesystem::path & path)
{
  json j;
  j["camera"] = {
    {"fx", scene.camera.fx}, {"fy", scene.camera.fy}, {"cx", scene.camera.cx},
    {"cy", scene.camera.cy}, {"depth_scale", scene.camera.depth_scale},
    {"width", scene.width},  {"height", scene.height}};
  j["fps"] = scene.fps;
  j["frame_count"] = scene.frame_count;
  j["start_time"] = scene.start_time;
  j["keyframe_every"] = scene.keyframe_every;
  j["statics"] = json::array();
  for (const SceneSlab & s : scene.statics) {
    j["statics"].push_back({{"min", to_json(s.box.p1)}, {"max", to_json(s.box.p2)},
                            {"label", class_name(s.box.label)}, {"color", to_json(s.color)}});
  }
  j["movables"] = json::array();
  for (const MovingObject & m : scene.movables) {
    json path = json::array();
    for (const Waypoint & w : m.path) {
      path.push_back({{"t", w.t}, {"center", to_json(w.position)}});
    }
    j["movables"].push_back({{"size", to_json(m.size)}, {"label", class_name(m.label)},
                             {"color", to_json(m.color)}, {"path", path}});
  }
  j["camera_path"] = json::array();
  for (const CameraWaypoint & w : scene.camera_path) {
    j["camera_path"].push_back(
      {{"t", w.t}, {"position", to_json(w.position)}, {"roll_pitch_yaw_deg", to_json(w.roll_pitch_yaw_deg)}});
  }
  j["detector"] = {
    {"kind", scene.detector.kind == DetectorKind::kPerfect ? "perfect" : "jittered"},
    {"pixel_sigma", scene.detector.pixel_sigma},
    {"drop_probability", scene.detector.drop_probability},
    {"seed", scene.detector.seed}};

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write scene " + path.string());
  }
  out << j.dump(2) << '\n';
}

SyntheticScene load_scene(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open scene " + path.string());
  }
  SyntheticScene s;
  try {
    const json j = json::parse(in);
    const json & cam = j.at("camera");
    s.camera.fx = cam.at("fx");
    s.camera.fy = cam.at("fy");
    s.camera.cx = cam.at("cx");
    s.camera.cy = cam.at("cy");
    s.camera.depth_scale = cam.at("depth_scale");
    s.width = cam.at("width");
    s.height = cam.at("height");
    s.fps = j.at("fps");
    s.frame_count = j.at("frame_count");
    s.start_time = j.at("start_time");
    s.keyframe_every = j.at("keyframe_every");
    for (const json & st : j.at("statics")) {
      s.statics.push_back({Box3D::from_corners(vec3_from(st.at("min")), vec3_from(st.at("max")),
                                               class_from(st.value("label", json("none")))),
                           rgb_from(st.at("color"))});
    }
    for (const json & mj : j.at("movables")) {
      MovingObject m;
      m.size = vec3_from(mj.at("size"));
      m.label = class_from(mj.at("label"));
      m.color = rgb_from(mj.at("color"));
      for (const json & w : mj.at("path")) {
        m.path.push_back({w.at("t"), vec3_from(w.at("center"))});
      }
      s.movables.push_back(std::move(m));
    }
    for (const json & w : j.at("camera_path")) {
      s.camera_path.push_back(
        {w.at("t"), vec3_from(w.at("position")), vec3_from(w.at("roll_pitch_yaw_deg"))});
    }
    if (j.contains("detector")) {
      const json & d = j.at("detector");
      s.detector.kind = d.value("kind", std::string("perfect")) == "jittered" ? DetectorKind::kJittered
                                                                              : DetectorKind::kPerfect;
      s.detector.pixel_sigma = d.value("pixel_sigma", 0.0);
      s.detector.drop_probability = d.value("drop_probability", 0.0);
      s.detector.seed = d.value("seed", 7u);
    }
  } catch (const json::exception & e) {
    throw std::runtime_error("malformed scene " + path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

MapQuality eval_map(const SemanticOctree & map, const SyntheticScene & scene, const EvalOptions & opts)
{
  MapQuality q;

  // Swept region: the object boxes at every frame time.
  std::vector<Box3D> swept;
  for (const MovingObject & m : scene.movables) {
    for (int i = 0; i < scene.frame_count; ++i) {
      swept.push_back(m.box_at(i / scene.fps));
    }
  }
  // A labeled voxel is right if its cube touches a box of that label.
  const double half = 0.5 * map.config().voxel_size;
  auto swept_label = [&](const Vec3 & p) -> ObjectClass {
    for (const Box3D & b : swept) {
      if (b.contains(p, half)) {
        return b.label;
      }
    }
    return ObjectClass::kNone;
  };
  auto in_swept = [&](const Vec3 & p) {
    return std::any_of(swept.begin(), swept.end(), [&](const Box3D & b) { return b.contains(p); });
  };

  map.for_each_leaf([&](const VoxelKey & key, const VoxelNode & node) {
    const Vec3 c = map.center_of(key);
    if (map.is_occupied(node)) {
      ++q.occupied_voxels;
      if (in_swept(c)) {
        ++q.occupied_in_swept_region;
      }
    }
    if (auto label = node.majority_label()) {
      ++q.labeled_voxels;
      if (*label == swept_label(c)) {
        ++q.labeled_correct;
      }
    }
  });

  // Static surfaces seen at keyframes, lifted exactly as the mapper does.
  std::set<VoxelKey> visible;
  const int stride = std::max(opts.stride, 1);
  const auto n_static = static_cast<std::int16_t>(scene.statics.size());
  for (int i = 0; i < scene.frame_count; i += scene.keyframe_every) {
    const double rel = i / scene.fps;
    std::optional<PoseSE3> pose_cw = scene.camera_pose_cw(rel);
    if (opts.poses) {
      pose_cw = opts.poses->pose_at(scene.frame_time(i));
      if (!pose_cw) {
        continue;
      }
    }
    const PoseSE3 pose_wc = inverse(*pose_cw);
    const RenderedFrame frame = render_frame(scene, rel);
    for (int v = 0; v < scene.height; v += stride) {
      for (int u = 0; u < scene.width; u += stride) {
        const std::int16_t s = frame.surface.at(u, v);
        const std::uint16_t raw = frame.depth.at(u, v);
        if (s < 0 || s >= n_static || raw == 0) {
          continue;
        }
        const Vec3 p = pose_wc.apply(backproject(u, v, raw, scene.camera));
        if (in_swept(p)) {
          continue;
        }
        visible.insert(map.key_of(p));
      }
    }
  }
  q.visible_static_voxels = visible.size();
  for (const VoxelKey & k : visible) {
    const VoxelNode * n = map.find(k);
    if (n && map.is_occupied(*n)) {
      ++q.visible_static_occupied;
    }
  }

  auto ratio = [](std::size_t a, std::size_t b) { return b ? double(a) / double(b) : 0.0; };
  q.movable_region_fraction = ratio(q.occupied_in_swept_region, q.occupied_voxels);
  q.static_surface_fraction = ratio(q.visible_static_occupied, q.visible_static_voxels);
  q.label_accuracy = ratio(q.labeled_correct, q.labeled_voxels);
  return q;
}

}  // namespace dynscene
