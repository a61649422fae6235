#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dynscene/dataset.hpp"
#include "dynscene/fusion.hpp"
#include "dynscene/hungarian.hpp"
#include "dynscene/pipeline.hpp"
#include "dynscene/plane_tracker.hpp"
#include "dynscene/semantic_octree.hpp"
#include "dynscene/synthetic.hpp"

namespace py = pybind11;
using namespace dynscene;

namespace
{

Trajectory trajectory_from(const std::vector<std::pair<double, PoseSE3>> & poses)
{
  Trajectory t;
  for (const auto & [ts, p] : poses) {
    t.push_back(ts, p);
  }
  return t;
}

std::vector<std::pair<double, PoseSE3>> trajectory_to(const Trajectory & t)
{
  std::vector<std::pair<double, PoseSE3>> out;
  for (const TimedPose & p : t.poses()) {
    out.emplace_back(p.timestamp, p.pose_cw);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Dynamic-object tracking, keypoint culling and semantic octree mapping";
  m.attr("__version__") = "0.1.0";

  py::register_exception<InvalidDepth>(m, "InvalidDepth", PyExc_ValueError);
  py::register_exception<RejectedUpdate>(m, "RejectedUpdate", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_RuntimeError);

  py::enum_<ObjectClass> cls(m, "ObjectClass");
  for (int i = 0; i <= 20; ++i) {
    const auto c = static_cast<ObjectClass>(i);
    cls.value(std::string(class_name(c)).c_str(), c);
  }
  m.def("parse_class", [](const std::string & name) { return parse_class(name); });
  m.def("class_name", [](ObjectClass c) { return std::string(class_name(c)); });
  m.def("class_color", [](ObjectClass c) {
    const Rgb rgb = class_color(c);
    return py::make_tuple(rgb.r, rgb.g, rgb.b);
  });

  py::class_<Rgb>(m, "Rgb")
    .def(py::init([](std::uint8_t r, std::uint8_t g, std::uint8_t b) { return Rgb{r, g, b}; }),
         py::arg("r") = 0, py::arg("g") = 0, py::arg("b") = 0)
    .def_readwrite("r", &Rgb::r)
    .def_readwrite("g", &Rgb::g)
    .def_readwrite("b", &Rgb::b)
    .def("__eq__", [](const Rgb & a, const Rgb & b) { return a == b; })
    .def("__repr__", [](const Rgb & c) {
      return "Rgb(" + std::to_string(c.r) + ", " + std::to_string(c.g) + ", " + std::to_string(c.b) + ")";
    });

  // geometry
  py::class_<PoseSE3>(m, "PoseSE3")
    .def(py::init<>())
    .def(py::init([](const Mat3 & r, const Vec3 & t) { return PoseSE3{r, t}; }), py::arg("rotation"),
         py::arg("translation"))
    .def_readwrite("rotation", &PoseSE3::rotation)
    .def_readwrite("translation", &PoseSE3::translation)
    .def_static("identity", &PoseSE3::identity)
    .def_static("translate", &PoseSE3::translate)
    .def_static("rot_x", &PoseSE3::rot_x)
    .def_static("rot_y", &PoseSE3::rot_y)
    .def_static("rot_z", &PoseSE3::rot_z)
    .def_static(
      "from_quaternion",
      [](double qx, double qy, double qz, double qw, const Vec3 & t) {
        return PoseSE3::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), t);
      },
      py::arg("qx"), py::arg("qy"), py::arg("qz"), py::arg("qw"), py::arg("translation"))
    .def("apply", &PoseSE3::apply)
    .def("matrix", &PoseSE3::matrix)
    .def("is_valid", &PoseSE3::is_valid, py::arg("tol") = 1e-9);
  m.def("compose", &compose);
  m.def("inverse", &inverse);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
    .def(py::init<>())
    .def(py::init([](double fx, double fy, double cx, double cy, double s) {
           return CameraIntrinsics{fx, fy, cx, cy, s};
         }),
         py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("depth_scale") = 5000.0)
    .def_readwrite("fx", &CameraIntrinsics::fx)
    .def_readwrite("fy", &CameraIntrinsics::fy)
    .def_readwrite("cx", &CameraIntrinsics::cx)
    .def_readwrite("cy", &CameraIntrinsics::cy)
    .def_readwrite("depth_scale", &CameraIntrinsics::depth_scale);

  py::class_<Box2D>(m, "Box2D")
    .def(py::init([](const Vec2 & a, const Vec2 & b) { return Box2D::from_corners(a, b); }))
    .def_readonly("min_corner", &Box2D::min_corner)
    .def_readonly("max_corner", &Box2D::max_corner)
    .def("area", &Box2D::area)
    .def("center", &Box2D::center)
    .def("contains", &Box2D::contains)
    .def("__repr__", [](const Box2D & b) {
      return py::str("Box2D([{}, {}], [{}, {}])")
        .format(b.min_corner.x(), b.min_corner.y(), b.max_corner.x(), b.max_corner.y());
    });

  py::class_<Box3D>(m, "Box3D")
    .def(py::init([](const Vec3 & a, const Vec3 & b, ObjectClass label, std::optional<int> id) {
           return Box3D::from_corners(a, b, label, id);
         }),
         py::arg("a"), py::arg("b"), py::arg("label") = ObjectClass::kNone, py::arg("track_id") = py::none())
    .def_readonly("p1", &Box3D::p1)
    .def_readonly("p2", &Box3D::p2)
    .def_readwrite("label", &Box3D::label)
    .def_readwrite("track_id", &Box3D::track_id)
    .def("volume", &Box3D::volume)
    .def("center", &Box3D::center)
    .def("contains", &Box3D::contains, py::arg("p"), py::arg("margin") = 0.0)
    .def("corners", &Box3D::corners)
    .def("__repr__", [](const Box3D & b) {
      return py::str("Box3D([{}, {}, {}], [{}, {}, {}], {})")
        .format(b.p1.x(), b.p1.y(), b.p1.z(), b.p2.x(), b.p2.y(), b.p2.z(), class_name(b.label));
    });

  py::enum_<Plane>(m, "Plane")
    .value("xOy", Plane::kXOY)
    .value("yOz", Plane::kYOZ)
    .value("zOx", Plane::kZOX);

  py::class_<Detection2D>(m, "Detection2D")
    .def(py::init([](ObjectClass label, double score, const Box2D & box, double depth) {
           return Detection2D{label, score, box, depth};
         }),
         py::arg("label"), py::arg("score"), py::arg("box"), py::arg("center_depth"))
    .def_readwrite("label", &Detection2D::label)
    .def_readwrite("score", &Detection2D::score)
    .def_readwrite("box", &Detection2D::box)
    .def_readwrite("center_depth", &Detection2D::center_depth);

  py::class_<LiftOptions>(m, "LiftOptions")
    .def(py::init<>())
    .def_readwrite("depth_extent_ratio", &LiftOptions::depth_extent_ratio);

  m.def("transform_box", &transform_box);
  m.def("backproject", &backproject);
  m.def("project", &project);
  m.def("lift_detection", &lift_detection, py::arg("detection"), py::arg("pose_cw"), py::arg("k"),
        py::arg("opts") = LiftOptions{});
  m.def("project_to_plane", &project_to_plane);
  m.def("iou_2d", &iou_2d);
  m.def("iou_3d", &iou_3d);

  // tracking
  m.def("hungarian_assign", &hungarian_assign, "Minimum-cost assignment as sorted (row, col) pairs");
  m.def("assignment_cost", &assignment_cost);

  py::class_<KalmanNoise>(m, "KalmanNoise")
    .def(py::init<>())
    .def_readwrite("process", &KalmanNoise::process)
    .def_readwrite("measurement", &KalmanNoise::measurement);

  py::class_<TrackerConfig>(m, "TrackerConfig")
    .def(py::init<>())
    .def_readwrite("iou_gate", &TrackerConfig::iou_gate)
    .def_readwrite("max_age", &TrackerConfig::max_age)
    .def_readwrite("min_hits", &TrackerConfig::min_hits)
    .def_readwrite("noise", &TrackerConfig::noise);

  py::class_<PlaneBox>(m, "PlaneBox")
    .def_readonly("box", &PlaneBox::box)
    .def_readonly("track_id", &PlaneBox::track_id)
    .def_readonly("label", &PlaneBox::label)
    .def_readonly("detection", &PlaneBox::detection);

  py::class_<PlaneTracker>(m, "PlaneTracker")
    .def(py::init<TrackerConfig>(), py::arg("config") = TrackerConfig{})
    .def(
      "step",
      [](PlaneTracker & t, std::optional<std::vector<std::pair<Box2D, ObjectClass>>> dets, double dt) {
        if (!dets) {
          return t.step(std::nullopt, dt);
        }
        std::vector<PlaneDetection> d;
        for (const auto & [box, label] : *dets) {
          d.push_back({box, label});
        }
        return t.step(std::span<const PlaneDetection>(d), dt);
      },
      py::arg("detections"), py::arg("dt"))
    .def("extrapolate", &PlaneTracker::extrapolate)
    .def_property_readonly("track_count", [](const PlaneTracker & t) { return t.tracks().size(); });

  py::class_<FusionConfig>(m, "FusionConfig")
    .def(py::init<>())
    .def_readwrite("tracker", &FusionConfig::tracker)
    .def_readwrite("movable_classes", &FusionConfig::movable_classes)
    .def_readwrite("lift", &FusionConfig::lift);

  py::class_<PredictionResult>(m, "PredictionResult")
    .def_readonly("timestamp", &PredictionResult::timestamp)
    .def_readonly("boxes_world", &PredictionResult::boxes_world)
    .def_readonly("boxes_camera", &PredictionResult::boxes_camera)
    .def_readonly("skipped_detections", &PredictionResult::skipped_detections)
    .def_readonly("dropped_boxes", &PredictionResult::dropped_boxes);

  py::class_<FusionEngine>(m, "FusionEngine")
    .def(py::init<FusionConfig>(), py::arg("config") = FusionConfig{})
    .def(
      "ingest_keyframe",
      [](FusionEngine & e, const std::vector<Detection2D> & dets, const PoseSE3 & pose,
         const CameraIntrinsics & k, double t) { return e.ingest_keyframe(dets, pose, k, t); },
      py::arg("detections"), py::arg("pose_cw"), py::arg("k"), py::arg("t"))
    .def("predict_frame", &FusionEngine::predict_frame, py::arg("pose_cw"), py::arg("t"))
    .def_property_readonly("active_tracks", &FusionEngine::active_tracks);

  m.def(
    "cull_keypoints",
    [](const std::vector<Vec2> & points, const PredictionResult & pred, const PoseSE3 & pose,
       const CameraIntrinsics & k, double margin) {
      CullResult r = cull_keypoints(points, pred, pose, k, margin);
      return py::make_tuple(r.kept, r.removed);
    },
    py::arg("points"), py::arg("prediction"), py::arg("pose_cw"), py::arg("k"), py::arg("margin") = 0.0,
    "Returns (kept, removed) pixel lists");

  // mapping
  m.def("logit", &logit);
  m.def("inverse_logit", &inverse_logit);

  py::class_<MapConfig>(m, "MapConfig")
    .def(py::init<>())
    .def_readwrite("voxel_size", &MapConfig::voxel_size)
    .def_readwrite("tau_static", &MapConfig::tau_static)
    .def_readwrite("tau_movable", &MapConfig::tau_movable)
    .def_readwrite("occupancy_threshold", &MapConfig::occupancy_threshold)
    .def_readwrite("clamp_min", &MapConfig::clamp_min)
    .def_readwrite("clamp_max", &MapConfig::clamp_max);

  py::class_<VoxelNode>(m, "VoxelNode")
    .def_readonly("log_odds", &VoxelNode::log_odds)
    .def_readonly("color", &VoxelNode::color)
    .def_readonly("label_histogram", &VoxelNode::label_histogram)
    .def_readonly("movable_hits", &VoxelNode::movable_hits)
    .def("majority_label", &VoxelNode::majority_label);

  py::class_<LabeledPoint>(m, "LabeledPoint")
    .def(py::init([](const Vec3 & p, Rgb c, std::optional<ObjectClass> label, bool movable) {
           return LabeledPoint{p, c, label, movable};
         }),
         py::arg("position"), py::arg("color") = Rgb{}, py::arg("label") = py::none(),
         py::arg("movable") = false)
    .def_readwrite("position", &LabeledPoint::position)
    .def_readwrite("label", &LabeledPoint::label)
    .def_readwrite("movable", &LabeledPoint::movable);

  py::class_<InsertionStats>(m, "InsertionStats")
    .def_readonly("inserted", &InsertionStats::inserted)
    .def_readonly("movable", &InsertionStats::movable)
    .def_readonly("labeled", &InsertionStats::labeled);

  py::enum_<MapFormat>(m, "MapFormat").value("native", MapFormat::kNative).value("ply", MapFormat::kPly);

  py::class_<SemanticOctree>(m, "SemanticOctree")
    .def(py::init<MapConfig>(), py::arg("config") = MapConfig{})
    .def_property_readonly("config", &SemanticOctree::config)
    .def("insert_point", [](SemanticOctree & m, const LabeledPoint & p) { return m.insert_point(p); })
    .def(
      "insert_labeled_cloud",
      [](SemanticOctree & m, const std::vector<LabeledPoint> & pts,
         const std::vector<std::pair<Box3D, bool>> & boxes, double margin) {
        std::vector<LabeledBox> lb;
        for (const auto & [b, movable] : boxes) {
          lb.push_back({b, movable});
        }
        return m.insert_labeled_cloud(pts, lb, margin);
      },
      py::arg("points"), py::arg("boxes"), py::arg("box_margin") = 0.0,
      "boxes: list of (Box3D, movable) pairs")
    .def("is_occupied", py::overload_cast<const Vec3 &>(&SemanticOctree::is_occupied, py::const_))
    .def("find", [](const SemanticOctree & m, const Vec3 & p) -> std::optional<VoxelNode> {
      const VoxelNode * n = m.find(p);
      return n ? std::optional<VoxelNode>(*n) : std::nullopt;
    })
    .def("key_of", [](const SemanticOctree & m, const Vec3 & p) {
      const VoxelKey k = m.key_of(p);
      return py::make_tuple(k.x, k.y, k.z);
    })
    .def_property_readonly("leaf_count", &SemanticOctree::leaf_count)
    .def_property_readonly("occupied_count", &SemanticOctree::occupied_count);
  m.def("export_map", &export_map, py::arg("map"), py::arg("format"), py::arg("path"));
  m.def("load_map", &load_map);

  // datasets
  m.def(
    "ate_rmse",
    [](const std::vector<std::pair<double, PoseSE3>> & est, const std::vector<std::pair<double, PoseSE3>> & gt,
       bool align, double tol) { return ate_rmse(trajectory_from(est), trajectory_from(gt), align, tol); },
    py::arg("estimated"), py::arg("ground_truth"), py::arg("align") = false,
    py::arg("tolerance") = kDefaultAssociationTolerance, "Trajectories are lists of (timestamp, pose_cw)");
  m.def("load_trajectory", [](const std::filesystem::path & p) { return trajectory_to(load_trajectory(p)); });
  m.def("write_trajectory", [](const std::vector<std::pair<double, PoseSE3>> & t, const std::filesystem::path & p) {
    write_trajectory(trajectory_from(t), p);
  });
  m.def("load_detections", &load_detections);

  // pipeline
  py::class_<StageTiming>(m, "StageTiming")
    .def_readonly("count", &StageTiming::count)
    .def_readonly("mean_ms", &StageTiming::mean_ms)
    .def_readonly("p50_ms", &StageTiming::p50_ms)
    .def_readonly("p90_ms", &StageTiming::p90_ms)
    .def_readonly("p99_ms", &StageTiming::p99_ms)
    .def_readonly("max_ms", &StageTiming::max_ms);

  py::class_<RunReport>(m, "RunReport")
    .def_readonly("frames", &RunReport::frames)
    .def_readonly("keyframes", &RunReport::keyframes)
    .def_readonly("predicted_boxes", &RunReport::predicted_boxes)
    .def_readonly("keypoints", &RunReport::keypoints)
    .def_readonly("keypoints_removed", &RunReport::keypoints_removed)
    .def_readonly("map_occupied", &RunReport::map_occupied)
    .def_readonly("prediction", &RunReport::prediction)
    .def("to_metrics", &RunReport::to_metrics);

  m.def(
    "run_pipeline",
    [](const std::filesystem::path & sequence, std::optional<std::filesystem::path> detections,
       std::optional<int> keyframe_every, const MapConfig & map, bool deterministic,
       std::optional<std::filesystem::path> out_map, std::optional<std::filesystem::path> out_boxes) {
      RunConfig cfg;
      cfg.sequence_dir = sequence;
      cfg.detections_path = detections;
      cfg.keyframe_every = keyframe_every;
      cfg.map = map;
      cfg.deterministic = deterministic;
      cfg.out_map = out_map;
      cfg.out_boxes = out_boxes;
      RunOutput out = run_pipeline(cfg);
      return py::make_tuple(out.report, std::move(out.map));
    },
    py::arg("sequence"), py::arg("detections") = py::none(), py::arg("keyframe_every") = py::none(),
    py::arg("map_config") = MapConfig{}, py::arg("deterministic") = true, py::arg("out_map") = py::none(),
    py::arg("out_boxes") = py::none(), "Returns (report, map)");

  m.def(
    "generate_synthetic",
    [](const std::filesystem::path & out, int frames) {
      SyntheticScene scene = SyntheticScene::one_object();
      if (frames > 0) {
        scene.frame_count = frames;
        const double end = scene.duration();
        scene.camera_path.back().t = end;
        for (auto & mo : scene.movables) {
          mo.path.back().t = end;
        }
      }
      return generate_synthetic(scene, out).frames;
    },
    py::arg("out_dir"), py::arg("frames") = 0,
    "Writes the built-in one-object scene; returns the frame count");

  py::class_<MapQuality>(m, "MapQuality")
    .def_readonly("occupied_voxels", &MapQuality::occupied_voxels)
    .def_readonly("movable_region_fraction", &MapQuality::movable_region_fraction)
    .def_readonly("static_surface_fraction", &MapQuality::static_surface_fraction)
    .def_readonly("label_accuracy", &MapQuality::label_accuracy);

  m.def(
    "eval_map",
    [](const SemanticOctree & map, const std::filesystem::path & scene_dir, int stride) {
      EvalOptions opts;
      opts.stride = stride;
      if (std::filesystem::exists(scene_dir / "groundtruth.txt")) {
        opts.poses = load_trajectory(scene_dir / "groundtruth.txt");
      }
      return eval_map(map, load_scene(scene_dir / "scene.json"), opts);
    },
    py::arg("map"), py::arg("scene_dir"), py::arg("stride") = 2);
}
