// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dynscene/dataset.hpp"
#include "dynscene/fusion.hpp"
#include "dynscene/hungarian.hpp"
#include "dynscene/pipeline.hpp"
#include "dynscene/semantic_octree.hpp"
#include "dynscene/synthetic.hpp"
#include "support.hpp"

using namespace dynscene;
using namespace dynscene::testing;

namespace
{

using Clock = std::chrono::steady_clock;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

struct Criterion
{
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char * f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// --- shared synthetic dataset -------------------------------------------

class SceneFixture
{
public:
  SceneFixture() : dir_("acceptance"), scene_(SyntheticScene::one_object()), seq_(dir_.path() / "seq") {}

  const SyntheticScene & scene() const { return scene_; }
  const std::filesystem::path & dir()
  {
    if (!generated_) {
      generate_synthetic(scene_, seq_);
      generated_ = true;
    }
    return seq_;
  }
  std::filesystem::path scratch(const std::string & name) const { return dir_.path() / name; }

  RunConfig run_config(bool with_detections)
  {
    RunConfig cfg;
    cfg.sequence_dir = dir();
    if (with_detections) cfg.detections_path = dir() / "detections.txt";
    cfg.keyframe_every = scene_.keyframe_every;
    cfg.deterministic = true;
    return cfg;
  }

private:
  TempDir dir_;
  SyntheticScene scene_;
  std::filesystem::path seq_;
  bool generated_ = false;
};

// --- criteria ------------------------------------------------------------

Outcome fresh_voxel_constants()
{
  SemanticOctree map;
  const Vec3 p(0.3, -0.1, 2.0);
  map.insert_point({p, {}, std::nullopt, false});
  const bool one_static = map.is_occupied(p) && map.find(p)->log_odds == 0.85;

  std::mt19937 rng(1);
  SemanticOctree movable_only;
  bool never = true;
  for (int v = 0; v < 100; ++v) {
    const Vec3 q = random_vec3(rng, -5, 5);
    for (int i = 0; i < 200; ++i) {
      movable_only.insert_point({q, {}, ObjectClass::kPerson, true});
      never = never && !movable_only.is_occupied(q);
    }
  }
  return {one_static && never, std::string("one static insertion occupies: ") + (one_static ? "yes" : "no") +
                                 ", movable-only ever occupied: " + (never ? "no" : "yes")};
}

Outcome stepwise_clamped_fusion()
{
  std::mt19937 rng(2);
  const MapConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    SemanticOctree map;
    const Vec3 p = random_vec3(rng, -20, 20);
    const int n = uniform_int(rng, 1, 50);
    double expected = 0.0;
    for (int i = 0; i < n; ++i) {
      const bool movable = uniform(rng, 0, 1) < 0.5;
      expected = std::clamp(expected + (movable ? cfg.tau_movable : cfg.tau_static), cfg.clamp_min, cfg.clamp_max);
      map.insert_point({p, {}, std::nullopt, movable});
    }
    worst = std::max(worst, std::abs(map.find(p)->log_odds - expected));
  }
  return {worst <= 1e-12, "10000 sequences, max |error| " + fmt("%.3g", worst)};
}

double pair_sum(Assignment pairs, const Eigen::MatrixXd & c)
{
  std::sort(pairs.begin(), pairs.end());
  double s = 0.0;
  for (auto [r, col] : pairs) s += c(r, col);
  return s;
}

// Minimum over every injective matching of the smaller side.
double brute_force_min(const Eigen::MatrixXd & c)
{
  const bool by_row = c.rows() <= c.cols();
  const int k = static_cast<int>(std::min(c.rows(), c.cols()));
  const int n = static_cast<int>(std::max(c.rows(), c.cols()));
  std::vector<int> pick;
  std::vector<bool> used(n, false);
  double best = INFINITY;
  std::function<void()> rec = [&] {
    if (static_cast<int>(pick.size()) == k) {
      Assignment pairs;
      for (int i = 0; i < k; ++i) pairs.push_back(by_row ? std::pair{i, pick[i]} : std::pair{pick[i], i});
      best = std::min(best, pair_sum(pairs, c));
      return;
    }
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      pick.push_back(j);
      rec();
      pick.pop_back();
      used[j] = false;
    }
  };
  rec();
  return best;
}

Outcome hungarian_oracle()
{
  std::mt19937 rng(3);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 1, 7);
    const int m = uniform_int(rng, 1, 7);
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        // alternate real costs with small integers (many ties)
        c(i, j) = trial % 2 ? uniform(rng, 0, 1) : double(uniform_int(rng, 0, 5));
      }
    }
    const Assignment a = hungarian_assign(c);
    if (static_cast<int>(a.size()) != std::min(n, m) || pair_sum(a, c) != brute_force_min(c)) {
      ++mismatches;
    }
  }
  return {mismatches == 0, "1000 matrices, " + std::to_string(mismatches) + " mismatches"};
}

Outcome plane_round_trip()
{
  std::mt19937 rng(4);
  double worst = 0.0;
  bool counts_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 6);
    std::vector<Box3D> boxes;
    for (int i = 0; i < n; ++i) {
      // diagonal slots keep every plane projection disjoint
      const Vec3 lo = Vec3::Constant(3.0 * i) + random_vec3(rng, 0.0, 0.5);
      const Vec3 size(uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0));
      boxes.push_back(Box3D::from_corners(lo, lo + size, ObjectClass::kPerson));
    }
    std::array<std::vector<FusionInput>, 3> per_plane;
    for (Plane p : kAllPlanes) {
      PlaneTracker tracker{TrackerConfig{}};
      std::vector<PlaneDetection> dets;
      for (const Box3D & b : boxes) dets.push_back({project_to_plane(b, p), b.label});
      for (const PlaneBox & pb : tracker.step(std::span<const PlaneDetection>(dets), 0.0)) {
        per_plane[static_cast<int>(p)].push_back({pb.box, pb.track_id, pb.label, boxes[*pb.detection]});
      }
    }
    const FusionOutput out = fuse_planes(per_plane, boxes);
    if (out.boxes.size() != boxes.size()) {
      counts_ok = false;
      continue;
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      worst = std::max(worst, (out.boxes[i].p1 - boxes[i].p1).cwiseAbs().maxCoeff());
      worst = std::max(worst, (out.boxes[i].p2 - boxes[i].p2).cwiseAbs().maxCoeff());
    }
  }
  return {counts_ok && worst <= 1e-4, "200 scenes, max corner error " + fmt("%.3g", worst) + " m"};
}

Outcome constant_velocity_prediction(const SyntheticScene & scene)
{
  FusionEngine engine;
  std::mt19937 rng(scene.detector.seed);
  int keyframes = 0;
  double iou_sum = 0.0;
  int samples = 0;
  for (int i = 0; i < scene.frame_count; ++i) {
    const double t = i / scene.fps;
    const PoseSE3 pose = scene.camera_pose_cw(t);
    if (i % scene.keyframe_every == 0) {
      const RenderedFrame f = render_frame(scene, t);
      const auto dets = detect_objects(scene, t, f, rng);
      engine.ingest_keyframe(dets, pose, scene.camera, t);
      ++keyframes;
      continue;
    }
    if (keyframes < 2) continue;
    const PredictionResult pred = engine.predict_frame(pose, t);
    const Box3D truth = scene.movables[0].box_at(t);
    double best = 0.0;
    for (const Box3D & b : pred.boxes_world) best = std::max(best, iou_3d(b, truth));
    iou_sum += best;
    ++samples;
  }
  const double mean = samples ? iou_sum / samples : 0.0;
  return {samples > 0 && mean >= 0.7,
          "mean 3D IOU " + fmt("%.3f", mean) + " over " + std::to_string(samples) + " non-keyframes"};
}

Outcome prediction_latency()
{
  const CameraIntrinsics k;
  FusionEngine engine;
  auto detections_at = [&](double shift) {
    std::vector<Detection2D> dets;
    for (int i = 0; i < 10; ++i) {
      const Vec3 c(-1.8 + 0.4 * i + shift, -0.9 + 0.2 * i, 2.0 + 0.8 * i);
      const Vec2 a = project(Vec3(c.x() - 0.15, c.y() - 0.15, c.z()), k);
      const Vec2 b = project(Vec3(c.x() + 0.15, c.y() + 0.15, c.z()), k);
      dets.push_back({ObjectClass::kPerson, 0.9, Box2D::from_corners(a, b), c.z()});
    }
    return dets;
  };
  const PoseSE3 pose = PoseSE3::identity();
  engine.ingest_keyframe(detections_at(0.0), pose, k, 0.0);
  engine.ingest_keyframe(detections_at(0.02), pose, k, 1.0 / 6.0);

  std::mt19937 rng(6);
  std::vector<Vec2> keypoints;
  for (int i = 0; i < 1000; ++i) keypoints.emplace_back(uniform(rng, 0, 639), uniform(rng, 0, 479));

  const int iterations = 1000;
  std::size_t boxes = 0;
  std::size_t removed = 0;
  const auto start = Clock::now();
  for (int it = 0; it < iterations; ++it) {
    const double t = 1.0 / 6.0 + (it % 4 + 1) / 30.0;
    const PredictionResult pred = engine.predict_frame(pose, t);
    const CullResult cull = cull_keypoints(keypoints, pred, pose, k, 0.0);
    boxes += pred.boxes_world.size();
    removed += cull.removed.size();
  }
  const double mean_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count() / iterations;
  const bool ten_tracks = engine.active_tracks() == 10 && boxes == 10u * iterations;
  std::string detail = "mean " + fmt("%.4f", mean_ms) + " ms per predict+cull (10 tracks, 1000 keypoints, " +
                       std::to_string(removed / iterations) + " culled)";
  detail += mean_ms <= 5.0 ? ", within 5 ms" : ", above 5 ms";
  return {ten_tracks && mean_ms <= 10.0, detail};
}

Outcome movable_removal(SceneFixture & fx)
{
  const RunOutput with = run_pipeline(fx.run_config(true));
  const RunOutput without = run_pipeline(fx.run_config(false));
  const MapQuality q = eval_map(with.map, fx.scene());
  const MapQuality q_off = eval_map(without.map, fx.scene());
  const bool pass = q.movable_region_fraction <= 0.05 && q.static_surface_fraction >= 0.95 &&
                    q_off.movable_region_fraction > q.movable_region_fraction;
  return {pass, "swept-region fraction " + fmt("%.4f", q.movable_region_fraction) + " (without association " +
                  fmt("%.4f", q_off.movable_region_fraction) + "), static surface coverage " +
                  fmt("%.4f", q.static_surface_fraction)};
}

Outcome ate_evaluator()
{
  std::vector<TimedPose> gt, shifted;
  for (int i = 0; i < 50; ++i) {
    const double t = 100.0 + i / 30.0;
    const PoseSE3 cam_to_world = compose(PoseSE3::translate(0.02 * i, std::sin(0.1 * i), 0.01 * i * i), PoseSE3::rot_y(0.03 * i));
    gt.push_back({t, inverse(cam_to_world)});
    shifted.push_back({t, inverse(compose(PoseSE3::translate(0.1, 0, 0), cam_to_world))});
  }
  const Trajectory g(gt), s(shifted);
  const double same = ate_rmse(g, g, false);
  const double unaligned = ate_rmse(s, g, false);
  const double aligned = ate_rmse(s, g, true);
  const bool pass = same == 0.0 && std::abs(unaligned - 0.1) <= 1e-9 && aligned <= 1e-9;
  return {pass, "identical " + fmt("%.3g", same) + ", offset unaligned " + fmt("%.12f", unaligned) + ", aligned " +
                  fmt("%.3g", aligned)};
}

std::string slurp(const std::filesystem::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(SceneFixture & fx)
{
  std::vector<std::string> maps, boxes;
  for (int run = 0; run < 2; ++run) {
    RunConfig cfg = fx.run_config(true);
    cfg.out_map = fx.scratch("map" + std::to_string(run) + ".txt");
    cfg.out_boxes = fx.scratch("boxes" + std::to_string(run) + ".txt");
    run_pipeline(cfg);
    maps.push_back(slurp(*cfg.out_map));
    boxes.push_back(slurp(*cfg.out_boxes));
  }
  const bool same = maps[0] == maps[1] && boxes[0] == boxes[1] && !maps[0].empty() && !boxes[0].empty();
  return {same, "map " + std::to_string(maps[0].size()) + " bytes, boxes " + std::to_string(boxes[0].size()) +
                  " bytes, identical: " + (same ? "yes" : "no")};
}

Outcome feature_culling(const SyntheticScene & scene)
{
  FusionEngine engine;
  std::mt19937 rng(scene.detector.seed);
  const auto movable_id = static_cast<std::int16_t>(scene.statics.size());
  std::size_t on_object = 0, on_object_removed = 0, on_static = 0, on_static_removed = 0;
  int keyframes = 0;
  for (int i = 0; i < scene.frame_count; ++i) {
    const double t = i / scene.fps;
    const PoseSE3 pose = scene.camera_pose_cw(t);
    const RenderedFrame f = render_frame(scene, t);
    PredictionResult pred;
    if (i % scene.keyframe_every == 0) {
      pred = engine.ingest_keyframe(detect_objects(scene, t, f, rng), pose, scene.camera, t);
      ++keyframes;
    } else {
      pred = engine.predict_frame(pose, t);
    }
    if (keyframes < 2) continue;
    std::vector<Vec2> object_pts, static_pts;
    for (int v = 2; v < scene.height; v += 4) {
      for (int u = 2; u < scene.width; u += 4) {
        const std::int16_t s = f.surface.at(u, v);
        if (s == movable_id) object_pts.emplace_back(u, v);
        else if (s != kNoSurface && s < movable_id) static_pts.emplace_back(u, v);
      }
    }
    on_object += object_pts.size();
    on_object_removed += cull_keypoints(object_pts, pred, pose, scene.camera, 0.0).removed.size();
    on_static += static_pts.size();
    on_static_removed += cull_keypoints(static_pts, pred, pose, scene.camera, 0.0).removed.size();
  }
  const double obj = on_object ? double(on_object_removed) / on_object : 0.0;
  const double bg = on_static ? double(on_static_removed) / on_static : 1.0;
  return {on_object > 0 && obj >= 0.95 && bg <= 0.05,
          "object keypoints removed " + fmt("%.4f", obj) + " of " + std::to_string(on_object) +
            ", background removed " + fmt("%.4f", bg) + " of " + std::to_string(on_static)};
}

}  // namespace

int main(int argc, char ** argv)
{
  SceneFixture fx;
  const std::vector<Criterion> criteria{
    {1, "fresh voxel occupancy constants", 1, fresh_voxel_constants},
    {2, "stepwise-clamped log-odds fusion", 10, stepwise_clamped_fusion},
    {3, "assignment matches brute force", 30, hungarian_oracle},
    {4, "plane projection round trip", 1, plane_round_trip},
    {5, "constant-velocity prediction", 10, [&] { return constant_velocity_prediction(fx.scene()); }},
    {6, "prediction latency", 30, prediction_latency},
    {7, "movable-object removal", 60, [&] { return movable_removal(fx); }},
    {8, "trajectory error evaluator", 1, ate_evaluator},
    {9, "deterministic outputs", 60, [&] { return determinism(fx); }},
    {10, "keypoint culling", 10, [&] { return feature_culling(fx.scene()); }},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion & c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s; %.3f s of %.0f s budget%s\n", pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), o.detail.c_str(), secs, c.budget_s, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
