// dynscene: run the dynamic-object pipeline on a TUM-layout sequence,
// generate synthetic sequences, and score maps and trajectories.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dynscene/dataset.hpp"
#include "dynscene/pipeline.hpp"
#include "dynscene/semantic_octree.hpp"
#include "dynscene/synthetic.hpp"

using namespace dynscene;

namespace
{

std::set<ObjectClass> parse_class_list(const std::string & csv)
{
  std::set<ObjectClass> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) {
      continue;
    }
    auto c = parse_class(item);
    if (!c) {
      throw std::invalid_argument(
        "unknown class '" + item + "'; accepted: " + accepted_class_names());
    }
    out.insert(*c);
  }
  return out;
}

void print_quality(const MapQuality & q)
{
  std::printf("occupied_voxels=%zu\n", q.occupied_voxels);
  std::printf("occupied_in_swept_region=%zu\n", q.occupied_in_swept_region);
  std::printf("movable_region_fraction=%.6f\n", q.movable_region_fraction);
  std::printf("visible_static_voxels=%zu\n", q.visible_static_voxels);
  std::printf("visible_static_occupied=%zu\n", q.visible_static_occupied);
  std::printf("static_surface_fraction=%.6f\n", q.static_surface_fraction);
  std::printf("labeled_voxels=%zu\n", q.labeled_voxels);
  std::printf("labeled_correct=%zu\n", q.labeled_correct);
  std::printf("label_accuracy=%.6f\n", q.label_accuracy);
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Dynamic-object tracking, keypoint culling and semantic octree mapping"};
  app.require_subcommand(1);

  // run
  RunConfig cfg;
  std::string movable = "person,car";
  std::string sequence, detections, trajectory, out_map, out_boxes, out_culled, out_metrics, ply;
  int keyframe_every = 0;
  auto * run = app.add_subcommand("run", "Process a sequence");
  run->add_option("--sequence", sequence, "TUM-layout sequence directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--detections", detections, "Detection file (keyframes = its timestamps)")
    ->check(CLI::ExistingFile);
  run->add_option("--trajectory", trajectory, "Pose file in TUM format (default: groundtruth.txt)")
    ->check(CLI::ExistingFile);
  run->add_option("--keyframe-every", keyframe_every, "Make every N-th frame a keyframe")->check(CLI::PositiveNumber);
  run->add_option("--movable-classes", movable, "Comma-separated movable labels")->capture_default_str();
  run->add_option("--voxel-size", cfg.map.voxel_size, "Voxel side in meters")->capture_default_str();
  run->add_option("--tau-static", cfg.map.tau_static, "Log-odds increment for static points")->capture_default_str();
  run->add_option("--tau-movable", cfg.map.tau_movable, "Log-odds increment for movable points")
    ->capture_default_str();
  run->add_option("--occupancy-threshold", cfg.map.occupancy_threshold, "Occupancy probability threshold")
    ->capture_default_str();
  run->add_option("--stride", cfg.stride, "Depth pixel stride for map insertion")->capture_default_str();
  run->add_option("--margin", cfg.margin, "Culling margin in pixels")->capture_default_str();
  run->add_option("--iou-gate", cfg.tracker.iou_gate, "Minimum IOU for a track match")->capture_default_str();
  run->add_option("--max-age", cfg.tracker.max_age, "Keyframes a track may coast")->capture_default_str();
  run->add_flag("--deterministic", cfg.deterministic, "Single-threaded, fixed-order processing");
  run->add_flag("--camera-boxes", cfg.camera_boxes, "Append camera-frame columns to the box output");
  run->add_option("--out-map", out_map, "Native map output");
  run->add_option("--out-boxes", out_boxes, "Per-frame predicted boxes");
  run->add_option("--out-culled", out_culled, "Per-frame kept/removed keypoint counts");
  run->add_option("--out-metrics", out_metrics, "Metrics report");
  run->add_option("--export-ply", ply, "PLY export of occupied voxels");

  // synth
  std::string synth_out, scene_json;
  int frames = 0;
  int synth_keyframe_every = 0;
  std::string detector = "perfect";
  double sigma = 2.0;
  double drop = 0.0;
  unsigned seed = 7;
  auto * synth = app.add_subcommand("synth", "Generate a synthetic TUM-layout sequence");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--scene", scene_json, "Scene description (default: built-in one-object scene)")
    ->check(CLI::ExistingFile);
  synth->add_option("--frames", frames, "Frame count override")->check(CLI::PositiveNumber);
  synth->add_option("--keyframe-every", synth_keyframe_every, "Detection interval in frames")
    ->check(CLI::PositiveNumber);
  synth->add_option("--detector", detector, "perfect or jittered")
    ->check(CLI::IsMember({"perfect", "jittered"}))
    ->capture_default_str();
  synth->add_option("--sigma", sigma, "Jittered detector corner noise (pixels)")->capture_default_str();
  synth->add_option("--drop", drop, "Jittered detector drop probability")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", seed, "Detector seed")->capture_default_str();

  // eval-map
  std::string map_path, scene_dir;
  int eval_stride = 2;
  auto * eval = app.add_subcommand("eval-map", "Score a map against a synthetic scene");
  eval->add_option("--map", map_path, "Native map file")->required()->check(CLI::ExistingFile);
  eval->add_option("--scene-dir", scene_dir, "Directory written by 'synth'")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--stride", eval_stride, "Depth stride the map was built with")->capture_default_str();

  // ate
  std::string est_path, gt_path;
  bool align = false;
  auto * ate = app.add_subcommand("ate", "Absolute trajectory error (RMSE)");
  ate->add_option("--estimated", est_path, "Estimated trajectory")->required()->check(CLI::ExistingFile);
  ate->add_option("--groundtruth", gt_path, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
  ate->add_flag("--align", align, "Rigidly align before scoring");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      cfg.sequence_dir = sequence;
      if (!detections.empty()) cfg.detections_path = detections;
      if (!trajectory.empty()) cfg.trajectory_path = trajectory;
      if (keyframe_every > 0) cfg.keyframe_every = keyframe_every;
      if (!out_map.empty()) cfg.out_map = out_map;
      if (!out_boxes.empty()) cfg.out_boxes = out_boxes;
      if (!out_culled.empty()) cfg.out_culled = out_culled;
      if (!out_metrics.empty()) cfg.out_metrics = out_metrics;
      if (!ply.empty()) cfg.export_ply = ply;
      cfg.movable_classes = parse_class_list(movable);

      const RunOutput result = run_pipeline(cfg);
      const RunReport & r = result.report;
      std::fprintf(
        stderr, "frames=%zu keyframes=%zu boxes=%zu removed=%zu/%zu occupied=%zu prediction_mean_ms=%.3f\n",
        r.frames, r.keyframes, r.predicted_boxes, r.keypoints_removed, r.keypoints, r.map_occupied,
        r.prediction.mean_ms);
    } else if (*synth) {
      SyntheticScene scene = scene_json.empty() ? SyntheticScene::one_object() : load_scene(scene_json);
      if (frames > 0) {
        // Keep the object and camera paths spanning the new duration.
        const double old_end = scene.duration();
        scene.frame_count = frames;
        const double scale = old_end > 0.0 ? scene.duration() / old_end : 1.0;
        for (auto & w : scene.camera_path) w.t *= scale;
        for (auto & m : scene.movables)
          for (auto & w : m.path) w.t *= scale;
      }
      if (synth_keyframe_every > 0) scene.keyframe_every = synth_keyframe_every;
      scene.detector.kind = detector == "jittered" ? DetectorKind::kJittered : DetectorKind::kPerfect;
      if (scene.detector.kind == DetectorKind::kJittered) {
        scene.detector.pixel_sigma = sigma;
        scene.detector.drop_probability = drop;
      }
      scene.detector.seed = seed;
      const GenerationSummary s = generate_synthetic(scene, synth_out);
      std::fprintf(stderr, "wrote %d frames, %zu detections to %s\n", s.frames, s.detections, synth_out.c_str());
    } else if (*eval) {
      const SemanticOctree map = load_map(map_path);
      const std::filesystem::path dir(scene_dir);
      const SyntheticScene scene = load_scene(dir / "scene.json");
      EvalOptions opts;
      opts.stride = eval_stride;
      if (std::filesystem::exists(dir / "groundtruth.txt")) {
        opts.poses = load_trajectory(dir / "groundtruth.txt");
      }
      print_quality(eval_map(map, scene, opts));
    } else if (*ate) {
      const double rmse = ate_rmse(load_trajectory(est_path), load_trajectory(gt_path), align);
      std::printf("ate_rmse=%.9f\n", rmse);
    }
  } catch (const std::exception & e) {
    std::fprintf(stderr, "dynscene: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
