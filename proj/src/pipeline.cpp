#include "dynscene/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dynscene/image.hpp"
#include "dynscene/point_cloud.hpp"

namespace dynscene
{

namespace
{

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct MapJob
{
  double timestamp = 0.0;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  PoseSE3 pose_cw;
  std::vector<LabeledBox> boxes;
};

class Mapper
{
public:
  Mapper(SemanticOctree & map, const CameraIntrinsics & k, int stride, double box_margin)
  : map_(map), k_(k), stride_(stride), box_margin_(box_margin)
  {
  }

  void process(const MapJob & job)
  {
    const auto start = Clock::now();
    const RgbImage rgb = read_rgb_png(job.rgb_path);
    const DepthImage depth = read_depth_png(job.depth_path);
    const auto cloud = cloud_from_depth(rgb, depth, job.pose_cw, k_, stride_);
    stats_ += map_.insert_labeled_cloud(cloud, job.boxes, box_margin_);
    timings_.push_back(ms_since(start));
  }

  const InsertionStats & stats() const { return stats_; }
  const std::vector<double> & timings() const { return timings_; }

private:
  SemanticOctree & map_;
  CameraIntrinsics k_;
  int stride_;
  double box_margin_;
  InsertionStats stats_;
  std::vector<double> timings_;
};

std::string frame_error(double t, const std::string & what)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "frame %.6f: ", t);
  return buf + what;
}

/// Single consumer fed through a bounded FIFO; push blocks when full.
class MapWorker
{
public:
  MapWorker(Mapper & mapper, std::size_t capacity)
  : mapper_(mapper), capacity_(capacity), thread_([this] { loop(); })
  {
  }

  ~MapWorker() { close(); }

  void push(MapJob job)
  {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return queue_.size() < capacity_ || error_; });
    rethrow_locked();
    queue_.push_back(std::move(job));
    not_empty_.notify_one();
  }

  /// Drains the queue and joins; rethrows the first worker error.
  void finish()
  {
    close();
    std::lock_guard lock(mu_);
    rethrow_locked();
  }

private:
  void close()
  {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
    if (thread_.joinable()) {
      thread_.join();
    }
  }

  void rethrow_locked()
  {
    if (error_) {
      auto e = error_;
      error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

  void loop()
  {
    for (;;) {
      MapJob job;
      {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !queue_.empty() || closed_; });
        if (queue_.empty()) {
          return;
        }
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      not_full_.notify_one();
      try {
        mapper_.process(job);
      } catch (const std::exception & e) {
        std::lock_guard lock(mu_);
        if (!error_) {
          error_ = std::make_exception_ptr(std::runtime_error(frame_error(job.timestamp, e.what())));
        }
        queue_.clear();
        not_full_.notify_all();
        return;
      }
    }
  }

  Mapper & mapper_;
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<MapJob> queue_;
  bool closed_ = false;
  std::exception_ptr error_;
  std::thread thread_;
};

std::ofstream open_output(const std::filesystem::path & path)
{
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  return out;
}

void write_box_lines(std::ostream & out, const PredictionResult & pred, bool camera_columns)
{
  char buf[512];
  for (std::size_t i = 0; i < pred.boxes_world.size(); ++i) {
    const Box3D & w = pred.boxes_world[i];
    int n = std::snprintf(
      buf, sizeof(buf), "%.6f %d %s %.6f %.6f %.6f %.6f %.6f %.6f", pred.timestamp, w.track_id.value_or(-1),
      std::string(class_name(w.label)).c_str(), w.p1.x(), w.p1.y(), w.p1.z(), w.p2.x(), w.p2.y(), w.p2.z());
    if (camera_columns) {
      const Box3D & c = pred.boxes_camera[i];
      std::snprintf(
        buf + n, sizeof(buf) - n, " %.6f %.6f %.6f %.6f %.6f %.6f", c.p1.x(), c.p1.y(), c.p1.z(),
        c.p2.x(), c.p2.y(), c.p2.z());
    }
    out << buf << '\n';
  }
}

double percentile(const std::vector<double> & sorted, double q)
{
  if (sorted.empty()) {
    return 0.0;
  }
  // nearest-rank
  const auto rank = static_cast<std::size_t>(std::ceil(q * sorted.size()));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

void RunConfig::validate() const
{
  if (keyframe_every && *keyframe_every < 1) {
    throw std::invalid_argument("--keyframe-every must be >= 1");
  }
  if (stride < 1) {
    throw std::invalid_argument("--stride must be >= 1");
  }
  if (!(margin >= 0.0) || !(box_margin >= 0.0)) {
    throw std::invalid_argument("margins must be non-negative");
  }
  if (keypoint_grid < 1) {
    throw std::invalid_argument("keypoint grid spacing must be >= 1");
  }
  if (!(association_tolerance >= 0.0)) {
    throw std::invalid_argument("association tolerance must be non-negative");
  }
  tracker.validate();
  map.validate();
}

StageTiming StageTiming::from_samples(std::vector<double> samples_ms)
{
  StageTiming t;
  if (samples_ms.empty()) {
    return t;
  }
  std::sort(samples_ms.begin(), samples_ms.end());
  t.count = samples_ms.size();
  double sum = 0.0;
  for (double s : samples_ms) {
    sum += s;
  }
  t.mean_ms = sum / samples_ms.size();
  t.p50_ms = percentile(samples_ms, 0.50);
  t.p90_ms = percentile(samples_ms, 0.90);
  t.p99_ms = percentile(samples_ms, 0.99);
  t.max_ms = samples_ms.back();
  return t;
}

std::string RunReport::to_metrics() const
{
  std::ostringstream out;
  out << "[run]\n"
      << "frames=" << frames << '\n'
      << "keyframes=" << keyframes << '\n'
      << "frames_without_pose=" << frames_without_pose << '\n'
      << "unmatched_frames=" << unmatched_frames << '\n'
      << "\n[tracking]\n"
      << "detections=" << detections << '\n'
      << "skipped_detections=" << skipped_detections << '\n'
      << "predicted_boxes=" << predicted_boxes << '\n'
      << "dropped_boxes=" << dropped_boxes << '\n'
      << "max_active_tracks=" << max_active_tracks << '\n'
      << "\n[culling]\n"
      << "keypoints=" << keypoints << '\n'
      << "removed=" << keypoints_removed << '\n'
      << "\n[mapping]\n"
      << "inserted_points=" << insertion.inserted << '\n'
      << "movable_points=" << insertion.movable << '\n'
      << "labeled_points=" << insertion.labeled << '\n'
      << "leaves=" << map_leaves << '\n'
      << "occupied_voxels=" << map_occupied << '\n'
      << "\n[timing]\n";
  char buf[256];
  for (const auto & [name, t] :
       {std::pair{"prediction", prediction}, std::pair{"keyframe", keyframe}, std::pair{"mapping", mapping}}) {
    std::snprintf(
      buf, sizeof(buf),
      "%s_count=%zu\n%s_mean_ms=%.4f\n%s_p50_ms=%.4f\n%s_p90_ms=%.4f\n%s_p99_ms=%.4f\n%s_max_ms=%.4f\n",
      name, t.count, name, t.mean_ms, name, t.p50_ms, name, t.p90_ms, name, t.p99_ms, name, t.max_ms);
    out << buf;
  }
  return out.str();
}

std::vector<Vec2> grid_keypoints(int width, int height, int spacing)
{
  std::vector<Vec2> pts;
  if (spacing < 1) {
    return pts;
  }
  for (int v = spacing / 2; v < height; v += spacing) {
    for (int u = spacing / 2; u < width; u += spacing) {
      pts.emplace_back(u, v);
    }
  }
  return pts;
}

CameraSetup load_camera(const std::filesystem::path & sequence_dir)
{
  CameraSetup cam;
  cam.intrinsics = CameraIntrinsics::tum_default();
  const auto path = sequence_dir / "camera.txt";
  std::ifstream in(path);
  if (!in) {
    return cam;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    std::istringstream fields(line);
    CameraIntrinsics k;
    int w = 0;
    int h = 0;
    std::string extra;
    if (!(fields >> k.fx >> k.fy >> k.cx >> k.cy >> k.depth_scale >> w >> h) || (fields >> extra)) {
      throw ParseError(path, lineno, "expected 'fx fy cx cy depth_scale width height'");
    }
    if (!k.is_valid() || w <= 0 || h <= 0) {
      throw ParseError(path, lineno, "invalid camera parameters");
    }
    cam.intrinsics = k;
    cam.width = w;
    cam.height = h;
    return cam;
  }
  return cam;
}

RunOutput run_pipeline(const RunConfig & cfg)
{
  cfg.validate();
  const SequenceLoad seq = load_tum_sequence(cfg.sequence_dir, cfg.association_tolerance);
  const CameraSetup cam = load_camera(cfg.sequence_dir);
  const CameraIntrinsics & k = cam.intrinsics;

  std::optional<Trajectory> trajectory;
  if (cfg.trajectory_path) {
    trajectory = load_trajectory(*cfg.trajectory_path);
  }
  DetectionMap detections;
  if (cfg.detections_path) {
    detections = load_detections(*cfg.detections_path);
  }

  FusionConfig fusion_cfg;
  fusion_cfg.tracker = cfg.tracker;
  fusion_cfg.movable_classes = cfg.movable_classes;
  fusion_cfg.lift = cfg.lift;
  FusionEngine engine(fusion_cfg);

  RunOutput out{RunReport{}, SemanticOctree(cfg.map)};
  RunReport & report = out.report;
  report.unmatched_frames = seq.unmatched_frames;

  std::optional<std::ofstream> boxes_out;
  std::optional<std::ofstream> culled_out;
  if (cfg.out_boxes) {
    boxes_out = open_output(*cfg.out_boxes);
    *boxes_out << "# timestamp track_id label x1 y1 z1 x2 y2 z2"
               << (cfg.camera_boxes ? " cx1 cy1 cz1 cx2 cy2 cz2" : "") << '\n';
  }
  if (cfg.out_culled) {
    culled_out = open_output(*cfg.out_culled);
    *culled_out << "# timestamp kept removed\n";
  }

  Mapper mapper(out.map, k, cfg.stride, cfg.box_margin);
  std::optional<MapWorker> worker;
  if (!cfg.deterministic) {
    worker.emplace(mapper, 4);
  }

  const std::vector<Vec2> keypoints = grid_keypoints(cam.width, cam.height, cfg.keypoint_grid);
  std::vector<double> prediction_ms;
  std::vector<double> keyframe_ms;

  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const FrameRecord & frame = seq.frames[i];
    const double t = frame.timestamp;
    ++report.frames;
    try {
      std::optional<PoseSE3> pose = trajectory ? trajectory->pose_at(t, cfg.association_tolerance) : frame.pose_cw;
      const auto * dets = detections_at(detections, t, cfg.association_tolerance);
      const bool is_keyframe = cfg.keyframe_every ? i % std::size_t(*cfg.keyframe_every) == 0 : dets != nullptr;
      if (!pose) {
        ++report.frames_without_pose;
        continue;
      }

      PredictionResult pred;
      if (is_keyframe) {
        ++report.keyframes;
        const std::span<const Detection2D> frame_dets =
          dets ? std::span<const Detection2D>(*dets) : std::span<const Detection2D>();
        report.detections += frame_dets.size();

        const auto kf_start = Clock::now();
        pred = engine.ingest_keyframe(frame_dets, *pose, k, t);
        keyframe_ms.push_back(ms_since(kf_start));

        MapJob job{t, frame.rgb_path, frame.depth_path, *pose, {}};
        for (const Detection2D & d : frame_dets) {
          if (cfg.movable_classes.contains(d.label)) {
            continue;
          }
          try {
            job.boxes.push_back({lift_detection(d, *pose, k, cfg.lift), false});
          } catch (const InvalidDepth &) {
          }
        }
        for (const Box3D & b : engine.latest_lifted_boxes()) {
          job.boxes.push_back({b, true});
        }
        for (const Box3D & b : pred.boxes_world) {
          job.boxes.push_back({b, true});
        }
        if (worker) {
          worker->push(std::move(job));
        } else {
          mapper.process(job);
        }
      }

      // Keyframes cull against their fresh fusion; only the other frames
      // count toward the prediction-stage timing.
      const auto start = Clock::now();
      if (!is_keyframe) {
        pred = engine.predict_frame(*pose, t);
      }
      const CullResult culled = cull_keypoints(keypoints, pred, *pose, k, cfg.margin);
      if (!is_keyframe) {
        prediction_ms.push_back(ms_since(start));
      }
      report.keypoints += keypoints.size();
      report.keypoints_removed += culled.removed.size();
      if (culled_out) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.6f %zu %zu\n", t, culled.kept.size(), culled.removed.size());
        *culled_out << buf;
      }

      report.skipped_detections += pred.skipped_detections;
      report.dropped_boxes += pred.dropped_boxes;
      report.predicted_boxes += pred.boxes_world.size();
      report.max_active_tracks = std::max(report.max_active_tracks, engine.active_tracks());
      if (boxes_out) {
        write_box_lines(*boxes_out, pred, cfg.camera_boxes);
      }
    } catch (const std::exception & e) {
      throw std::runtime_error(frame_error(t, e.what()));
    }
  }

  if (worker) {
    worker->finish();
  }

  report.insertion = mapper.stats();
  report.map_leaves = out.map.leaf_count();
  report.map_occupied = out.map.occupied_count();
  report.prediction = StageTiming::from_samples(prediction_ms);
  report.keyframe = StageTiming::from_samples(keyframe_ms);
  report.mapping = StageTiming::from_samples(mapper.timings());

  if (cfg.out_map) {
    export_map(out.map, MapFormat::kNative, *cfg.out_map);
  }
  if (cfg.export_ply) {
    export_map(out.map, MapFormat::kPly, *cfg.export_ply);
  }
  if (cfg.out_metrics) {
    open_output(*cfg.out_metrics) << report.to_metrics();
  }
  return out;
}

}  // namespace dynscene
