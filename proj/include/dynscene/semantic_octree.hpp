#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynscene/geometry.hpp"
#include "dynscene/labels.hpp"

namespace dynscene
{

/// log(p / (1 - p)). Throws std::domain_error outside (0, 1).
double logit(double p);
double inverse_logit(double l);

struct MapConfig
{
  double voxel_size = 0.05;
  double tau_static = 0.85;
  double tau_movable = -0.41;
  double occupancy_threshold = 0.5;
  double clamp_min = -2.0;
  double clamp_max = 3.5;

  void validate() const;
  double occupancy_log_odds() const { return logit(occupancy_threshold); }
};

struct VoxelKey
{
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend auto operator<=>(const VoxelKey &, const VoxelKey &) = default;
};

struct VoxelNode
{
  double log_odds = 0.0;
  /// Running mean of sensor colors.
  Rgb color;
  std::uint32_t color_samples = 0;
  std::map<ObjectClass, std::uint32_t> label_histogram;
  std::uint32_t movable_hits = 0;

  /// argmax of the histogram, ties to the lowest class id.
  std::optional<ObjectClass> majority_label() const;
  /// Palette color of the majority label, else the sensor color.
  Rgb display_color() const;
};

struct LabeledPoint
{
  Vec3 position = Vec3::Zero();
  Rgb color;
  std::optional<ObjectClass> label;
  bool movable = false;
};

struct LabeledBox
{
  Box3D box;
  bool movable = false;
};

struct InsertionStats
{
  std::size_t inserted = 0;
  std::size_t movable = 0;
  std::size_t labeled = 0;

  InsertionStats & operator+=(const InsertionStats & o)
  {
    inserted += o.inserted;
    movable += o.movable;
    labeled += o.labeled;
    return *this;
  }
};

/// Occupancy octree with 2^16 leaves per axis, centered on the origin.
/// Leaves are voxels of side voxel_size; inner nodes cache the maximum
/// log-odds beneath them. Endpoint-only updates: each inserted point adds
/// its tau to the voxel it lands in, clamped after every step.
class SemanticOctree
{
public:
  static constexpr int kDepth = 16;

  explicit SemanticOctree(MapConfig cfg = {});

  const MapConfig & config() const { return cfg_; }

  /// floor(position / voxel_size) per axis. Throws std::invalid_argument for
  /// non-finite or out-of-range positions.
  VoxelKey key_of(const Vec3 & position) const;
  Vec3 center_of(const VoxelKey & key) const;

  const VoxelNode & insert_point(const LabeledPoint & pt);
  InsertionStats insert_labeled_cloud(
    std::span<const LabeledPoint> points, std::span<const LabeledBox> boxes,
    double box_margin = 0.0);

  const VoxelNode * find(const VoxelKey & key) const;
  const VoxelNode * find(const Vec3 & position) const;
  bool is_occupied(const Vec3 & position) const;
  bool is_occupied(const VoxelNode & node) const;

  /// Maximum leaf log-odds inside the block of side voxel_size * 2^level
  /// containing position; nullopt when that block holds no leaves.
  std::optional<double> coarse_max_log_odds(const Vec3 & position, int level) const;

  /// Replaces (or creates) a leaf verbatim; used by the map loader.
  void set_leaf(const VoxelKey & key, const VoxelNode & node);

  std::size_t leaf_count() const { return leaves_.size(); }
  std::size_t occupied_count() const;

  /// Depth-first, child-index order (deterministic).
  void for_each_leaf(const std::function<void(const VoxelKey &, const VoxelNode &)> & fn) const;

private:
  struct Node
  {
    std::array<std::int32_t, 8> children;
    double max_log_odds = 0.0;
    std::int32_t leaf = -1;
  };

  std::int32_t new_node();
  std::int32_t descend_or_create(const VoxelKey & key, std::array<std::int32_t, kDepth + 1> & path);
  void refresh_path(const std::array<std::int32_t, kDepth + 1> & path);
  void visit(
    std::int32_t node, int level, std::uint32_t ux, std::uint32_t uy, std::uint32_t uz,
    const std::function<void(const VoxelKey &, const VoxelNode &)> & fn) const;

  MapConfig cfg_;
  std::vector<Node> nodes_;
  std::vector<VoxelNode> leaves_;
};

enum class MapFormat { kNative, kPly };

/// Writes the map. Native: every leaf, lossless. PLY: occupied voxel
/// centers with display color and majority label. Throws std::runtime_error
/// on I/O failure.
void export_map(const SemanticOctree & map, MapFormat format, const std::filesystem::path & path);
SemanticOctree load_map(const std::filesystem::path & path);

}  // namespace dynscene
