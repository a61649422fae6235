#include "dynscene/semantic_octree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace dynscene
{

namespace
{

constexpr std::int32_t kOffset = 1 << (SemanticOctree::kDepth - 1);
constexpr std::int32_t kNoChild = -1;
constexpr const char * kNativeMagic = "dynscene-map";
constexpr int kNativeVersion = 1;

int child_index(std::uint32_t ux, std::uint32_t uy, std::uint32_t uz, int bit)
{
  return static_cast<int>(((ux >> bit) & 1u) | (((uy >> bit) & 1u) << 1) | (((uz >> bit) & 1u) << 2));
}

std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void map_parse_error(const std::filesystem::path & path, int line, const std::string & msg)
{
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

double logit(double p)
{
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("logit: probability must lie in (0, 1)");
  }
  return std::log(p / (1.0 - p));
}

double inverse_logit(double l)
{
  return 1.0 / (1.0 + std::exp(-l));
}

void MapConfig::validate() const
{
  if (!(voxel_size > 0.0)) {
    throw std::invalid_argument("voxel_size must be positive");
  }
  if (!(occupancy_threshold > 0.0 && occupancy_threshold < 1.0)) {
    throw std::invalid_argument("occupancy threshold must lie in (0, 1)");
  }
  if (!(clamp_min < 0.0 && clamp_max > 0.0)) {
    throw std::invalid_argument("clamp bounds must satisfy clamp_min < 0 < clamp_max");
  }
  if (!std::isfinite(tau_static) || !std::isfinite(tau_movable)) {
    throw std::invalid_argument("tau values must be finite");
  }
}

std::optional<ObjectClass> VoxelNode::majority_label() const
{
  std::optional<ObjectClass> best;
  std::uint32_t best_count = 0;
  // std::map iterates in ascending class id, so strict > keeps the lowest id on ties.
  for (const auto & [label, count] : label_histogram) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

Rgb VoxelNode::display_color() const
{
  if (auto label = majority_label()) {
    return class_color(*label);
  }
  return color;
}

SemanticOctree::SemanticOctree(MapConfig cfg) : cfg_(cfg)
{
  cfg_.validate();
  new_node();
}

std::int32_t SemanticOctree::new_node()
{
  Node n;
  n.children.fill(kNoChild);
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

VoxelKey SemanticOctree::key_of(const Vec3 & position) const
{
  if (!position.allFinite()) {
    throw std::invalid_argument("non-finite point coordinates");
  }
  VoxelKey key;
  std::array<std::int32_t *, 3> out{&key.x, &key.y, &key.z};
  for (int i = 0; i < 3; ++i) {
    const double k = std::floor(position[i] / cfg_.voxel_size);
    if (k < -kOffset || k >= kOffset) {
      throw std::invalid_argument("point outside the octree bounds");
    }
    *out[i] = static_cast<std::int32_t>(k);
  }
  return key;
}

Vec3 SemanticOctree::center_of(const VoxelKey & key) const
{
  return Vec3(key.x + 0.5, key.y + 0.5, key.z + 0.5) * cfg_.voxel_size;
}

std::int32_t SemanticOctree::descend_or_create(
  const VoxelKey & key, std::array<std::int32_t, kDepth + 1> & path)
{
  const auto ux = static_cast<std::uint32_t>(key.x + kOffset);
  const auto uy = static_cast<std::uint32_t>(key.y + kOffset);
  const auto uz = static_cast<std::uint32_t>(key.z + kOffset);
  std::int32_t node = 0;
  path[0] = 0;
  for (int depth = 0; depth < kDepth; ++depth) {
    const int c = child_index(ux, uy, uz, kDepth - 1 - depth);
    std::int32_t next = nodes_[node].children[c];
    if (next == kNoChild) {
      next = new_node();
      nodes_[node].children[c] = next;
    }
    node = next;
    path[depth + 1] = node;
  }
  if (nodes_[node].leaf < 0) {
    nodes_[node].leaf = static_cast<std::int32_t>(leaves_.size());
    leaves_.emplace_back();
  }
  return nodes_[node].leaf;
}

void SemanticOctree::refresh_path(const std::array<std::int32_t, kDepth + 1> & path)
{
  Node & bottom = nodes_[path[kDepth]];
  bottom.max_log_odds = leaves_[bottom.leaf].log_odds;
  for (int depth = kDepth - 1; depth >= 0; --depth) {
    Node & n = nodes_[path[depth]];
    double m = -std::numeric_limits<double>::infinity();
    for (std::int32_t c : n.children) {
      if (c != kNoChild) {
        m = std::max(m, nodes_[c].max_log_odds);
      }
    }
    n.max_log_odds = m;
  }
}

const VoxelNode & SemanticOctree::insert_point(const LabeledPoint & pt)
{
  const VoxelKey key = key_of(pt.position);
  std::array<std::int32_t, kDepth + 1> path;
  const std::int32_t leaf_idx = descend_or_create(key, path);
  VoxelNode & leaf = leaves_[leaf_idx];

  const double tau = pt.movable ? cfg_.tau_movable : cfg_.tau_static;
  leaf.log_odds = std::clamp(leaf.log_odds + tau, cfg_.clamp_min, cfg_.clamp_max);

  if (pt.label && *pt.label != ObjectClass::kNone) {
    leaf.label_histogram[*pt.label] += 1;
  }
  const auto n = static_cast<double>(leaf.color_samples);
  const auto blend = [n](std::uint8_t old, std::uint8_t add) {
    return static_cast<std::uint8_t>(std::lround((old * n + add) / (n + 1.0)));
  };
  leaf.color = {blend(leaf.color.r, pt.color.r), blend(leaf.color.g, pt.color.g),
                blend(leaf.color.b, pt.color.b)};
  leaf.color_samples += 1;
  if (pt.movable) {
    leaf.movable_hits += 1;
  }

  refresh_path(path);
  return leaf;
}

InsertionStats SemanticOctree::insert_labeled_cloud(
  std::span<const LabeledPoint> points, std::span<const LabeledBox> boxes, double box_margin)
{
  InsertionStats stats;
  for (const LabeledPoint & src : points) {
    LabeledPoint pt = src;
    const LabeledBox * movable_hit = nullptr;
    const LabeledBox * static_hit = nullptr;
    for (const LabeledBox & lb : boxes) {
      if (!lb.box.contains(pt.position, box_margin)) {
        continue;
      }
      if (lb.movable) {
        movable_hit = &lb;
        break;
      }
      if (!static_hit) {
        static_hit = &lb;
      }
    }
    if (movable_hit) {
      pt.movable = true;
      pt.label = movable_hit->box.label;
    } else if (static_hit) {
      pt.label = static_hit->box.label;
    }
    insert_point(pt);
    ++stats.inserted;
    if (pt.movable) {
      ++stats.movable;
    }
    if (pt.label && *pt.label != ObjectClass::kNone) {
      ++stats.labeled;
    }
  }
  return stats;
}

const VoxelNode * SemanticOctree::find(const VoxelKey & key) const
{
  const auto ux = static_cast<std::uint32_t>(key.x + kOffset);
  const auto uy = static_cast<std::uint32_t>(key.y + kOffset);
  const auto uz = static_cast<std::uint32_t>(key.z + kOffset);
  if (ux >= 2u * kOffset || uy >= 2u * kOffset || uz >= 2u * kOffset) {
    return nullptr;
  }
  std::int32_t node = 0;
  for (int depth = 0; depth < kDepth; ++depth) {
    node = nodes_[node].children[child_index(ux, uy, uz, kDepth - 1 - depth)];
    if (node == kNoChild) {
      return nullptr;
    }
  }
  return nodes_[node].leaf >= 0 ? &leaves_[nodes_[node].leaf] : nullptr;
}

const VoxelNode * SemanticOctree::find(const Vec3 & position) const
{
  if (!position.allFinite()) {
    return nullptr;
  }
  try {
    return find(key_of(position));
  } catch (const std::invalid_argument &) {
    return nullptr;
  }
}

bool SemanticOctree::is_occupied(const VoxelNode & node) const
{
  return node.log_odds > cfg_.occupancy_log_odds();
}

bool SemanticOctree::is_occupied(const Vec3 & position) const
{
  const VoxelNode * node = find(position);
  return node != nullptr && is_occupied(*node);
}

std::optional<double> SemanticOctree::coarse_max_log_odds(const Vec3 & position, int level) const
{
  if (level < 0 || level > kDepth) {
    throw std::invalid_argument("coarse query level out of range");
  }
  const VoxelKey key = key_of(position);
  const auto ux = static_cast<std::uint32_t>(key.x + kOffset);
  const auto uy = static_cast<std::uint32_t>(key.y + kOffset);
  const auto uz = static_cast<std::uint32_t>(key.z + kOffset);
  std::int32_t node = 0;
  for (int depth = 0; depth < kDepth - level; ++depth) {
    node = nodes_[node].children[child_index(ux, uy, uz, kDepth - 1 - depth)];
    if (node == kNoChild) {
      return std::nullopt;
    }
  }
  if (node == 0 && leaves_.empty()) {
    return std::nullopt;
  }
  return nodes_[node].max_log_odds;
}

void SemanticOctree::set_leaf(const VoxelKey & key, const VoxelNode & value)
{
  std::array<std::int32_t, kDepth + 1> path;
  const std::int32_t leaf_idx = descend_or_create(key, path);
  leaves_[leaf_idx] = value;
  refresh_path(path);
}

std::size_t SemanticOctree::occupied_count() const
{
  return static_cast<std::size_t>(std::count_if(
    leaves_.begin(), leaves_.end(), [this](const VoxelNode & n) { return is_occupied(n); }));
}

void SemanticOctree::for_each_leaf(
  const std::function<void(const VoxelKey &, const VoxelNode &)> & fn) const
{
  visit(0, 0, 0, 0, 0, fn);
}

void SemanticOctree::visit(
  std::int32_t node, int depth, std::uint32_t ux, std::uint32_t uy, std::uint32_t uz,
  const std::function<void(const VoxelKey &, const VoxelNode &)> & fn) const
{
  const Node & n = nodes_[node];
  if (depth == kDepth) {
    if (n.leaf >= 0) {
      const VoxelKey key{
        static_cast<std::int32_t>(ux) - kOffset, static_cast<std::int32_t>(uy) - kOffset,
        static_cast<std::int32_t>(uz) - kOffset};
      fn(key, leaves_[n.leaf]);
    }
    return;
  }
  const int bit = kDepth - 1 - depth;
  for (int c = 0; c < 8; ++c) {
    if (n.children[c] == kNoChild) {
      continue;
    }
    visit(
      n.children[c], depth + 1, ux | (static_cast<std::uint32_t>(c & 1) << bit),
      uy | (static_cast<std::uint32_t>((c >> 1) & 1) << bit),
      uz | (static_cast<std::uint32_t>((c >> 2) & 1) << bit), fn);
  }
}

void export_map(const SemanticOctree & map, MapFormat format, const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open map output " + path.string());
  }
  const MapConfig & cfg = map.config();

  if (format == MapFormat::kNative) {
    out << kNativeMagic << ' ' << kNativeVersion << '\n';
    out << "voxel_size " << format_double(cfg.voxel_size) << '\n';
    out << "tau " << format_double(cfg.tau_static) << ' ' << format_double(cfg.tau_movable)
        << '\n';
    out << "occupancy_threshold " << format_double(cfg.occupancy_threshold) << '\n';
    out << "clamp " << format_double(cfg.clamp_min) << ' ' << format_double(cfg.clamp_max)
        << '\n';
    out << "leaves " << map.leaf_count() << '\n';
    map.for_each_leaf([&](const VoxelKey & k, const VoxelNode & n) {
      out << k.x << ' ' << k.y << ' ' << k.z << ' ' << format_double(n.log_odds) << ' '
          << int(n.color.r) << ' ' << int(n.color.g) << ' ' << int(n.color.b) << ' '
          << n.color_samples << ' ' << n.movable_hits << ' ' << n.label_histogram.size();
      for (const auto & [label, count] : n.label_histogram) {
        out << ' ' << int(label) << ' ' << count;
      }
      out << '\n';
    });
  } else {
    std::vector<std::pair<VoxelKey, const VoxelNode *>> occupied;
    map.for_each_leaf([&](const VoxelKey & k, const VoxelNode & n) {
      if (map.is_occupied(n)) {
        occupied.emplace_back(k, &n);
      }
    });
    out << "ply\nformat ascii 1.0\ncomment dynscene occupied voxels\n";
    out << "element vertex " << occupied.size() << '\n';
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "property uchar label\nend_header\n";
    char buf[96];
    for (const auto & [k, n] : occupied) {
      const Vec3 c = map.center_of(k);
      const Rgb rgb = n->display_color();
      std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f", c.x(), c.y(), c.z());
      out << buf << ' ' << int(rgb.r) << ' ' << int(rgb.g) << ' ' << int(rgb.b) << ' '
          << int(n->majority_label().value_or(ObjectClass::kNone)) << '\n';
    }
  }
  out.flush();
  if (!out) {
    throw std::runtime_error("failed writing map " + path.string());
  }
}

SemanticOctree load_map(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open map " + path.string());
  }
  std::string line;
  int line_no = 0;
  auto next_line = [&](const char * what) -> std::istringstream {
    if (!std::getline(in, line)) {
      map_parse_error(path, line_no + 1, std::string("missing ") + what);
    }
    ++line_no;
    return std::istringstream(line);
  };
  auto expect_key = [&](std::istringstream & ss, const char * key) {
    std::string k;
    ss >> k;
    if (k != key) {
      map_parse_error(path, line_no, std::string("expected '") + key + "'");
    }
  };

  {
    auto ss = next_line("header");
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kNativeMagic || version != kNativeVersion) {
      map_parse_error(path, line_no, "not a dynscene map (or unsupported version)");
    }
  }
  MapConfig cfg;
  {
    auto ss = next_line("voxel_size");
    expect_key(ss, "voxel_size");
    ss >> cfg.voxel_size;
  }
  {
    auto ss = next_line("tau");
    expect_key(ss, "tau");
    ss >> cfg.tau_static >> cfg.tau_movable;
  }
  {
    auto ss = next_line("occupancy_threshold");
    expect_key(ss, "occupancy_threshold");
    ss >> cfg.occupancy_threshold;
  }
  {
    auto ss = next_line("clamp");
    expect_key(ss, "clamp");
    ss >> cfg.clamp_min >> cfg.clamp_max;
    if (!ss) {
      map_parse_error(path, line_no, "malformed clamp line");
    }
  }
  std::size_t count = 0;
  {
    auto ss = next_line("leaves");
    expect_key(ss, "leaves");
    ss >> count;
    if (!ss) {
      map_parse_error(path, line_no, "malformed leaves line");
    }
  }

  SemanticOctree map(cfg);
  for (std::size_t i = 0; i < count; ++i) {
    auto ss = next_line("leaf record");
    VoxelKey k;
    VoxelNode n;
    int r = 0, g = 0, b = 0;
    std::size_t labels = 0;
    ss >> k.x >> k.y >> k.z >> n.log_odds >> r >> g >> b >> n.color_samples >> n.movable_hits >>
      labels;
    if (!ss) {
      map_parse_error(path, line_no, "malformed leaf record");
    }
    n.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
               static_cast<std::uint8_t>(b)};
    for (std::size_t j = 0; j < labels; ++j) {
      int label = 0;
      std::uint32_t c = 0;
      ss >> label >> c;
      if (!ss || label < 0 || label > kNumObjectClasses) {
        map_parse_error(path, line_no, "malformed label histogram");
      }
      n.label_histogram[static_cast<ObjectClass>(label)] = c;
    }
    map.set_leaf(k, n);
  }
  return map;
}

}  // namespace dynscene
