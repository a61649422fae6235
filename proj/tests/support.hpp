#pragma once

// Hand-rolled generators shared by the unit and acceptance tests.

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "dynscene/geometry.hpp"

namespace dynscene::testing
{

inline double uniform(std::mt19937 & rng, double lo, double hi)
{
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937 & rng, int lo, int hi)
{
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Vec3 random_vec3(std::mt19937 & rng, double lo, double hi)
{
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline PoseSE3 random_pose(std::mt19937 & rng, double max_translation = 5.0)
{
  Eigen::Quaterniond q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  if (q.norm() < 1e-3) {
    q = Eigen::Quaterniond::Identity();
  }
  q.normalize();
  return PoseSE3{q.toRotationMatrix(), random_vec3(rng, -max_translation, max_translation)};
}

inline Box3D random_box(std::mt19937 & rng, double span = 5.0, double min_size = 0.05, double max_size = 2.0)
{
  const Vec3 lo = random_vec3(rng, -span, span);
  const Vec3 size(uniform(rng, min_size, max_size), uniform(rng, min_size, max_size), uniform(rng, min_size, max_size));
  return Box3D::from_corners(lo, lo + size);
}

inline double max_abs_diff(const Eigen::MatrixXd & a, const Eigen::MatrixXd & b)
{
  return (a - b).cwiseAbs().maxCoeff();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string & tag)
  {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dynscene-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir & operator=(const TempDir &) = delete;

  const std::filesystem::path & path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace dynscene::testing
