#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "synreg/dataset.hpp"
#include "synreg/geometry.hpp"

namespace synreg::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("synreg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

/// Unit quaternion (w, x, y, z) drawn uniformly on S^3.
inline Eigen::Vector4d random_quaternion(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

/// Textbook quaternion-to-matrix formula, kept independent of the library.
inline Mat3 quaternion_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

/// Angle between two rotations from their quaternions: 2 acos |<qa, qb>|.
inline double quaternion_angle(const Eigen::Vector4d& qa, const Eigen::Vector4d& qb) {
  return 2.0 * std::acos(std::min(1.0, std::abs(qa.dot(qb))));
}

inline Rotation random_rotation(std::mt19937& rng) {
  return Rotation::from_matrix(quaternion_matrix(random_quaternion(rng)));
}

/// Small 64x64 scene whose framing matches the default 256x256 one.
inline SceneConfig small_scene(int size = 64) {
  SceneConfig s;
  const double f = size / 256.0;
  s.size = {size, size};
  s.intrinsics = {s.intrinsics.fx * f, s.intrinsics.fy * f, size / 2.0, size / 2.0};
  return s;
}

inline GenerationConfig small_generation(int n_frames, std::uint64_t seed = 1) {
  GenerationConfig g;
  g.sample.n_frames = n_frames;
  g.sample.seed = seed;
  return g;
}

}  // namespace synreg::test
