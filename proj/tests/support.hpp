#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "captrack/geometry.hpp"
#include "captrack/rng.hpp"

namespace captrack::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("captrack_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Single straight capsule along +X at height z.
inline LimbModel straight_limb(double length, double radius, double z = 1.0) {
  LimbModel m;
  m.segments.push_back({Vec3(0.0, 0.0, z), Vec3(length, 0.0, z), radius});
  return m;
}

inline Vec3 random_unit(std::mt19937_64& gen) {
  for (;;) {
    Vec3 v(uniform(gen, -1, 1), uniform(gen, -1, 1), uniform(gen, -1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

}  // namespace captrack::testing
