#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "captrack/geometry.hpp"
#include "captrack/limbs.hpp"
#include "captrack/sensor.hpp"

namespace captrack {

/// Bounded region of target relative poses.
struct TargetSpace {
  double p_y_min = -0.10, p_y_max = 0.10;
  double p_z_min = 0.0, p_z_max = 0.15;
  double theta_min = -std::numbers::pi / 8.0, theta_max = std::numbers::pi / 8.0;

  RelPose sample(std::mt19937_64& gen) const;
  /// True when `y` lies inside the box grown by `expand` of each range on both sides.
  bool contains(const RelPose& y, double expand = 0.0) const;
};

/// Translation speed in cm/s and rotation speed in rad/s, as 2-vectors.
struct VelocitySpec {
  std::array<double, 2> v_p{};
  std::array<double, 2> v_theta{};

  static constexpr double kMinLinear = 3.0, kMaxLinear = 10.0;
  static constexpr double kMinAngular = std::numbers::pi / 20.0, kMaxAngular = std::numbers::pi / 8.0;

  static VelocitySpec sample(std::mt19937_64& gen);
  double linear_speed() const { return std::hypot(v_p[0], v_p[1]); }
  double angular_speed() const { return std::hypot(v_theta[0], v_theta[1]); }
};

enum class LimbSite : std::uint8_t { wrist, forearm, upper_arm, ankle, shin, knee };

std::string_view to_string(LimbSite s);
std::array<LimbSite, 3> sites_for(LimbKind kind);
/// Fraction of the chain length (from the distal end) where a site sits.
double site_fraction(LimbSite s);

struct DatasetMetadata {
  std::uint64_t seed = 0;
  std::uint32_t n_iters = 0;
  double sample_rate_hz = kSampleRateHz;

  bool operator==(const DatasetMetadata&) const = default;
};

/// Flat storage of (window, y, site, mode, iteration) records.
class Dataset {
 public:
  DatasetMetadata metadata;

  std::size_t size() const { return targets_.size(); }
  bool empty() const { return targets_.empty(); }

  void append(std::span<const double> window, const RelPose& y, LimbSite site, Material mode,
              std::uint32_t iteration);
  void append(const Dataset& other);
  void reserve(std::size_t n);

  std::span<const double> window(std::size_t i) const {
    return {windows_.data() + i * kWindowSize, kWindowSize};
  }
  const RelPose& target(std::size_t i) const { return targets_[i]; }
  LimbSite site(std::size_t i) const { return sites_[i]; }
  Material mode(std::size_t i) const { return modes_[i]; }
  std::uint32_t iteration(std::size_t i) const { return iterations_[i]; }

  const std::vector<double>& windows() const { return windows_; }

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<double> windows_;
  std::vector<RelPose> targets_;
  std::vector<LimbSite> sites_;
  std::vector<Material> modes_;
  std::vector<std::uint32_t> iterations_;
};

struct CollectOptions {
  TargetSpace space;
  SensorLayout layout = SensorLayout::grid();
  /// Component tolerance that ends a straight-line move (m, rad).
  double position_tolerance = 0.002;
  double angle_tolerance = 0.01;
};

/// Receives each recorded pair; windows are only valid for the call.
using RecordSink = std::function<void(std::span<const double> window, const RelPose& y, std::uint32_t iteration)>;

/// Randomized straight-line moves through the target space at one limb site,
/// sensing at 100 Hz. The window streams continuously across moves; a pair is
/// recorded for every step once the window holds kWindowSteps samples.
/// Throws AnchorOutOfRange if the anchor is outside the chain.
void collect_site(const LimbModel& limb, double site_anchor, const MaterialMode& mode, std::uint32_t n_iters,
                  std::uint64_t seed, const CollectOptions& opts, const RecordSink& sink);

Dataset collect_site(const LimbModel& limb, LimbSite site, double site_anchor, const MaterialMode& mode,
                     std::uint32_t n_iters, std::uint64_t seed, const CollectOptions& opts = {});

/// All three sites of one limb kind on its collection pose.
Dataset collect_limb(LimbKind kind, const MaterialMode& mode, std::uint32_t n_iters, std::uint64_t seed,
                     const CollectOptions& opts = {});

/// Split by iteration: every tenth iteration (index % 10 == 9) is validation.
bool is_validation_iteration(std::uint32_t iteration);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void export_dataset_csv(const Dataset& d, const std::filesystem::path& path);

}  // namespace captrack
