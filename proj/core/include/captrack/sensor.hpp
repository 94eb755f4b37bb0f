#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "captrack/geometry.hpp"

namespace captrack {

inline constexpr std::size_t kChannels = 6;
inline constexpr std::size_t kWindowSteps = 50;
inline constexpr std::size_t kWindowSize = kChannels * kWindowSteps;
inline constexpr double kSampleRateHz = 100.0;
inline constexpr double kSamplePeriod = 1.0 / kSampleRateHz;

/// Electrode geometry in the end-effector frame. Channel order is row-major:
/// front row (+X) left to right, then back row left to right. Left is +Y.
struct SensorLayout {
  std::array<Vec3, kChannels> electrode_centers;
  double electrode_edge = 0.03;
  int samples_per_electrode = 3;  // k, giving a k x k midpoint grid per electrode

  static SensorLayout grid(double pitch = 0.035, double edge = 0.03, int k = 3);
  void validate() const;
};

enum class Material { air_gown, wet_cloth };

std::string_view to_string(Material m);
Material material_from_string(std::string_view s);

/// Per-point kernel C(d) = alpha / (d + beta) plus array-level effects.
struct MaterialMode {
  Material kind = Material::air_gown;
  double alpha = 2.0e-2;  // pF m
  double beta = 0.01;     // m
  double baseline = 1.0;  // pF
  double noise_sigma = 0.005;
  double crosstalk_kappa = 0.1;

  static MaterialMode defaults(Material kind);
  void validate() const;
};

inline constexpr double kMinElectrodeDistance = 0.001;

struct CapSample {
  std::array<double, kChannels> c{};
  std::int64_t t = 0;
};

/// Row-normalized 4-neighbour adjacency of the 3 x 2 grid.
const std::array<std::array<double, kChannels>, kChannels>& electrode_adjacency();

/// Noise-free, crosstalk-free per-electrode average of C(d) over the
/// quadrature points, without baseline.
std::array<double, kChannels> ideal_capacitance(const LimbModel& limb, const EePose& ee,
                                                const SensorLayout& layout, const MaterialMode& mode);

/// Full synthetic reading: quadrature kernel, crosstalk mixing, baseline and
/// Gaussian noise drawn from a generator seeded with `rng_seed`.
CapSample measure(const LimbModel& limb, const EePose& ee, const SensorLayout& layout,
                  const MaterialMode& mode, std::uint64_t rng_seed, std::int64_t t = 0);

/// Rolling buffer of the last kWindowSteps samples.
class CapWindow {
 public:
  /// Appends `s`; once full, returns the flattened window, oldest sample
  /// first, channels contiguous per time step.
  std::optional<std::vector<double>> push(const CapSample& s);

  bool full() const { return count_ >= kWindowSteps; }
  std::size_t pushed() const { return count_; }
  void flatten_into(double* out) const;
  void clear();

 private:
  std::array<std::array<double, kChannels>, kWindowSteps> ring_{};
  std::size_t head_ = 0;  // next write slot
  std::size_t count_ = 0;
};

inline std::optional<std::vector<double>> push_and_window(CapWindow& buf, const CapSample& s) {
  return buf.push(s);
}

}  // namespace captrack
