#include "captrack/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "captrack/errors.hpp"
#include "captrack/rng.hpp"

namespace captrack {

SensorLayout SensorLayout::grid(double pitch, double edge, int k) {
  SensorLayout layout;
  layout.electrode_edge = edge;
  layout.samples_per_electrode = k;
  const double xs[2] = {pitch / 2.0, -pitch / 2.0};
  const double ys[3] = {pitch, 0.0, -pitch};
  for (int row = 0; row < 2; ++row)
    for (int col = 0; col < 3; ++col) layout.electrode_centers[row * 3 + col] = Vec3(xs[row], ys[col], 0.0);
  layout.validate();
  return layout;
}

void SensorLayout::validate() const {
  if (samples_per_electrode < 1) throw InvalidArgument("samples_per_electrode must be >= 1");
  if (!(electrode_edge > 0.0)) throw InvalidArgument("electrode edge must be positive");
  for (std::size_t i = 0; i < kChannels; ++i)
    for (std::size_t j = i + 1; j < kChannels; ++j) {
      const Vec3 d = electrode_centers[i] - electrode_centers[j];
      if (std::max(std::abs(d.x()), std::abs(d.y())) < electrode_edge - 1e-12)
        throw InvalidArgument("electrodes overlap: pitch smaller than electrode edge");
    }
}

std::string_view to_string(Material m) { return m == Material::air_gown ? "air_gown" : "wet_cloth"; }

Material material_from_string(std::string_view s) {
  if (s == "air_gown") return Material::air_gown;
  if (s == "wet_cloth") return Material::wet_cloth;
  throw InvalidArgument("unknown material mode: " + std::string(s));
}

MaterialMode MaterialMode::defaults(Material kind) {
  MaterialMode m;
  m.kind = kind;
  if (kind == Material::wet_cloth) {
    m.alpha = 6.0e-2;
    m.beta = 0.005;
    m.baseline = 3.0;
    m.noise_sigma = 0.02;
  }
  return m;
}

void MaterialMode::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("alpha and beta must be positive");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
  if (!(crosstalk_kappa >= 0.0 && crosstalk_kappa < 0.5)) throw InvalidArgument("kappa must lie in [0, 0.5)");
}

const std::array<std::array<double, kChannels>, kChannels>& electrode_adjacency() {
  static const auto adjacency = [] {
    std::array<std::array<double, kChannels>, kChannels> a{};
    for (int i = 0; i < 6; ++i) {
      const int row = i / 3, col = i % 3;
      std::vector<int> nbrs;
      if (col > 0) nbrs.push_back(i - 1);
      if (col < 2) nbrs.push_back(i + 1);
      nbrs.push_back((1 - row) * 3 + col);
      for (int j : nbrs) a[i][j] = 1.0 / static_cast<double>(nbrs.size());
    }
    return a;
  }();
  return adjacency;
}

std::array<double, kChannels> ideal_capacitance(const LimbModel& limb, const EePose& ee,
                                                const SensorLayout& layout, const MaterialMode& mode) {
  const int k = layout.samples_per_electrode;
  const double cell = layout.electrode_edge / k;
  std::array<double, kChannels> out{};
  for (std::size_t e = 0; e < kChannels; ++e) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const Vec3 local = layout.electrode_centers[e] +
                           Vec3((i + 0.5) * cell - layout.electrode_edge / 2.0,
                                (j + 0.5) * cell - layout.electrode_edge / 2.0, 0.0);
        const Vec3 world = ee.position + ee.orientation * local;
        const double d = std::max(surface_distance(limb, world), kMinElectrodeDistance);
        sum += mode.alpha / (d + mode.beta);
      }
    }
    out[e] = sum / static_cast<double>(k * k);
  }
  return out;
}

CapSample measure(const LimbModel& limb, const EePose& ee, const SensorLayout& layout,
                  const MaterialMode& mode, std::uint64_t rng_seed, std::int64_t t) {
  const auto ideal = ideal_capacitance(limb, ee, layout, mode);
  const auto& adj = electrode_adjacency();

  std::mt19937_64 gen(splitmix64(rng_seed));
  std::normal_distribution<double> noise(0.0, 1.0);

  CapSample s;
  s.t = t;
  for (std::size_t i = 0; i < kChannels; ++i) {
    double mixed = ideal[i];
    for (std::size_t j = 0; j < kChannels; ++j) mixed += mode.crosstalk_kappa * adj[i][j] * ideal[j];
    s.c[i] = mixed + mode.baseline;
  }
  if (mode.noise_sigma > 0.0)
    for (auto& c : s.c) c += mode.noise_sigma * noise(gen);
  return s;
}

std::optional<std::vector<double>> CapWindow::push(const CapSample& s) {
  ring_[head_] = s.c;
  head_ = (head_ + 1) % kWindowSteps;
  ++count_;
  if (!full()) return std::nullopt;
  std::vector<double> flat(kWindowSize);
  flatten_into(flat.data());
  return flat;
}

void CapWindow::flatten_into(double* out) const {
  // Once full, head_ points at the oldest sample.
  for (std::size_t step = 0; step < kWindowSteps; ++step) {
    const auto& c = ring_[(head_ + step) % kWindowSteps];
    std::copy(c.begin(), c.end(), out + step * kChannels);
  }
}

void CapWindow::clear() {
  head_ = 0;
  count_ = 0;
}

}  // namespace captrack
