#include "captrack/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "captrack/binary_io.hpp"
#include "captrack/errors.hpp"
#include "captrack/rng.hpp"

namespace captrack {

namespace {

constexpr std::string_view kDatasetMagic{"CAPDSET\0", 8};
constexpr std::uint32_t kDatasetVersion = 1;

std::array<double, 2> random_direction(std::mt19937_64& gen, double norm) {
  const double phi = uniform(gen, 0.0, 2.0 * std::numbers::pi);
  return {norm * std::cos(phi), norm * std::sin(phi)};
}

}  // namespace

RelPose TargetSpace::sample(std::mt19937_64& gen) const {
  RelPose y;
  y.p_y = uniform(gen, p_y_min, p_y_max);
  y.p_z = uniform(gen, p_z_min, p_z_max);
  y.theta_y = uniform(gen, theta_min, theta_max);
  y.theta_z = uniform(gen, theta_min, theta_max);
  return y;
}

bool TargetSpace::contains(const RelPose& y, double expand) const {
  const auto in = [expand](double v, double lo, double hi) {
    const double pad = expand * (hi - lo);
    return std::isfinite(v) && v >= lo - pad && v <= hi + pad;
  };
  return in(y.p_y, p_y_min, p_y_max) && in(y.p_z, p_z_min, p_z_max) && in(y.theta_y, theta_min, theta_max) &&
         in(y.theta_z, theta_min, theta_max);
}

VelocitySpec VelocitySpec::sample(std::mt19937_64& gen) {
  VelocitySpec v;
  v.v_p = random_direction(gen, uniform(gen, kMinLinear, kMaxLinear));
  v.v_theta = random_direction(gen, uniform(gen, kMinAngular, kMaxAngular));
  return v;
}

std::string_view to_string(LimbSite s) {
  switch (s) {
    case LimbSite::wrist: return "wrist";
    case LimbSite::forearm: return "forearm";
    case LimbSite::upper_arm: return "upper_arm";
    case LimbSite::ankle: return "ankle";
    case LimbSite::shin: return "shin";
    case LimbSite::knee: return "knee";
  }
  return "?";
}

std::array<LimbSite, 3> sites_for(LimbKind kind) {
  if (kind == LimbKind::arm) return {LimbSite::wrist, LimbSite::forearm, LimbSite::upper_arm};
  return {LimbSite::ankle, LimbSite::shin, LimbSite::knee};
}

double site_fraction(LimbSite s) {
  switch (s) {
    case LimbSite::wrist:
    case LimbSite::ankle: return 0.15;
    case LimbSite::forearm:
    case LimbSite::shin: return 0.30;
    case LimbSite::upper_arm:
    case LimbSite::knee: return 0.80;
  }
  return 0.5;
}

void Dataset::append(std::span<const double> window, const RelPose& y, LimbSite site, Material mode,
                     std::uint32_t iteration) {
  if (window.size() != kWindowSize) throw InvalidArgument("window must have 300 entries");
  windows_.insert(windows_.end(), window.begin(), window.end());
  targets_.push_back(y);
  sites_.push_back(site);
  modes_.push_back(mode);
  iterations_.push_back(iteration);
}

void Dataset::append(const Dataset& other) {
  windows_.insert(windows_.end(), other.windows_.begin(), other.windows_.end());
  targets_.insert(targets_.end(), other.targets_.begin(), other.targets_.end());
  sites_.insert(sites_.end(), other.sites_.begin(), other.sites_.end());
  modes_.insert(modes_.end(), other.modes_.begin(), other.modes_.end());
  iterations_.insert(iterations_.end(), other.iterations_.begin(), other.iterations_.end());
}

void Dataset::reserve(std::size_t n) {
  windows_.reserve(n * kWindowSize);
  targets_.reserve(n);
  sites_.reserve(n);
  modes_.reserve(n);
  iterations_.reserve(n);
}

void collect_site(const LimbModel& limb, double site_anchor, const MaterialMode& mode, std::uint32_t n_iters,
                  std::uint64_t seed, const CollectOptions& opts, const RecordSink& sink) {
  if (!(site_anchor >= 0.0 && site_anchor <= limb.chain_length()))
    throw AnchorOutOfRange("site anchor outside the limb chain");
  if (n_iters < 1) throw InvalidArgument("n_iters must be >= 1");

  std::mt19937_64 gen(splitmix64(seed));
  CapWindow window;
  std::vector<double> flat(kWindowSize);
  std::int64_t t = 0;
  Vec4 y = Vec4::Zero();

  const auto reached = [&](const Vec4& cur, const Vec4& target) {
    const Vec4 err = (cur - target).cwiseAbs();
    return err[0] < opts.position_tolerance && err[1] < opts.position_tolerance && err[2] < opts.angle_tolerance &&
           err[3] < opts.angle_tolerance;
  };

  for (std::uint32_t iter = 0; iter < n_iters; ++iter) {
    const Vec4 target = opts.space.sample(gen).as_vector();
    const VelocitySpec vel = VelocitySpec::sample(gen);
    const Vec4 start = y;
    const Vec4 delta = target - start;
    // Straight line in (p, theta): the slower of the two motions sets the pace.
    const double duration = std::max(std::hypot(delta[0], delta[1]) / (vel.linear_speed() / 100.0),
                                     std::hypot(delta[2], delta[3]) / vel.angular_speed());

    for (std::int64_t k = 0; !reached(y, target); ++k, ++t) {
      const EePose ee = pose_from_rel(limb, site_anchor, RelPose::from_vector(y));
      window.push(measure(limb, ee, opts.layout, mode, derive_seed(seed, static_cast<std::uint64_t>(t)), t));
      if (t >= static_cast<std::int64_t>(kWindowSteps)) {
        window.flatten_into(flat.data());
        sink(flat, relative_pose(limb, ee), iter);
      }
      const double frac = std::min(1.0, static_cast<double>(k + 1) * kSamplePeriod / duration);
      y = frac >= 1.0 ? target : Vec4(start + frac * delta);
    }
  }
}

Dataset collect_site(const LimbModel& limb, LimbSite site, double site_anchor, const MaterialMode& mode,
                     std::uint32_t n_iters, std::uint64_t seed, const CollectOptions& opts) {
  Dataset d;
  d.metadata = {seed, n_iters, kSampleRateHz};
  collect_site(limb, site_anchor, mode, n_iters, seed, opts,
               [&](std::span<const double> w, const RelPose& y, std::uint32_t iter) {
                 d.append(w, y, site, mode.kind, iter);
               });
  return d;
}

Dataset collect_limb(LimbKind kind, const MaterialMode& mode, std::uint32_t n_iters, std::uint64_t seed,
                     const CollectOptions& opts) {
  const LimbModel limb = build_limb(collection_spec(kind));
  Dataset out;
  out.metadata = {seed, n_iters, kSampleRateHz};
  out.reserve(static_cast<std::size_t>(n_iters) * 3 * 220);
  std::uint64_t stream = kind == LimbKind::arm ? 0 : 3;
  for (LimbSite site : sites_for(kind)) {
    const double anchor = site_fraction(site) * limb.chain_length();
    out.append(collect_site(limb, site, anchor, mode, n_iters, derive_seed(seed, stream++), opts));
  }
  return out;
}

bool is_validation_iteration(std::uint32_t iteration) { return iteration % 10 == 9; }

// Layout (little-endian):
//   "CAPDSET\0" | u32 version | u64 seed | u32 n_iters | f64 sample_rate_hz |
//   u64 n_records | u32 window_size |
//   n_records x { f64 p_y, p_z, theta_y, theta_z | u8 site | u8 mode | u32 iteration | f64[300] window } |
//   u32 crc32 of all preceding bytes
void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  io::Writer w;
  w.reserve(64 + d.size() * (kWindowSize * 8 + 40));
  w.put_bytes(kDatasetMagic.data(), kDatasetMagic.size());
  w.put(kDatasetVersion);
  w.put(d.metadata.seed);
  w.put(d.metadata.n_iters);
  w.put(d.metadata.sample_rate_hz);
  w.put(static_cast<std::uint64_t>(d.size()));
  w.put(static_cast<std::uint32_t>(kWindowSize));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const RelPose& y = d.target(i);
    w.put(y.p_y);
    w.put(y.p_z);
    w.put(y.theta_y);
    w.put(y.theta_z);
    w.put(static_cast<std::uint8_t>(d.site(i)));
    w.put(static_cast<std::uint8_t>(d.mode(i)));
    w.put(d.iteration(i));
    w.put_span(d.window(i));
  }
  w.write_file(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path, kDatasetMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) throw VersionMismatch("unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.metadata.seed = r.get<std::uint64_t>();
  d.metadata.n_iters = r.get<std::uint32_t>();
  d.metadata.sample_rate_hz = r.get<double>();
  const auto n = r.get<std::uint64_t>();
  if (r.get<std::uint32_t>() != kWindowSize) throw VersionMismatch("unexpected window size");
  if (n > r.remaining()) throw IoError("record count exceeds file size");
  d.reserve(n);
  std::vector<double> window(kWindowSize);
  for (std::uint64_t i = 0; i < n; ++i) {
    RelPose y;
    y.p_y = r.get<double>();
    y.p_z = r.get<double>();
    y.theta_y = r.get<double>();
    y.theta_z = r.get<double>();
    const auto site = r.get<std::uint8_t>();
    const auto mode = r.get<std::uint8_t>();
    const auto iteration = r.get<std::uint32_t>();
    if (site > static_cast<std::uint8_t>(LimbSite::knee) || mode > 1) throw IoError("corrupt record");
    r.get_span(std::span<double>(window));
    d.append(window, y, static_cast<LimbSite>(site), static_cast<Material>(mode), iteration);
  }
  if (r.remaining() != 0) throw IoError("trailing bytes after records");
  return d;
}

void export_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "site,mode,iteration,p_y,p_z,theta_y,theta_z";
  for (std::size_t step = 0; step < kWindowSteps; ++step)
    for (std::size_t ch = 0; ch < kChannels; ++ch) out << ",c" << step << "_" << ch;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const RelPose& y = d.target(i);
    out << to_string(d.site(i)) << ',' << to_string(d.mode(i)) << ',' << d.iteration(i) << ',' << y.p_y << ','
        << y.p_z << ',' << y.theta_y << ',' << y.theta_z;
    for (double c : d.window(i)) out << ',' << c;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace captrack
