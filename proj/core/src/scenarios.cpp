#include "captrack/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "captrack/errors.hpp"
#include "captrack/rng.hpp"

namespace captrack {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(int line, const std::string& what) {
  throw InvalidArgument("scenario line " + std::to_string(line) + ": " + what);
}

double to_double(std::string_view v, int line) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    bad_line(line, "expected a number, got '" + std::string(v) + "'");
  return out;
}

long long to_int(std::string_view v, int line) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_line(line, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

Vec4 to_vec4(std::string_view v, int line) {
  Vec4 out;
  for (int k = 0; k < 4; ++k) {
    const auto comma = v.find(',');
    if ((k < 3) == (comma == std::string_view::npos)) bad_line(line, "expected four comma-separated numbers");
    out[k] = to_double(trim(v.substr(0, comma)), line);
    v = k < 3 ? v.substr(comma + 1) : std::string_view{};
  }
  return out;
}

template <typename F>
auto parse_enum(F&& f, std::string_view v, int line) {
  try {
    return f(v);
  } catch (const InvalidArgument& e) {
    bad_line(line, e.what());
  }
}

std::pair<double, double> length_range(LimbPreset p) {
  return p == LimbPreset::leg_bathing ? std::pair{0.83, 0.90} : std::pair{0.57, 0.59};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string_view to_string(LimbPreset p) {
  switch (p) {
    case LimbPreset::arm_dressing: return "arm_dressing";
    case LimbPreset::arm_bathing: return "arm_bathing";
    case LimbPreset::leg_bathing: return "leg_bathing";
  }
  return "?";
}

LimbPreset limb_preset_from_string(std::string_view s) {
  for (auto p : {LimbPreset::arm_dressing, LimbPreset::arm_bathing, LimbPreset::leg_bathing})
    if (to_string(p) == s) return p;
  throw InvalidArgument("unknown limb preset: " + std::string(s));
}

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::still: return "static";
    case Motion::vertical: return "vertical";
    case Motion::lateral: return "lateral";
    case Motion::live: return "live";
  }
  return "?";
}

Motion motion_from_string(std::string_view s) {
  for (auto m : {Motion::still, Motion::vertical, Motion::lateral, Motion::live})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown motion: " + std::string(s));
}

void Scenario::validate() const {
  if (trials < 1) throw InvalidArgument("trials must be >= 1");
  if (!(amplitude >= 0.0 && amplitude <= kMaxHandDisplacement))
    throw InvalidArgument("motion amplitude must lie in [0, 0.20] m");
  if (!(period > 0.0)) throw InvalidArgument("motion period must be positive");
  if (limb_length && !(*limb_length > 0.0)) throw InvalidArgument("limb length must be positive");
  if ((proximal_radius && !(*proximal_radius > 0.0)) || (distal_radius && !(*distal_radius > 0.0)))
    throw InvalidArgument("radii must be positive");
  mode.validate();
  layout.validate();
  control.validate();
}

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  std::optional<Material> mode_kind;
  std::map<std::string, double> mode_overrides;
  std::optional<double> pitch;
  std::optional<double> cloth_k, cloth_rest;
  std::map<std::string, int> seen;

  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad_line(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (value.empty()) bad_line(line_no, "missing value for '" + key + "'");
    if (seen.count(key)) bad_line(line_no, "duplicate key '" + key + "'");
    seen[key] = line_no;

    if (key == "name") s.name = std::string(value);
    else if (key == "limb") s.limb = parse_enum(limb_preset_from_string, value, line_no);
    else if (key == "limb_length") s.limb_length = to_double(value, line_no);
    else if (key == "proximal_radius") s.proximal_radius = to_double(value, line_no);
    else if (key == "distal_radius") s.distal_radius = to_double(value, line_no);
    else if (key == "joint_bend_deg") s.joint_bend = to_double(value, line_no) * kDeg;
    else if (key == "motion") s.motion = parse_enum(motion_from_string, value, line_no);
    else if (key == "amplitude") s.amplitude = to_double(value, line_no);
    else if (key == "period") s.period = to_double(value, line_no);
    else if (key == "lateral_bend_amplitude_deg") s.lateral_bend_amplitude = to_double(value, line_no) * kDeg;
    else if (key == "mode") mode_kind = parse_enum(material_from_string, value, line_no);
    else if (key == "alpha" || key == "beta" || key == "baseline" || key == "noise_sigma" || key == "kappa")
      mode_overrides[key] = to_double(value, line_no);
    else if (key == "pitch") pitch = to_double(value, line_no);
    else if (key == "task") s.control.task = parse_enum(task_from_string, value, line_no);
    else if (key == "gains") s.control.gains = parse_enum(gains_from_string, value, line_no);
    else if (key == "y_desired") s.control.y_desired = RelPose::from_vector(to_vec4(value, line_no));
    else if (key == "traversal_speed") s.control.traversal_speed = to_double(value, line_no);
    else if (key == "tau") s.control.tau = static_cast<int>(to_int(value, line_no));
    else if (key == "force_threshold") s.control.force_threshold = to_double(value, line_no);
    else if (key == "cloth_stiffness") cloth_k = to_double(value, line_no);
    else if (key == "cloth_rest_thickness") cloth_rest = to_double(value, line_no);
    else if (key == "start_arclength") s.control.start_arclength = to_double(value, line_no);
    else if (key == "trials") s.trials = static_cast<int>(to_int(value, line_no));
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_int(value, line_no));
    else bad_line(line_no, "unknown key '" + key + "'");
  }

  s.mode = MaterialMode::defaults(mode_kind.value_or(Material::air_gown));
  for (const auto& [k, v] : mode_overrides) {
    if (k == "alpha") s.mode.alpha = v;
    if (k == "beta") s.mode.beta = v;
    if (k == "baseline") s.mode.baseline = v;
    if (k == "noise_sigma") s.mode.noise_sigma = v;
    if (k == "kappa") s.mode.crosstalk_kappa = v;
  }
  if (pitch) s.layout = SensorLayout::grid(*pitch);
  s.control.cloth = s.control.task == Task::bathing ? ClothParams::washcloth() : ClothParams::bare();
  if (cloth_k) s.control.cloth.stiffness = *cloth_k;
  if (cloth_rest) s.control.cloth.rest_thickness = *cloth_rest;
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string format_scenario(const Scenario& s) {
  std::ostringstream o;
  const auto& c = s.control;
  o << "name = " << s.name << '\n' << "limb = " << to_string(s.limb) << '\n';
  if (s.limb_length) o << "limb_length = " << fmt(*s.limb_length) << '\n';
  if (s.proximal_radius) o << "proximal_radius = " << fmt(*s.proximal_radius) << '\n';
  if (s.distal_radius) o << "distal_radius = " << fmt(*s.distal_radius) << '\n';
  if (s.joint_bend) o << "joint_bend_deg = " << fmt(*s.joint_bend / kDeg) << '\n';
  o << "motion = " << to_string(s.motion) << '\n'
    << "amplitude = " << fmt(s.amplitude) << '\n'
    << "period = " << fmt(s.period) << '\n'
    << "lateral_bend_amplitude_deg = " << fmt(s.lateral_bend_amplitude / kDeg) << '\n'
    << "mode = " << to_string(s.mode.kind) << '\n'
    << "alpha = " << fmt(s.mode.alpha) << '\n'
    << "beta = " << fmt(s.mode.beta) << '\n'
    << "baseline = " << fmt(s.mode.baseline) << '\n'
    << "noise_sigma = " << fmt(s.mode.noise_sigma) << '\n'
    << "kappa = " << fmt(s.mode.crosstalk_kappa) << '\n'
    << "pitch = " << fmt(s.layout.electrode_centers[0].y()) << '\n'
    << "task = " << to_string(c.task) << '\n';
  if (to_string(c.gains) == "custom") throw InvalidArgument("custom gains have no scenario-file form");
  o << "gains = " << to_string(c.gains) << '\n'
    << "y_desired = " << fmt(c.y_desired.p_y) << ", " << fmt(c.y_desired.p_z) << ", " << fmt(c.y_desired.theta_y)
    << ", " << fmt(c.y_desired.theta_z) << '\n'
    << "traversal_speed = " << fmt(c.traversal_speed) << '\n'
    << "tau = " << c.tau << '\n'
    << "force_threshold = " << fmt(c.force_threshold) << '\n'
    << "cloth_stiffness = " << fmt(c.cloth.stiffness) << '\n'
    << "cloth_rest_thickness = " << fmt(c.cloth.rest_thickness) << '\n'
    << "start_arclength = " << fmt(c.start_arclength) << '\n'
    << "trials = " << s.trials << '\n'
    << "seed = " << s.seed << '\n';
  return o.str();
}

LimbSpec scenario_limb_spec(const Scenario& s, double chain_length) {
  LimbSpec spec;
  switch (s.limb) {
    case LimbPreset::arm_dressing: spec = arm_dressing_spec(chain_length); break;
    case LimbPreset::arm_bathing: spec = arm_bathing_spec(chain_length); break;
    case LimbPreset::leg_bathing: spec = leg_bathing_spec(chain_length); break;
  }
  if (s.proximal_radius) spec.proximal_radius = *s.proximal_radius;
  if (s.distal_radius) spec.distal_radius = *s.distal_radius;
  if (s.joint_bend) spec.bend = *s.joint_bend;
  return spec;
}

std::uint64_t trial_seed(const Scenario& s, int trial) { return derive_seed(s.seed, static_cast<std::uint64_t>(trial)); }

double trial_limb_length(const Scenario& s, int trial) {
  if (s.limb_length) return *s.limb_length;
  const auto [lo, hi] = length_range(s.limb);
  std::mt19937_64 gen(splitmix64(derive_seed(trial_seed(s, trial), 7)));
  return uniform(gen, lo, hi);
}

double hand_displacement(const Scenario& s, const LimbSpec& spec, const LimbJoints& joints) {
  const Vec3 rest = limb_endpoints(spec).tip;
  const Vec3 d = limb_endpoints(spec, joints).tip - rest;
  switch (s.motion) {
    case Motion::vertical: return d.z();
    case Motion::lateral: return d.dot(rest_lateral_direction(spec));
    default: return d.norm();
  }
}

LimbJoints motion_joints(const Scenario& s, const LimbSpec& spec, double t) {
  LimbJoints j;
  const double phase = std::sin(2.0 * std::numbers::pi * t / s.period);
  const double target = s.amplitude * phase;
  if (s.motion == Motion::vertical) {
    // Tip height over the pivot is h0 cos(tilt) + r sin(tilt).
    const Vec3 rel = limb_endpoints(spec).tip - spec.pivot;
    const double r = std::hypot(rel.x(), rel.y());
    const double h0 = rel.z();
    const double rho = std::hypot(r, h0);
    const double psi = std::atan2(h0, r);
    j.tilt = std::asin(std::clamp((h0 + target) / rho, -1.0, 1.0)) - psi;
  } else if (s.motion == Motion::lateral) {
    j.bend = s.lateral_bend_amplitude * phase;
    // Lateral tip offset grows monotonically with shoulder yaw; bisect.
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      j.yaw = mid;
      (hand_displacement(s, spec, j) < target ? lo : hi) = mid;
    }
    j.yaw = 0.5 * (lo + hi);
  }
  return j;
}

LimbModel animate_limb(const Scenario& s, const LimbSpec& spec, double t) {
  return build_limb(spec, motion_joints(s, spec, t));
}

TrialResult run_trial(const Scenario& s, const Estimator& estimator, int trial) {
  TrialResult r;
  r.trial = trial;
  r.seed = trial_seed(s, trial);
  r.chain_length = trial_limb_length(s, trial);
  const LimbSpec spec = scenario_limb_spec(s, r.chain_length);
  const auto max_steps = static_cast<std::int64_t>(
      4.0 * r.chain_length / std::max(s.control.traversal_speed, 1e-3) / kSamplePeriod);
  r.log = run_control_loop([&](double t) { return animate_limb(s, spec, t); }, estimator, s.control, s.layout, s.mode,
                           r.seed, max_steps);
  return r;
}

ScenarioResult run_scenario(const Scenario& s, const Estimator& estimator) {
  s.validate();
  ScenarioResult out;
  out.scenario = s;
  for (int k = 0; k < s.trials; ++k) out.trials.push_back(run_trial(s, estimator, k));
  out.report = build_report(out.trials);
  return out;
}

ScenarioResult run_scenario(const Scenario& s, const MlpParams& model) {
  if (model.trained_mode != s.mode.kind)
    throw ModeMismatch("model trained for " + std::string(to_string(model.trained_mode)) + " but scenario uses " +
                       std::string(to_string(s.mode.kind)));
  return run_scenario(s, model_estimator(model));
}

std::vector<double> resample(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::vector<double>& grid) {
  if (xs.size() != ys.size() || xs.empty()) throw InvalidArgument("resample needs matching non-empty inputs");
  std::vector<double> out;
  out.reserve(grid.size());
  std::size_t i = 0;
  for (double g : grid) {
    if (g <= xs.front()) {
      out.push_back(ys.front());
      continue;
    }
    if (g >= xs.back()) {
      out.push_back(ys.back());
      continue;
    }
    while (i + 1 < xs.size() && xs[i + 1] < g) ++i;
    while (i > 0 && xs[i] > g) --i;
    const double x0 = xs[i], x1 = xs[i + 1];
    if (g == x1) {
      out.push_back(ys[i + 1]);
    } else {
      const double w = x1 > x0 ? (g - x0) / (x1 - x0) : 0.0;
      out.push_back(ys[i] + w * (ys[i + 1] - ys[i]));
    }
  }
  return out;
}

ScenarioReport build_report(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw InvalidArgument("report needs at least one trial");
  ScenarioReport rep;
  rep.trials = static_cast<int>(trials.size());
  rep.min_contact_fraction = 1.0;
  std::vector<double> axis, pz, py, force;
  for (const auto& t : trials) {
    const auto& s = t.log.summary;
    rep.successes += s.success ? 1 : 0;
    rep.completed += s.completed ? 1 : 0;
    axis.push_back(s.mean_axis_distance);
    pz.push_back(s.mean_pred_p_z);
    py.push_back(s.mean_abs_pred_p_y);
    force.push_back(s.mean_force);
    rep.max_force = std::max(rep.max_force, s.max_force);
    rep.min_contact_fraction = std::min(rep.min_contact_fraction, s.contact_fraction);
  }
  rep.mean_axis_distance = mean_of(axis);
  rep.mean_pred_p_z = mean_of(pz);
  rep.mean_abs_pred_p_y = mean_of(py);
  rep.mean_force = mean_of(force);

  ScenarioTraces& tr = rep.traces;
  tr.progress.resize(kTracePoints);
  for (std::size_t k = 0; k < kTracePoints; ++k)
    tr.progress[k] = static_cast<double>(k) / static_cast<double>(kTracePoints - 1);

  const auto aggregate = [&](auto field, std::vector<double>& mean, std::vector<double>& sd) {
    std::vector<std::vector<double>> per_trial;
    for (const auto& t : trials) {
      const auto& steps = t.log.steps;
      if (steps.empty()) continue;
      const double span = steps.back().traversed - steps.front().traversed;
      std::vector<double> xs, ys;
      for (const auto& r : steps) {
        xs.push_back(span > 0.0 ? (r.traversed - steps.front().traversed) / span : 0.0);
        ys.push_back(field(r));
      }
      per_trial.push_back(resample(xs, ys, tr.progress));
    }
    mean.assign(kTracePoints, 0.0);
    sd.assign(kTracePoints, 0.0);
    if (per_trial.empty()) return;
    for (std::size_t k = 0; k < kTracePoints; ++k) {
      std::vector<double> col;
      for (const auto& p : per_trial) col.push_back(p[k]);
      mean[k] = mean_of(col);
      sd[k] = std_of(col, mean[k]);
    }
  };
  aggregate([](const StepRecord& r) { return r.axis_distance; }, tr.axis_mean, tr.axis_std);
  aggregate([](const StepRecord& r) { return r.predicted.p_z; }, tr.pred_p_z_mean, tr.pred_p_z_std);
  aggregate([](const StepRecord& r) { return r.predicted.p_y; }, tr.pred_p_y_mean, tr.pred_p_y_std);
  aggregate([](const StepRecord& r) { return r.force; }, tr.force_mean, tr.force_std);
  return rep;
}

namespace {

const char* kSummaryHeader =
    "trial,seed,chain_length,start_arclength,task,success,completed,abort,steps,mean_axis_distance,"
    "std_axis_distance,mean_force,max_force,contact_fraction,mean_pred_p_z,mean_abs_pred_p_y,completion_arclength";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void emit_report(const ScenarioResult& result, const std::filesystem::path& dir) {
  if (result.trials.empty()) throw InvalidArgument("cannot emit a report without trials");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory: " + dir.string());

  for (const auto& t : result.trials)
    write_trial_csv(t.log.steps, dir / ("trial_" + std::to_string(t.trial) + ".csv"));

  {
    std::ofstream out(dir / "summary.csv");
    if (!out) throw IoError("cannot write summary.csv in " + dir.string());
    out << kSummaryHeader << '\n';
    for (const auto& t : result.trials) {
      const auto& s = t.log.summary;
      out << t.trial << ',' << t.seed << ',' << fmt(t.chain_length) << ',' << fmt(result.scenario.control.start_arclength)
          << ',' << to_string(result.scenario.control.task) << ',' << (s.success ? 1 : 0) << ','
          << (s.completed ? 1 : 0) << ',' << to_string(s.abort) << ',' << s.steps << ',' << fmt(s.mean_axis_distance)
          << ',' << fmt(s.std_axis_distance) << ',' << fmt(s.mean_force) << ',' << fmt(s.max_force) << ','
          << fmt(s.contact_fraction) << ',' << fmt(s.mean_pred_p_z) << ',' << fmt(s.mean_abs_pred_p_y) << ','
          << fmt(s.completion_arclength) << '\n';
    }
    if (!out) throw IoError("write failed: summary.csv");
  }

  const ScenarioReport& rep = result.report;
  {
    std::ofstream out(dir / "traces.csv");
    if (!out) throw IoError("cannot write traces.csv in " + dir.string());
    out << "progress,axis_mean,axis_std,pred_p_z_mean,pred_p_z_std,pred_p_y_mean,pred_p_y_std,force_mean,force_std\n";
    const auto& tr = rep.traces;
    for (std::size_t k = 0; k < tr.progress.size(); ++k)
      out << fmt(tr.progress[k]) << ',' << fmt(tr.axis_mean[k]) << ',' << fmt(tr.axis_std[k]) << ','
          << fmt(tr.pred_p_z_mean[k]) << ',' << fmt(tr.pred_p_z_std[k]) << ',' << fmt(tr.pred_p_y_mean[k]) << ','
          << fmt(tr.pred_p_y_std[k]) << ',' << fmt(tr.force_mean[k]) << ',' << fmt(tr.force_std[k]) << '\n';
    if (!out) throw IoError("write failed: traces.csv");
  }

  {
    std::ofstream out(dir / "report.txt");
    if (!out) throw IoError("cannot write report.txt in " + dir.string());
    out << std::fixed << std::setprecision(4);
    out << "scenario            " << result.scenario.name << '\n'
        << "trials              " << rep.trials << '\n'
        << "successes           " << rep.successes << '\n'
        << "completed           " << rep.completed << '\n'
        << "mean axis distance  " << rep.mean_axis_distance << " m\n"
        << "mean predicted p_z  " << rep.mean_pred_p_z << " m\n"
        << "mean |predicted p_y| " << rep.mean_abs_pred_p_y << " m\n"
        << "mean force          " << rep.mean_force << " N\n"
        << "max force           " << rep.max_force << " N\n"
        << "min contact         " << rep.min_contact_fraction << '\n';
    for (const auto& t : result.trials) {
      const auto& s = t.log.summary;
      out << "trial " << t.trial << ": " << (s.success ? "success" : "failure") << ", abort=" << to_string(s.abort)
          << ", arclength " << s.completion_arclength << " / " << t.chain_length << " m\n";
    }
    if (!out) throw IoError("write failed: report.txt");
  }
}

std::vector<TrialResult> load_report_trials(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.csv");
  if (!in) throw IoError("cannot open summary.csv in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) throw IoError("unexpected summary.csv header");
  std::vector<TrialResult> trials;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 17) throw IoError("malformed summary.csv row");
    TrialResult t;
    try {
      t.trial = std::stoi(cells[0]);
      t.seed = std::stoull(cells[1]);
      t.chain_length = std::stod(cells[2]);
      const double start = std::stod(cells[3]);
      const Task task = task_from_string(cells[4]);
      const bool completed = cells[6] == "1";
      const AbortReason abort = abort_reason_from_string(cells[7]);
      t.log.steps = read_trial_csv(dir / ("trial_" + std::to_string(t.trial) + ".csv"));
      t.log.summary = summarize(t.log.steps, completed, abort, task, start);
    } catch (const std::invalid_argument&) {
      throw IoError("malformed summary.csv row");
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("malformed summary.csv row: ") + e.what());
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace captrack
