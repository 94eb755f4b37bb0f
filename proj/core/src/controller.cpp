#include "captrack/controller.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "captrack/errors.hpp"
#include "captrack/rng.hpp"

namespace captrack {

namespace {

// Largest error magnitudes inside the collection target space.
constexpr double kMaxPositionError = 0.25;  // hypot(0.20, 0.15)
constexpr double kMaxAngleError = 0.7854;   // pi / 4

bool all_finite(const Vec4& v) { return v.allFinite(); }

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("bad number in trial CSV: " + std::string(s));
  return v;
}

}  // namespace

Gains Gains::smooth() { return {}; }

Gains Gains::responsive() {
  Gains g;
  g.kp = Vec4(0.2, 0.2, 0.1, 0.1);
  return g;
}

void Gains::validate() const {
  if (!(kp.array() >= 0.0).all() || !(kd.array() >= 0.0).all() || !kp.allFinite() || !kd.allFinite())
    throw InvalidArgument("gains must be finite and non-negative");
}

std::string_view to_string(const Gains& g) {
  const Gains s = Gains::smooth(), r = Gains::responsive();
  if (g.kp == s.kp && g.kd == s.kd) return "smooth";
  if (g.kp == r.kp && g.kd == r.kd) return "responsive";
  return "custom";
}

Gains gains_from_string(std::string_view name) {
  if (name == "smooth") return Gains::smooth();
  if (name == "responsive") return Gains::responsive();
  throw InvalidArgument("unknown gains preset: " + std::string(name));
}

std::string_view to_string(Task t) { return t == Task::dressing ? "dressing" : "bathing"; }

Task task_from_string(std::string_view s) {
  if (s == "dressing") return Task::dressing;
  if (s == "bathing") return Task::bathing;
  throw InvalidArgument("unknown task: " + std::string(s));
}

std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::none: return "none";
    case AbortReason::force_breach: return "force_breach";
    case AbortReason::model_non_finite: return "model_non_finite";
    case AbortReason::degenerate_frame: return "degenerate_frame";
  }
  return "?";
}

AbortReason abort_reason_from_string(std::string_view s) {
  for (auto r : {AbortReason::none, AbortReason::force_breach, AbortReason::model_non_finite,
                 AbortReason::degenerate_frame})
    if (to_string(r) == s) return r;
  throw InvalidArgument("unknown abort reason: " + std::string(s));
}

void ControlConfig::validate() const {
  gains.validate();
  if (tau < 1) throw InvalidArgument("tau must be >= 1");
  if (!(force_threshold > 0.0)) throw InvalidArgument("force threshold must be positive");
  if (!(traversal_speed >= 0.0)) throw InvalidArgument("traversal speed must be non-negative");
  if (!(cloth.stiffness >= 0.0) || !(cloth.rest_thickness >= 0.0)) throw InvalidArgument("invalid cloth parameters");
  if (!all_finite(y_desired.as_vector())) throw InvalidArgument("desired offset must be finite");
}

Vec4 compute_error(const RelPose& y_desired, const RelPose& y_hat) { return y_desired.as_vector() - y_hat.as_vector(); }

Vec4 compute_action(const Vec4& e, const Vec4& e_prev, double dt, const Gains& g) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  return g.kp.cwiseProduct(e) + g.kd.cwiseProduct(e - e_prev) / dt;
}

double max_translation_step(const Gains& g, double dt) {
  return std::max(g.kp[0], g.kp[1]) * kMaxPositionError + std::max(g.kd[0], g.kd[1]) * 2.0 * kMaxPositionError / dt;
}

double max_rotation_step(const Gains& g, double dt) {
  return std::max(g.kp[2], g.kp[3]) * kMaxAngleError + std::max(g.kd[2], g.kd[3]) * 2.0 * kMaxAngleError / dt;
}

EePose transform_action(const Vec4& u, const EePose& ee, const RelPose& y_hat) {
  const Mat3 rel = yaw_pitch_rotation(y_hat.theta_y, y_hat.theta_z);
  const Vec3 axis = ee.orientation * rel.transpose() * Vec3::UnitX();
  const Mat3 frame = limb_frame(axis);
  EePose out;
  out.position = ee.position + u[0] * frame.col(1) + u[1] * frame.col(2);
  out.orientation = frame * yaw_pitch_rotation(y_hat.theta_y + u[2], y_hat.theta_z + u[3]);
  return out;
}

EePose advance(const EePose& ee, double distance) {
  EePose out = ee;
  out.position += distance * ee.x_axis();
  return out;
}

double contact_force(const LimbModel& limb, const EePose& ee, const ClothParams& cloth) {
  const double gap = surface_distance(limb, ee.position);
  return cloth.stiffness * std::max(0.0, cloth.rest_thickness - gap);
}

Estimator model_estimator(const MlpParams& params) {
  return [params](std::span<const double> window, const LimbModel&, const EePose&) { return predict(params, window); };
}

Estimator oracle_estimator() {
  return [](std::span<const double>, const LimbModel& limb, const EePose& ee) { return relative_pose(limb, ee); };
}

TrialSummary summarize(const std::vector<StepRecord>& steps, bool completed, AbortReason abort, Task task,
                       double start_arclength) {
  TrialSummary s;
  s.completed = completed;
  s.abort = abort;
  s.steps = steps.size();
  s.completion_arclength = start_arclength + (steps.empty() ? 0.0 : steps.back().traversed);
  if (!steps.empty()) {
    double sum = 0.0, force = 0.0;
    std::size_t contact = 0;
    for (const auto& r : steps) {
      sum += r.axis_distance;
      force += r.force;
      s.max_force = std::max(s.max_force, r.force);
      if (r.force > 0.0) ++contact;
    }
    const double n = static_cast<double>(steps.size());
    s.mean_axis_distance = sum / n;
    double sq = 0.0;
    for (const auto& r : steps) sq += (r.axis_distance - s.mean_axis_distance) * (r.axis_distance - s.mean_axis_distance);
    s.std_axis_distance = std::sqrt(sq / n);
    s.mean_force = force / n;
    s.contact_fraction = static_cast<double>(contact) / n;

    double pz = 0.0, py = 0.0;
    std::size_t actions = 0;
    for (const auto& r : steps) {
      if (!r.action_step) continue;
      pz += r.predicted.p_z;
      py += std::abs(r.predicted.p_y);
      ++actions;
    }
    if (actions > 0) {
      s.mean_pred_p_z = pz / static_cast<double>(actions);
      s.mean_abs_pred_p_y = py / static_cast<double>(actions);
    }
  }
  s.success = completed && abort == AbortReason::none;
  if (task == Task::bathing) s.success = s.success && s.contact_fraction >= kContactCoverage;
  return s;
}

ContourFollower::ContourFollower(const LimbModel& initial_limb, const ControlConfig& cfg, const SensorLayout& layout,
                                 const MaterialMode& mode, Estimator estimator, std::uint64_t seed)
    : cfg_(cfg), layout_(layout), mode_(mode), estimator_(std::move(estimator)), seed_(seed),
      flat_(kWindowSize) {
  cfg_.validate();
  layout_.validate();
  mode_.validate();
  initial_limb.validate();
  if (!estimator_) throw InvalidArgument("estimator is empty");
  chain_length_ = initial_limb.chain_length();
  ee_ = pose_from_rel(initial_limb, cfg_.start_arclength, cfg_.y_desired);
  state_.estimate = cfg_.y_desired;
  // The end effector hovers at the start pose until the window is full.
  const std::uint64_t prefill_seed = derive_seed(seed_, 1);
  for (std::size_t k = 0; k < kWindowSteps; ++k) {
    const auto t = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(kWindowSteps);
    window_.push(measure(initial_limb, ee_, layout_, mode_, derive_seed(prefill_seed, k), t));
  }
}

bool ContourFollower::step(const LimbModel& limb) {
  if (finished()) return false;

  StepRecord rec;
  rec.t = time();
  rec.ee = ee_;
  const CapSample sample =
      measure(limb, ee_, layout_, mode_, derive_seed(derive_seed(seed_, 0), static_cast<std::uint64_t>(step_)), step_);
  rec.c = sample.c;
  window_.push(sample);
  rec.force = contact_force(limb, ee_, cfg_.cloth);
  rec.axis_distance = distance_to_limb_axis(limb, ee_.position);
  rec.traversed = state_.traversed;

  const auto stop = [&](AbortReason reason) {
    state_.aborted = true;
    state_.reason = reason;
    state_.u = Vec4::Zero();
    rec.predicted = state_.estimate;
    records_.push_back(rec);
    ++step_;
    return false;
  };

  try {
    rec.truth = relative_pose(limb, ee_);
  } catch (const DegenerateFrame&) {
    return stop(AbortReason::degenerate_frame);
  }

  if (rec.force >= cfg_.force_threshold) return stop(AbortReason::force_breach);

  if (step_ % cfg_.tau == 0) {
    window_.flatten_into(flat_.data());
    RelPose y_hat;
    try {
      y_hat = estimator_(flat_, limb, ee_);
    } catch (const NonFiniteInput&) {
      return stop(AbortReason::model_non_finite);
    }
    if (!all_finite(y_hat.as_vector())) return stop(AbortReason::model_non_finite);

    const Vec4 e = compute_error(cfg_.y_desired, y_hat);
    const Vec4 e_prev = state_.has_prev ? state_.e_prev : e;
    Vec4 u = compute_action(e, e_prev, cfg_.action_dt(), cfg_.gains);
    const double max_t = max_translation_step(cfg_.gains, cfg_.action_dt());
    const double t_norm = std::hypot(u[0], u[1]);
    if (t_norm > max_t) u.head<2>() *= max_t / t_norm;
    const double max_r = max_rotation_step(cfg_.gains, cfg_.action_dt());
    u[2] = std::clamp(u[2], -max_r, max_r);
    u[3] = std::clamp(u[3], -max_r, max_r);

    try {
      ee_ = transform_action(u, ee_, y_hat);
    } catch (const DegenerateFrame&) {
      return stop(AbortReason::degenerate_frame);
    }
    state_.e_prev = e;
    state_.has_prev = true;
    state_.u = u;
    state_.estimate = y_hat;
    rec.u = u;
    rec.action_step = true;
  }
  rec.predicted = state_.estimate;

  const double ds = cfg_.traversal_speed * kSamplePeriod;
  ee_ = advance(ee_, ds);
  state_.traversed += ds;
  records_.push_back(rec);
  ++step_;
  if (cfg_.start_arclength + state_.traversed >= chain_length_) state_.completed = true;
  return !finished();
}

void ContourFollower::set_gains(const Gains& g) {
  g.validate();
  cfg_.gains = g;
}

TrialLog ContourFollower::finish() const {
  TrialLog log;
  log.steps = records_;
  log.summary = summarize(records_, state_.completed, state_.reason, cfg_.task, cfg_.start_arclength);
  return log;
}

TrialLog run_control_loop(const LimbTrajectory& limb_at, const Estimator& estimator, const ControlConfig& cfg,
                          const SensorLayout& layout, const MaterialMode& mode, std::uint64_t seed,
                          std::int64_t max_steps) {
  ContourFollower follower(limb_at(0.0), cfg, layout, mode, estimator, seed);
  while (follower.step_index() < max_steps && follower.step(limb_at(follower.time()))) {
  }
  return follower.finish();
}

const std::vector<std::string>& trial_csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"t", "x", "y", "z"};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c.push_back("r" + std::to_string(i) + std::to_string(j));
    for (const char* p : {"true_", "pred_"})
      for (const char* f : {"p_y", "p_z", "theta_y", "theta_z"}) c.push_back(std::string(p) + f);
    for (std::size_t k = 0; k < kChannels; ++k) c.push_back("c" + std::to_string(k));
    for (const char* f : {"force", "u_y", "u_z", "u_theta_y", "u_theta_z", "axis_distance", "traversed", "action_step"})
      c.push_back(f);
    return c;
  }();
  return cols;
}

void write_trial_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  std::string line;
  const auto& cols = trial_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) line += (i ? "," : "") + cols[i];
  out << line << '\n';
  for (const auto& r : steps) {
    line.clear();
    const auto put = [&line](double v) {
      if (!line.empty()) line += ',';
      append_number(line, v);
    };
    put(r.t);
    for (int i = 0; i < 3; ++i) put(r.ee.position[i]);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) put(r.ee.orientation(i, j));
    for (const RelPose* p : {&r.truth, &r.predicted})
      for (int k = 0; k < 4; ++k) put(p->as_vector()[k]);
    for (double c : r.c) put(c);
    put(r.force);
    for (int k = 0; k < 4; ++k) put(r.u[k]);
    put(r.axis_distance);
    put(r.traversed);
    put(r.action_step ? 1.0 : 0.0);
    out << line << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<StepRecord> read_trial_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trial CSV: " + path.string());
  const auto& cols = trial_csv_columns();
  {
    std::string expected;
    for (std::size_t i = 0; i < cols.size(); ++i) expected += (i ? "," : "") + cols[i];
    if (line != expected) throw IoError("unexpected trial CSV header: " + path.string());
  }
  std::vector<StepRecord> steps;
  std::vector<double> v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    v.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      v.push_back(parse_number(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (v.size() != cols.size()) throw IoError("wrong column count in trial CSV: " + path.string());
    StepRecord r;
    std::size_t k = 0;
    r.t = v[k++];
    for (int i = 0; i < 3; ++i) r.ee.position[i] = v[k++];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.ee.orientation(i, j) = v[k++];
    r.truth = RelPose::from_vector(Vec4(v[k], v[k + 1], v[k + 2], v[k + 3]));
    k += 4;
    r.predicted = RelPose::from_vector(Vec4(v[k], v[k + 1], v[k + 2], v[k + 3]));
    k += 4;
    for (auto& c : r.c) c = v[k++];
    r.force = v[k++];
    for (int i = 0; i < 4; ++i) r.u[i] = v[k++];
    r.axis_distance = v[k++];
    r.traversed = v[k++];
    r.action_step = v[k++] != 0.0;
    steps.push_back(r);
  }
  return steps;
}

}  // namespace captrack
