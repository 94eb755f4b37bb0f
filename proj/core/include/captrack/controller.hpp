#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "captrack/geometry.hpp"
#include "captrack/regressor.hpp"
#include "captrack/sensor.hpp"

namespace captrack {

/// Diagonal PD gains over (p_y, p_z, theta_y, theta_z).
struct Gains {
  Vec4 kp = Vec4(0.025, 0.025, 0.1, 0.1);
  Vec4 kd = Vec4(0.0125, 0.0125, 0.025, 0.025);

  static Gains smooth();
  /// Stiffer position gains used when the limb moves.
  static Gains responsive();
  void validate() const;
};

std::string_view to_string(const Gains& g);  // "smooth", "responsive" or "custom"
Gains gains_from_string(std::string_view name);

/// Linear spring between the end-effector tool and the skin.
struct ClothParams {
  double stiffness = 600.0;        // N/m
  double rest_thickness = 0.015;   // m; 0 models a bare tool

  static ClothParams washcloth() { return {600.0, 0.015}; }
  static ClothParams bare() { return {600.0, 0.0}; }
};

enum class Task { dressing, bathing };
std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

struct ControlConfig {
  RelPose y_desired{0.0, 0.05, 0.0, 0.0};
  Gains gains = Gains::smooth();
  double traversal_speed = 0.02;  // m/s along X_ee
  int tau = 10;                   // sensing steps per action update
  double force_threshold = 10.0;  // N
  ClothParams cloth = ClothParams::bare();
  Task task = Task::dressing;
  /// Arclength along the chain where the end effector starts.
  double start_arclength = 0.03;

  double action_dt() const { return tau * kSamplePeriod; }
  void validate() const;
};

enum class AbortReason { none, force_breach, model_non_finite, degenerate_frame };
std::string_view to_string(AbortReason r);
AbortReason abort_reason_from_string(std::string_view s);

struct ControlState {
  Vec4 e_prev = Vec4::Zero();
  bool has_prev = false;
  Vec4 u = Vec4::Zero();
  RelPose estimate;
  double traversed = 0.0;
  bool aborted = false;
  AbortReason reason = AbortReason::none;
  bool completed = false;
};

/// Tracking error y_desired - y_hat.
Vec4 compute_error(const RelPose& y_desired, const RelPose& y_hat);

/// PD action u = Kp e + Kd (e - e_prev) / dt as a per-update increment.
Vec4 compute_action(const Vec4& e, const Vec4& e_prev, double dt, const Gains& g);

/// Largest translational step the controller may issue for errors inside the
/// collection target space.
double max_translation_step(const Gains& g, double dt);
double max_rotation_step(const Gains& g, double dt);

/// Applies action `u` in the limb frame implied by the estimate `y_hat`:
/// translation u_y along Y, u_z along Z, and the relative yaw/pitch moved to
/// theta_hat + u_theta. Throws DegenerateFrame when the implied axis is
/// vertical.
EePose transform_action(const Vec4& u, const EePose& ee, const RelPose& y_hat);

/// Moves the end effector `distance` along its own X axis.
EePose advance(const EePose& ee, double distance);

/// Spring force k * max(0, rest - gap), gap = signed clearance of the tool
/// plane above the skin.
double contact_force(const LimbModel& limb, const EePose& ee, const ClothParams& cloth);

/// Estimator called on action steps. Receives the flattened window plus the
/// simulation state so test doubles can return the ground truth.
using Estimator = std::function<RelPose(std::span<const double> window, const LimbModel& limb, const EePose& ee)>;

Estimator model_estimator(const MlpParams& params);
Estimator oracle_estimator();

struct StepRecord {
  double t = 0.0;
  EePose ee;
  RelPose truth;
  RelPose predicted;  // latest estimate, held between action steps
  std::array<double, kChannels> c{};
  double force = 0.0;
  Vec4 u = Vec4::Zero();
  double axis_distance = 0.0;
  double traversed = 0.0;
  bool action_step = false;
};

struct TrialSummary {
  bool success = false;
  bool completed = false;
  AbortReason abort = AbortReason::none;
  std::size_t steps = 0;
  double mean_axis_distance = 0.0;
  double std_axis_distance = 0.0;
  double mean_force = 0.0;
  double max_force = 0.0;
  double contact_fraction = 0.0;
  double mean_pred_p_z = 0.0;      // over action steps
  double mean_abs_pred_p_y = 0.0;  // over action steps
  double completion_arclength = 0.0;
};

struct TrialLog {
  std::vector<StepRecord> steps;
  TrialSummary summary;
};

/// Summary statistics from the records plus the loop outcome. Bathing
/// success additionally needs contact on at least 95% of steps.
TrialSummary summarize(const std::vector<StepRecord>& steps, bool completed, AbortReason abort, Task task,
                       double start_arclength);

inline constexpr double kContactCoverage = 0.95;

/// Stepwise contour follower. The caller supplies the limb for each sensing
/// step, which lets offline scenarios and the live service share one loop.
class ContourFollower {
 public:
  ContourFollower(const LimbModel& initial_limb, const ControlConfig& cfg, const SensorLayout& layout,
                  const MaterialMode& mode, Estimator estimator, std::uint64_t seed);

  /// Runs one sensing step against `limb`. Returns false once finished.
  bool step(const LimbModel& limb);
  bool finished() const { return state_.aborted || state_.completed; }

  const ControlState& state() const { return state_; }
  const ControlConfig& config() const { return cfg_; }
  void set_gains(const Gains& g);
  const EePose& pose() const { return ee_; }
  const std::vector<StepRecord>& records() const { return records_; }
  std::int64_t step_index() const { return step_; }
  double time() const { return static_cast<double>(step_) * kSamplePeriod; }

  TrialLog finish() const;

 private:
  ControlConfig cfg_;
  SensorLayout layout_;
  MaterialMode mode_;
  Estimator estimator_;
  std::uint64_t seed_;
  ControlState state_;
  EePose ee_;
  CapWindow window_;
  std::vector<double> flat_;
  std::vector<StepRecord> records_;
  std::int64_t step_ = 0;
  double chain_length_ = 0.0;
};

using LimbTrajectory = std::function<LimbModel(double t)>;

/// Runs the follower until traversal completes or the loop aborts.
/// `max_steps` guards against a stalled limb trajectory.
TrialLog run_control_loop(const LimbTrajectory& limb_at, const Estimator& estimator, const ControlConfig& cfg,
                          const SensorLayout& layout, const MaterialMode& mode, std::uint64_t seed,
                          std::int64_t max_steps = 1'000'000);

/// Per-step CSV. Columns:
///   t, x, y, z, r00..r22 (row-major orientation), true_p_y, true_p_z,
///   true_theta_y, true_theta_z, pred_p_y, pred_p_z, pred_theta_y,
///   pred_theta_z, c0..c5, force, u_y, u_z, u_theta_y, u_theta_z,
///   axis_distance, traversed, action_step
void write_trial_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path);
std::vector<StepRecord> read_trial_csv(const std::filesystem::path& path);
const std::vector<std::string>& trial_csv_columns();

}  // namespace captrack
