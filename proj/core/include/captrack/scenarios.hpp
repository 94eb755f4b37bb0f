#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "captrack/controller.hpp"
#include "captrack/limbs.hpp"
#include "captrack/regressor.hpp"
#include "captrack/sensor.hpp"

namespace captrack {

enum class LimbPreset { arm_dressing, arm_bathing, leg_bathing };
std::string_view to_string(LimbPreset p);
LimbPreset limb_preset_from_string(std::string_view s);

enum class Motion { still, vertical, lateral, live };
std::string_view to_string(Motion m);
Motion motion_from_string(std::string_view s);

/// A configured experiment: limb, limb motion, sensing mode, controller and
/// trial count.
struct Scenario {
  std::string name = "scenario";
  LimbPreset limb = LimbPreset::arm_dressing;
  /// Fixed chain length; when unset each trial draws one from the preset's
  /// human range (arm 0.57-0.59 m, leg 0.83-0.90 m).
  std::optional<double> limb_length;
  std::optional<double> proximal_radius;
  std::optional<double> distal_radius;
  std::optional<double> joint_bend;  // rad, overrides the preset's bend

  Motion motion = Motion::still;
  double amplitude = 0.20;  // m, hand displacement along the motion axis
  double period = 8.0;      // s
  double lateral_bend_amplitude = 0.1745;  // rad of elbow modulation during lateral motion

  MaterialMode mode = MaterialMode::defaults(Material::air_gown);
  SensorLayout layout = SensorLayout::grid();
  ControlConfig control;
  int trials = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr double kMaxHandDisplacement = 0.20;

/// Parses the key-value scenario format. Throws InvalidArgument with the line
/// number on unknown keys or malformed values.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
std::string format_scenario(const Scenario& s);

/// Rest limb spec for a trial with the given chain length.
LimbSpec scenario_limb_spec(const Scenario& s, double chain_length);
/// Chain length used by trial `trial`.
double trial_limb_length(const Scenario& s, int trial);
std::uint64_t trial_seed(const Scenario& s, int trial);

/// Joint offsets of the scripted motion at time t. Live and still scenarios
/// return zero offsets.
LimbJoints motion_joints(const Scenario& s, const LimbSpec& spec, double t);
LimbModel animate_limb(const Scenario& s, const LimbSpec& spec, double t);

/// Hand displacement from the rest pose projected on the motion axis
/// (world-up for vertical, the rest lateral direction for lateral).
double hand_displacement(const Scenario& s, const LimbSpec& spec, const LimbJoints& joints);

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  double chain_length = 0.0;
  TrialLog log;
};

/// Mean and standard deviation of per-trial traces sampled on a common
/// progress axis (fraction of each trial's traversed span).
struct ScenarioTraces {
  std::vector<double> progress;
  std::vector<double> axis_mean, axis_std;
  std::vector<double> pred_p_z_mean, pred_p_z_std;
  std::vector<double> pred_p_y_mean, pred_p_y_std;
  std::vector<double> force_mean, force_std;
};

struct ScenarioReport {
  int trials = 0;
  int successes = 0;
  int completed = 0;
  double mean_axis_distance = 0.0;
  double mean_pred_p_z = 0.0;
  double mean_abs_pred_p_y = 0.0;
  double mean_force = 0.0;
  double max_force = 0.0;
  double min_contact_fraction = 0.0;
  ScenarioTraces traces;
};

struct ScenarioResult {
  Scenario scenario;
  std::vector<TrialResult> trials;
  ScenarioReport report;
};

/// Runs every trial with the trained model. Throws ModeMismatch when the
/// model was trained in a different material mode.
ScenarioResult run_scenario(const Scenario& s, const MlpParams& model);
/// Same with an arbitrary estimator (ground-truth oracle in tests).
ScenarioResult run_scenario(const Scenario& s, const Estimator& estimator);
TrialResult run_trial(const Scenario& s, const Estimator& estimator, int trial);

/// Linear interpolation of (xs, ys) at `grid`; xs must be non-decreasing.
/// Grid points outside [xs.front(), xs.back()] clamp to the end values.
std::vector<double> resample(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::vector<double>& grid);

inline constexpr std::size_t kTracePoints = 101;

ScenarioReport build_report(const std::vector<TrialResult>& trials);

/// Writes trial_<k>.csv per trial, summary.csv, traces.csv and report.txt
/// into `dir`. Throws InvalidArgument for an empty result and IoError on
/// write failures.
void emit_report(const ScenarioResult& result, const std::filesystem::path& dir);

/// Reads a directory written by emit_report back into trial results; the
/// summaries are recomputed from the per-step CSVs.
std::vector<TrialResult> load_report_trials(const std::filesystem::path& dir);

}  // namespace captrack
