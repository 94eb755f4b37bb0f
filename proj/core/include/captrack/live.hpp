#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "captrack/controller.hpp"
#include "captrack/limbs.hpp"
#include "captrack/scenarios.hpp"

namespace captrack {

inline constexpr int kProtocolVersion = 1;

/// Inbound: desired limb joint offsets from the rest pose. With a timestamp
/// (simulation seconds) the command is held until the simulation reaches it.
struct LimbCommand {
  double tilt = 0.0;
  double yaw = 0.0;
  double bend = 0.0;
  std::optional<double> timestamp;
  bool operator==(const LimbCommand&) const = default;
};

enum class SessionAction { start, pause, reset };
std::string_view to_string(SessionAction a);

/// Inbound: session lifecycle. `gains` switches the preset ("smooth" or
/// "responsive"); `scenario` selects a catalog entry on reset.
struct SessionControl {
  SessionAction action = SessionAction::start;
  std::optional<std::string> scenario;
  std::optional<std::string> gains;
  bool operator==(const SessionControl&) const = default;
};

using InboundMessage = std::variant<LimbCommand, SessionControl>;

/// Outbound snapshot published on every action step and on state changes.
struct StateUpdate {
  double t = 0.0;
  std::int64_t step = 0;
  EePose ee;
  LimbJoints joints;
  std::vector<Capsule> segments;
  RelPose predicted;
  RelPose truth;
  double force = 0.0;
  bool aborted = false;
  std::string abort_reason = "none";
  bool completed = false;
  bool running = false;
  std::string scenario;
  std::string gains;
};

std::string encode_state(const StateUpdate& s);
std::string encode_error(std::string_view message);
std::string encode_inbound(const InboundMessage& m);
/// Throws ProtocolError on malformed JSON, a wrong version, an unknown type or
/// non-finite fields.
InboundMessage decode_inbound(std::string_view text);
StateUpdate decode_state(std::string_view text);

/// Hand displacement limits for live limb commands: vertical and lateral
/// components each within `max_displacement`, hand speed within `max_speed`.
struct MotionEnvelope {
  double max_displacement = kMaxHandDisplacement;
  double max_speed = 0.0;  // m/s
  double max_abs_angle = 1.0;  // rad, per joint

  /// Speed of a +-amplitude sinusoid of the given period at its zero crossing.
  static MotionEnvelope for_sinusoid(double amplitude, double period);
};

/// Vertical and lateral hand offsets of `joints` from the rest pose.
std::pair<double, double> hand_offsets(const LimbSpec& spec, const LimbJoints& joints);

/// Scales `target` toward the rest pose until it satisfies the envelope.
LimbJoints clamp_to_envelope(const LimbSpec& spec, const LimbJoints& target, const MotionEnvelope& env);

/// Moves from `current` toward `target` along a straight joint-space line,
/// stopping where the hand has moved `max_step` metres.
LimbJoints rate_limit(const LimbSpec& spec, const LimbJoints& current, const LimbJoints& target, double max_step);

struct RecordedCommand {
  std::int64_t tick = 0;  // commands apply before sensing step `tick`
  InboundMessage message;
};

struct LiveOptions {
  bool autostart = true;
  /// Scenario catalog for SessionControl::scenario lookups.
  std::vector<Scenario> catalog;
};

/// Live-mode simulation: one contour follower whose limb joints follow
/// rate-limited inbound commands. enqueue() is thread-safe; everything else
/// belongs to the simulation thread.
class LiveSession {
 public:
  LiveSession(const Scenario& scenario, Estimator estimator, LiveOptions options = {});

  void enqueue(InboundMessage message);

  /// Applies due commands, then runs one sensing step when running.
  /// Returns a snapshot after action steps and lifecycle changes.
  std::optional<StateUpdate> tick();

  bool running() const { return running_; }
  bool finished() const { return follower_->finished(); }
  std::int64_t ticks() const { return tick_; }
  StateUpdate snapshot() const;
  TrialLog log() const { return follower_->finish(); }
  const std::vector<RecordedCommand>& commands() const { return applied_; }
  const Scenario& scenario() const { return scenario_; }
  const LimbSpec& spec() const { return spec_; }
  const LimbJoints& joints() const { return joints_; }

 private:
  void apply(const InboundMessage& m);
  void restart();

  Scenario scenario_;
  Estimator estimator_;
  LiveOptions options_;
  MotionEnvelope envelope_;
  LimbSpec spec_;
  LimbJoints joints_;
  LimbJoints target_;
  std::unique_ptr<ContourFollower> follower_;
  bool running_ = false;
  bool changed_ = false;
  std::int64_t tick_ = 0;

  std::mutex mutex_;
  std::deque<InboundMessage> queue_;
  std::vector<RecordedCommand> applied_;
};

/// Re-runs a recorded command stream through a fresh session until the
/// follower finishes or `max_ticks` is reached.
TrialLog replay_session(const Scenario& scenario, const Estimator& estimator,
                        const std::vector<RecordedCommand>& commands, std::int64_t max_ticks = 1'000'000,
                        const std::vector<Scenario>& catalog = {});

/// Writes the trial CSV of the session and a commands.jsonl stream into
/// `dir`; returns the log.
TrialLog record_session(const LiveSession& session, const std::filesystem::path& dir);
void write_commands(const std::vector<RecordedCommand>& commands, const std::filesystem::path& path);
std::vector<RecordedCommand> read_commands(const std::filesystem::path& path);

struct ServeOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 picks a free port
  bool realtime = true;       // pace sensing steps at 100 Hz
  std::optional<std::filesystem::path> ui_dir;
  std::optional<std::filesystem::path> record_dir;
  LiveOptions live;
};

/// WebSocket server around a LiveSession. Text frames carry one JSON
/// message each.
class LiveServer {
 public:
  LiveServer(const Scenario& scenario, Estimator estimator, ServeOptions options);
  ~LiveServer();
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  /// Binds and starts the network and simulation threads. Throws BindError.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  std::uint16_t port() const;
  /// Number of sensing steps executed so far.
  std::int64_t ticks() const;
  TrialLog log() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace captrack
