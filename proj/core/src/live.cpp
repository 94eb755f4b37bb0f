#include "captrack/live.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "captrack/errors.hpp"

namespace captrack {

using json = nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ProtocolError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json rel_json(const RelPose& r) {
  return {{"p_y", r.p_y}, {"p_z", r.p_z}, {"theta_y", r.theta_y}, {"theta_z", r.theta_z}};
}

RelPose rel_from(const json& j) {
  return {j.at("p_y").get<double>(), j.at("p_z").get<double>(), j.at("theta_y").get<double>(),
          j.at("theta_z").get<double>()};
}

double finite_number(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ProtocolError(std::string("field '") + key + "' must be finite");
  return v;
}

void only_keys(const json& obj, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ProtocolError("unexpected field '" + k + "'");
}

LimbJoints scaled(const LimbJoints& j, double s) { return {j.tilt * s, j.yaw * s, j.bend * s}; }

LimbJoints lerp(const LimbJoints& a, const LimbJoints& b, double f) {
  return {a.tilt + f * (b.tilt - a.tilt), a.yaw + f * (b.yaw - a.yaw), a.bend + f * (b.bend - a.bend)};
}

bool inside(const LimbSpec& spec, const LimbJoints& j, const MotionEnvelope& env) {
  const auto [v, l] = hand_offsets(spec, j);
  constexpr double kSlack = 1e-12;
  return std::abs(v) <= env.max_displacement + kSlack && std::abs(l) <= env.max_displacement + kSlack;
}

}  // namespace

std::string_view to_string(SessionAction a) {
  switch (a) {
    case SessionAction::start: return "start";
    case SessionAction::pause: return "pause";
    case SessionAction::reset: return "reset";
  }
  return "?";
}

std::string encode_state(const StateUpdate& s) {
  json orient = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) orient.push_back(s.ee.orientation(i, j));
  json segs = json::array();
  for (const auto& c : s.segments) segs.push_back({{"a", vec_json(c.a)}, {"b", vec_json(c.b)}, {"radius", c.radius}});
  const json j = {{"v", kProtocolVersion},
                  {"type", "state"},
                  {"t", s.t},
                  {"step", s.step},
                  {"ee", {{"position", vec_json(s.ee.position)}, {"orientation", orient}}},
                  {"joints", {{"tilt", s.joints.tilt}, {"yaw", s.joints.yaw}, {"bend", s.joints.bend}}},
                  {"segments", segs},
                  {"predicted", rel_json(s.predicted)},
                  {"truth", rel_json(s.truth)},
                  {"force", s.force},
                  {"aborted", s.aborted},
                  {"abort_reason", s.abort_reason},
                  {"completed", s.completed},
                  {"running", s.running},
                  {"scenario", s.scenario},
                  {"gains", s.gains}};
  return j.dump();
}

StateUpdate decode_state(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("malformed JSON");
  try {
    if (j.at("v").get<int>() != kProtocolVersion || j.at("type").get<std::string>() != "state")
      throw ProtocolError("not a state message");
    StateUpdate s;
    s.t = j.at("t").get<double>();
    s.step = j.at("step").get<std::int64_t>();
    s.ee.position = vec_from(j.at("ee").at("position"));
    const auto& o = j.at("ee").at("orientation");
    if (!o.is_array() || o.size() != 9) throw ProtocolError("orientation must have 9 entries");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) s.ee.orientation(i, k) = o[static_cast<std::size_t>(3 * i + k)].get<double>();
    const auto& jt = j.at("joints");
    s.joints = {jt.at("tilt").get<double>(), jt.at("yaw").get<double>(), jt.at("bend").get<double>()};
    for (const auto& c : j.at("segments"))
      s.segments.push_back({vec_from(c.at("a")), vec_from(c.at("b")), c.at("radius").get<double>()});
    s.predicted = rel_from(j.at("predicted"));
    s.truth = rel_from(j.at("truth"));
    s.force = j.at("force").get<double>();
    s.aborted = j.at("aborted").get<bool>();
    s.abort_reason = j.at("abort_reason").get<std::string>();
    s.completed = j.at("completed").get<bool>();
    s.running = j.at("running").get<bool>();
    s.scenario = j.at("scenario").get<std::string>();
    s.gains = j.at("gains").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad state message: ") + e.what());
  }
}

std::string encode_error(std::string_view message) {
  return json{{"v", kProtocolVersion}, {"type", "error"}, {"message", message}}.dump();
}

std::string encode_inbound(const InboundMessage& m) {
  json j;
  if (const auto* c = std::get_if<LimbCommand>(&m)) {
    j = {{"v", kProtocolVersion}, {"type", "limb_command"}, {"tilt", c->tilt}, {"yaw", c->yaw}, {"bend", c->bend}};
    if (c->timestamp) j["timestamp"] = *c->timestamp;
  } else {
    const auto& s = std::get<SessionControl>(m);
    j = {{"v", kProtocolVersion}, {"type", "session"}, {"action", to_string(s.action)}};
    if (s.scenario) j["scenario"] = *s.scenario;
    if (s.gains) j["gains"] = *s.gains;
  }
  return j.dump();
}

InboundMessage decode_inbound(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ProtocolError("malformed JSON");
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  const auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer()) throw ProtocolError("missing protocol version");
  if (v->get<int>() != kProtocolVersion) throw ProtocolError("unsupported protocol version " + v->dump());
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw ProtocolError("missing message type");

  const std::string t = type->get<std::string>();
  if (t == "limb_command") {
    only_keys(j, {"v", "type", "tilt", "yaw", "bend", "timestamp"});
    LimbCommand c;
    c.tilt = finite_number(j, "tilt");
    c.yaw = finite_number(j, "yaw");
    c.bend = finite_number(j, "bend");
    if (j.contains("timestamp")) {
      c.timestamp = finite_number(j, "timestamp");
      if (*c.timestamp < 0.0) throw ProtocolError("timestamp must be non-negative");
    }
    return c;
  }
  if (t == "session") {
    only_keys(j, {"v", "type", "action", "scenario", "gains"});
    SessionControl s;
    const auto a = j.find("action");
    if (a == j.end() || !a->is_string()) throw ProtocolError("missing session action");
    const std::string action = a->get<std::string>();
    if (action == "start") s.action = SessionAction::start;
    else if (action == "pause") s.action = SessionAction::pause;
    else if (action == "reset") s.action = SessionAction::reset;
    else throw ProtocolError("unknown session action '" + action + "'");
    if (const auto sc = j.find("scenario"); sc != j.end()) {
      if (!sc->is_string()) throw ProtocolError("scenario must be a string");
      s.scenario = sc->get<std::string>();
    }
    if (const auto g = j.find("gains"); g != j.end()) {
      if (!g->is_string()) throw ProtocolError("gains must be a string");
      const std::string name = g->get<std::string>();
      if (name != "smooth" && name != "responsive") throw ProtocolError("unknown gains preset '" + name + "'");
      s.gains = name;
    }
    return s;
  }
  throw ProtocolError("unknown message type '" + t + "'");
}

MotionEnvelope MotionEnvelope::for_sinusoid(double amplitude, double period) {
  MotionEnvelope e;
  e.max_displacement = amplitude;
  e.max_speed = 2.0 * std::numbers::pi * amplitude / period;
  return e;
}

std::pair<double, double> hand_offsets(const LimbSpec& spec, const LimbJoints& joints) {
  const Vec3 d = limb_endpoints(spec, joints).tip - limb_endpoints(spec).tip;
  return {d.z(), d.dot(rest_lateral_direction(spec))};
}

LimbJoints clamp_to_envelope(const LimbSpec& spec, const LimbJoints& target, const MotionEnvelope& env) {
  const double m = env.max_abs_angle;
  const LimbJoints j{std::clamp(target.tilt, -m, m), std::clamp(target.yaw, -m, m), std::clamp(target.bend, -m, m)};
  if (inside(spec, j, env)) return j;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (inside(spec, scaled(j, mid), env) ? lo : hi) = mid;
  }
  return scaled(j, lo);
}

LimbJoints rate_limit(const LimbSpec& spec, const LimbJoints& current, const LimbJoints& target, double max_step) {
  const Vec3 from = limb_endpoints(spec, current).tip;
  const auto moved = [&](double f) { return (limb_endpoints(spec, lerp(current, target, f)).tip - from).norm(); };
  if (moved(1.0) <= max_step) return target;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (moved(mid) <= max_step ? lo : hi) = mid;
  }
  return lerp(current, target, lo);
}

LiveSession::LiveSession(const Scenario& scenario, Estimator estimator, LiveOptions options)
    : scenario_(scenario), estimator_(std::move(estimator)), options_(std::move(options)) {
  restart();
  running_ = options_.autostart;
}

void LiveSession::restart() {
  scenario_.validate();
  envelope_ = MotionEnvelope::for_sinusoid(scenario_.amplitude, scenario_.period);
  spec_ = scenario_limb_spec(scenario_, trial_limb_length(scenario_, 0));
  joints_ = target_ = LimbJoints{};
  follower_ = std::make_unique<ContourFollower>(build_limb(spec_, joints_), scenario_.control, scenario_.layout,
                                                scenario_.mode, estimator_, trial_seed(scenario_, 0));
}

void LiveSession::enqueue(InboundMessage message) {
  std::lock_guard lock(mutex_);
  queue_.push_back(std::move(message));
}

void LiveSession::apply(const InboundMessage& m) {
  changed_ = true;
  if (const auto* c = std::get_if<LimbCommand>(&m)) {
    target_ = clamp_to_envelope(spec_, {c->tilt, c->yaw, c->bend}, envelope_);
    return;
  }
  const auto& s = std::get<SessionControl>(m);
  if (s.gains) scenario_.control.gains = gains_from_string(*s.gains);
  switch (s.action) {
    case SessionAction::start: running_ = true; break;
    case SessionAction::pause: running_ = false; break;
    case SessionAction::reset: {
      if (s.scenario) {
        const auto it = std::find_if(options_.catalog.begin(), options_.catalog.end(),
                                     [&](const Scenario& c) { return c.name == *s.scenario; });
        if (it == options_.catalog.end()) throw ProtocolError("unknown scenario '" + *s.scenario + "'");
        const Gains keep = scenario_.control.gains;
        scenario_ = *it;
        if (s.gains) scenario_.control.gains = keep;
      }
      restart();
      return;
    }
  }
  if (s.gains) follower_->set_gains(scenario_.control.gains);
}

std::optional<StateUpdate> LiveSession::tick() {
  {
    std::lock_guard lock(mutex_);
    while (!queue_.empty()) {
      const InboundMessage& m = queue_.front();
      if (const auto* c = std::get_if<LimbCommand>(&m); c && c->timestamp && *c->timestamp > follower_->time() + 1e-9)
        break;
      applied_.push_back({tick_, m});
      InboundMessage msg = std::move(queue_.front());
      queue_.pop_front();
      try {
        apply(msg);
      } catch (const ProtocolError&) {
        // Servers validate scenario names before enqueueing; ignore stale ones.
      }
    }
  }
  bool publish = std::exchange(changed_, false);
  if (running_ && !follower_->finished()) {
    joints_ = rate_limit(spec_, joints_, target_, envelope_.max_speed * kSamplePeriod);
    follower_->step(build_limb(spec_, joints_));
    ++tick_;
    publish = publish || follower_->records().back().action_step || follower_->finished();
  }
  if (!publish) return std::nullopt;
  return snapshot();
}

StateUpdate LiveSession::snapshot() const {
  StateUpdate s;
  const auto& st = follower_->state();
  s.t = follower_->time();
  s.step = follower_->step_index();
  s.ee = follower_->pose();
  s.joints = joints_;
  const LimbModel limb = build_limb(spec_, joints_);
  s.segments = limb.segments;
  s.predicted = st.estimate;
  if (!follower_->records().empty()) {
    s.truth = follower_->records().back().truth;
    s.force = follower_->records().back().force;
  } else {
    s.truth = relative_pose(limb, s.ee);
  }
  s.aborted = st.aborted;
  s.abort_reason = std::string(to_string(st.reason));
  s.completed = st.completed;
  s.running = running_;
  s.scenario = scenario_.name;
  s.gains = std::string(to_string(follower_->config().gains));
  return s;
}

TrialLog replay_session(const Scenario& scenario, const Estimator& estimator,
                        const std::vector<RecordedCommand>& commands, std::int64_t max_ticks,
                        const std::vector<Scenario>& catalog) {
  LiveOptions opts;
  opts.autostart = true;
  opts.catalog = catalog;
  LiveSession session(scenario, estimator, opts);
  std::size_t next = 0;
  while (session.ticks() < max_ticks) {
    while (next < commands.size() && commands[next].tick <= session.ticks()) session.enqueue(commands[next++].message);
    const auto before = session.ticks();
    session.tick();
    // Paused or finished with every due command applied.
    if (session.ticks() == before) break;
  }
  return session.log();
}

void write_commands(const std::vector<RecordedCommand>& commands, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& c : commands)
    out << json{{"tick", c.tick}, {"message", json::parse(encode_inbound(c.message))}}.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<RecordedCommand> read_commands(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<RecordedCommand> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("tick") || !j.contains("message"))
      throw IoError("malformed command record in " + path.string());
    try {
      out.push_back({j.at("tick").get<std::int64_t>(), decode_inbound(j.at("message").dump())});
    } catch (const ProtocolError& e) {
      throw IoError(std::string("malformed command record: ") + e.what());
    }
  }
  return out;
}

TrialLog record_session(const LiveSession& session, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir.string());
  TrialLog log = session.log();
  write_trial_csv(log.steps, dir / "trial_0.csv");
  write_commands(session.commands(), dir / "commands.jsonl");
  {
    std::ofstream out(dir / "scenario.txt");
    if (!out) throw IoError("cannot write scenario.txt in " + dir.string());
    out << format_scenario(session.scenario());
  }
  return log;
}

}  // namespace captrack
