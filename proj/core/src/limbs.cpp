#include "captrack/limbs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace captrack {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mat3 about(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

}  // namespace

LimbEndpoints limb_endpoints(const LimbSpec& spec, const LimbJoints& joints) {
  const Vec3 d1(std::cos(spec.heading), std::sin(spec.heading), 0.0);
  const Vec3 d2_flat = about(world_up(), spec.bend + joints.bend) * d1;
  const Vec3 d2 = std::cos(spec.distal_tilt) * d2_flat - std::sin(spec.distal_tilt) * world_up();

  const Vec3 joint0 = spec.proximal_length * d1;
  const Vec3 tip0 = joint0 + spec.distal_length * d2;

  // Yaw about the pivot, then tilt about the horizontal axis perpendicular to
  // the rest pivot -> tip direction so that + tilt raises the tip.
  Vec3 reach = tip0;
  reach.z() = 0.0;
  const Vec3 tilt_axis = reach.norm() > 1e-12 ? Vec3(reach.normalized().cross(world_up())) : Vec3(d1.cross(world_up()));
  const Mat3 yaw = about(world_up(), joints.yaw);
  const Mat3 rot = about(yaw * tilt_axis, joints.tilt) * yaw;

  return {spec.pivot, spec.pivot + rot * joint0, spec.pivot + rot * tip0};
}

LimbModel build_limb(const LimbSpec& spec, const LimbJoints& joints) {
  const LimbEndpoints e = limb_endpoints(spec, joints);
  LimbModel limb;
  limb.kind = spec.kind;
  const Vec3 d1 = (e.joint - e.pivot).normalized();
  const Vec3 d2 = (e.tip - e.joint).normalized();
  limb.joint_angle = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
  if (spec.distal_first) {
    limb.segments = {{e.tip, e.joint, spec.distal_radius}, {e.joint, e.pivot, spec.proximal_radius}};
  } else {
    limb.segments = {{e.pivot, e.joint, spec.proximal_radius}, {e.joint, e.tip, spec.distal_radius}};
  }
  return limb;
}

Vec3 rest_lateral_direction(const LimbSpec& spec) {
  const LimbEndpoints e = limb_endpoints(spec);
  Vec3 reach = e.tip - e.pivot;
  reach.z() = 0.0;
  return world_up().cross(reach.normalized());
}

LimbSpec arm_dressing_spec(double total_length) {
  LimbSpec s;
  s.kind = LimbKind::arm;
  s.distal_length = total_length * (0.30 / 0.58);
  s.proximal_length = total_length - s.distal_length;
  s.proximal_radius = 0.05;
  s.distal_radius = 0.04;
  s.heading = std::numbers::pi;  // shoulder at the origin side, hand toward -X
  s.bend = 30.0 * kDeg;
  s.distal_first = true;
  return s;
}

LimbSpec arm_bathing_spec(double total_length) {
  LimbSpec s = arm_dressing_spec(total_length);
  s.bend = 90.0 * kDeg;
  s.distal_tilt = 60.0 * kDeg;
  return s;
}

LimbSpec leg_bathing_spec(double total_length) {
  LimbSpec s;
  s.kind = LimbKind::leg;
  s.proximal_length = total_length * (0.45 / 0.87);
  s.distal_length = total_length - s.proximal_length;
  s.proximal_radius = 0.07;
  s.distal_radius = 0.05;
  s.pivot = Vec3(0.0, 0.0, 0.6);
  s.heading = 0.0;
  s.distal_tilt = 30.0 * kDeg;
  s.distal_first = false;
  return s;
}

LimbSpec collection_spec(LimbKind kind) {
  if (kind == LimbKind::arm) return arm_dressing_spec();
  LimbSpec s = leg_bathing_spec();
  s.distal_tilt = 0.0;
  s.distal_first = true;
  return s;
}

}  // namespace captrack
