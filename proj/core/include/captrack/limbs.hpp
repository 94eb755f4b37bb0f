#pragma once

#include "captrack/geometry.hpp"

namespace captrack {

/// Rest configuration of a two-segment limb, measured from the proximal
/// pivot (shoulder or hip).
struct LimbSpec {
  LimbKind kind = LimbKind::arm;
  double proximal_length = 0.28;  // upper arm / thigh
  double distal_length = 0.30;    // forearm incl. hand / shin
  double proximal_radius = 0.05;
  double distal_radius = 0.04;
  Vec3 pivot = Vec3(0.0, 0.0, 1.0);
  double heading = 0.0;      // world yaw of pivot -> joint
  double bend = 0.0;         // distal deviation in the horizontal plane, rad
  double distal_tilt = 0.0;  // downward tilt of the distal segment, rad
  bool distal_first = true;  // traversal order of the produced chain

  double total_length() const { return proximal_length + distal_length; }
};

/// Time-varying joint offsets applied on top of the rest configuration.
struct LimbJoints {
  double tilt = 0.0;  // rotation about the horizontal axis at the pivot; + raises the distal end
  double yaw = 0.0;   // rotation about world-up at the pivot
  double bend = 0.0;  // added to LimbSpec::bend
  bool operator==(const LimbJoints&) const = default;
};

struct LimbEndpoints {
  Vec3 pivot;
  Vec3 joint;
  Vec3 tip;
};

LimbEndpoints limb_endpoints(const LimbSpec& spec, const LimbJoints& joints = {});
LimbModel build_limb(const LimbSpec& spec, const LimbJoints& joints = {});

/// Horizontal unit vector perpendicular to pivot -> tip in the rest pose
/// (lateral direction of hand motion).
Vec3 rest_lateral_direction(const LimbSpec& spec);

// Default radii: forearm 0.04, upper arm 0.05, shin 0.05, thigh 0.07 m.
LimbSpec arm_dressing_spec(double total_length = 0.58);  // horizontal, 30 deg elbow
LimbSpec arm_bathing_spec(double total_length = 0.58);   // 90 deg elbow, forearm tilted 60 deg down
LimbSpec leg_bathing_spec(double total_length = 0.87);   // 30 deg knee, traversed thigh to ankle
LimbSpec collection_spec(LimbKind kind);                 // limbs held parallel to the ground

}  // namespace captrack
