#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <vector>

namespace captrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;

inline Vec3 world_up() { return Vec3::UnitZ(); }

enum class LimbKind { arm, leg };

/// A capsule: the set of points within `radius` of the segment [a, b].
struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0.0;

  double length() const { return (b - a).norm(); }
};

/// Articulated capsule chain. Segments are ordered in traversal order: the
/// controller starts over segment 0 and moves toward the last segment's b.
struct LimbModel {
  std::vector<Capsule> segments;
  double joint_angle = 0.0;
  LimbKind kind = LimbKind::arm;

  /// Throws InvalidArgument on a non-positive radius, a degenerate segment or
  /// a broken chain.
  void validate() const;
  double chain_length() const;
};

struct EePose {
  Vec3 position = Vec3::Zero();
  /// End-effector axes expressed in world coordinates (columns X_ee, Y_ee,
  /// Z_ee): world = orientation * local. X_ee is the travel direction, Z_ee
  /// points away from the limb.
  Mat3 orientation = Mat3::Identity();

  Vec3 x_axis() const { return orientation.col(0); }
  Vec3 y_axis() const { return orientation.col(1); }
  Vec3 z_axis() const { return orientation.col(2); }
};

bool is_proper_rotation(const Mat3& r, double tol = 1e-9);

/// Local pose of the limb relative to the end effector: lateral and vertical
/// offset from the closest point, pitch and yaw of X_ee against the axis.
struct RelPose {
  double p_y = 0.0;
  double p_z = 0.0;
  double theta_y = 0.0;
  double theta_z = 0.0;

  Vec4 as_vector() const { return {p_y, p_z, theta_y, theta_z}; }
  static RelPose from_vector(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
  bool operator==(const RelPose&) const = default;
};

struct ClosestPoint {
  Vec3 surface_point;
  /// Unit central-axis direction of the owning segment (a -> b).
  Vec3 axis_dir;
  std::size_t segment_index = 0;
  /// Foot of the perpendicular from the query onto the owning axis segment.
  Vec3 axis_foot;
  /// Distance from the query to the surface; negative inside the limb.
  double signed_distance = 0.0;
};

ClosestPoint closest_point(const LimbModel& limb, const Vec3& query);

/// Signed distance from `query` to the limb surface (negative inside). Cheaper
/// than closest_point when only the distance matters.
double surface_distance(const LimbModel& limb, const Vec3& query);

/// Euclidean distance to the nearest central-axis segment; ignores radii.
double distance_to_limb_axis(const LimbModel& limb, const Vec3& query);

/// Columns X, Y, Z of the limb-local frame for a given axis direction: X is the
/// axis, Z is world-up made orthogonal to X, Y = Z x X. Throws DegenerateFrame
/// when the axis is within 1e-6 rad of vertical.
Mat3 limb_frame(const Vec3& axis_dir);

/// Rotation taking the limb frame to the end-effector frame: yaw about Z
/// first, then pitch about Y.
Mat3 yaw_pitch_rotation(double theta_y, double theta_z);

/// Recovers (theta_y, theta_z) of an end-effector X axis given in limb-local
/// coordinates.
void extract_yaw_pitch(const Vec3& x_local, double& theta_y, double& theta_z);

/// Ground-truth relative pose. The local origin is the top of the limb above
/// the axis foot of the closest point.
RelPose relative_pose(const LimbModel& limb, const EePose& ee);

/// Inverse of relative_pose at a given arclength along the chain. Throws
/// AnchorOutOfRange when the arclength is outside [0, chain_length].
EePose pose_from_rel(const LimbModel& limb, double anchor_arclength, const RelPose& rel);

struct ChainPoint {
  std::size_t segment_index = 0;
  Vec3 point;
  Vec3 axis_dir;
};

/// Point on the central axis at the given arclength from the chain start.
ChainPoint chain_point_at(const LimbModel& limb, double arclength);

/// Arclength of the axis foot of `query` along the chain.
double arclength_of(const LimbModel& limb, const Vec3& query);

}  // namespace captrack
