#include "captrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "captrack/errors.hpp"

namespace captrack {

namespace {

struct AxisFoot {
  Vec3 point;
  double t = 0.0;
};

AxisFoot foot_on_segment(const Capsule& c, const Vec3& q) {
  const Vec3 d = c.b - c.a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (q - c.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {c.a + t * d, t};
}

// Outward radial direction from the axis foot; falls back to the frame's Z
// (or any perpendicular) when the query sits on the axis.
Vec3 radial_direction(const Capsule& c, const Vec3& q, const Vec3& foot) {
  Vec3 n = q - foot;
  const double len = n.norm();
  if (len > 0.0) return n / len;
  const Vec3 axis = (c.b - c.a).normalized();
  Vec3 up = world_up() - world_up().dot(axis) * axis;
  if (up.norm() < 1e-12) up = Vec3::UnitX() - Vec3::UnitX().dot(axis) * axis;
  return up.normalized();
}

bool strictly_inside(const Capsule& c, const Vec3& p) {
  const AxisFoot f = foot_on_segment(c, p);
  return (p - f.point).norm() < c.radius - 1e-12;
}

}  // namespace

void LimbModel::validate() const {
  if (segments.empty()) throw InvalidArgument("limb has no segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Capsule& s = segments[i];
    if (!(s.radius > 0.0)) throw InvalidArgument("segment radius must be positive");
    if (!(s.length() > 0.0)) throw InvalidArgument("segment has zero length");
    if (i > 0 && (segments[i - 1].b - s.a).norm() > 1e-12)
      throw InvalidArgument("consecutive segments must share an endpoint");
  }
}

double LimbModel::chain_length() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.length();
  return total;
}

bool is_proper_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

ClosestPoint closest_point(const LimbModel& limb, const Vec3& query) {
  struct Candidate {
    ClosestPoint cp;
    bool buried = false;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(limb.segments.size());
  bool inside_any = false;
  for (std::size_t i = 0; i < limb.segments.size(); ++i) {
    const Capsule& c = limb.segments[i];
    const AxisFoot f = foot_on_segment(c, query);
    Candidate cand;
    cand.cp.axis_foot = f.point;
    cand.cp.surface_point = f.point + c.radius * radial_direction(c, query, f.point);
    cand.cp.axis_dir = (c.b - c.a).normalized();
    cand.cp.segment_index = i;
    cand.cp.signed_distance = (query - f.point).norm() - c.radius;
    for (std::size_t j = 0; j < limb.segments.size() && !cand.buried; ++j)
      if (j != i && strictly_inside(limb.segments[j], cand.cp.surface_point)) cand.buried = true;
    inside_any = inside_any || cand.cp.signed_distance < 0.0;
    candidates.push_back(cand);
  }

  if (!inside_any) {
    // The nearest capsule's projection can never be buried in another one.
    const auto it = std::min_element(candidates.begin(), candidates.end(), [](const auto& l, const auto& r) {
      return l.cp.signed_distance < r.cp.signed_distance;
    });
    return it->cp;
  }

  // Interior query: nearest exposed projection among the capsules containing it.
  const Candidate* best = nullptr;
  for (const auto& cand : candidates) {
    if (cand.cp.signed_distance >= 0.0 || cand.buried) continue;
    if (!best || cand.cp.signed_distance > best->cp.signed_distance) best = &cand;
  }
  if (!best) {
    for (const auto& cand : candidates)
      if (!best || cand.cp.signed_distance < best->cp.signed_distance) best = &cand;
  }
  ClosestPoint out = best->cp;
  out.signed_distance = -(query - out.surface_point).norm();
  return out;
}

double surface_distance(const LimbModel& limb, const Vec3& query) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : limb.segments) {
    const AxisFoot f = foot_on_segment(c, query);
    best = std::min(best, (query - f.point).norm() - c.radius);
  }
  return best;
}

double distance_to_limb_axis(const LimbModel& limb, const Vec3& query) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : limb.segments)
    best = std::min(best, (query - foot_on_segment(c, query).point).norm());
  return best;
}

Mat3 limb_frame(const Vec3& axis_dir) {
  const Vec3 x = axis_dir.normalized();
  // sin of the angle between the axis and world-up.
  if (x.cross(world_up()).norm() < std::sin(1e-6))
    throw DegenerateFrame("limb axis is vertical; lateral direction undefined");
  const Vec3 z = (world_up() - world_up().dot(x) * x).normalized();
  const Vec3 y = z.cross(x);
  Mat3 f;
  f.col(0) = x;
  f.col(1) = y;
  f.col(2) = z;
  return f;
}

Mat3 yaw_pitch_rotation(double theta_y, double theta_z) {
  return (Eigen::AngleAxisd(theta_z, Vec3::UnitZ()) * Eigen::AngleAxisd(theta_y, Vec3::UnitY()))
      .toRotationMatrix();
}

void extract_yaw_pitch(const Vec3& x_local, double& theta_y, double& theta_z) {
  theta_z = std::atan2(x_local.y(), x_local.x());
  theta_y = std::atan2(-x_local.z(), std::hypot(x_local.x(), x_local.y()));
}

RelPose relative_pose(const LimbModel& limb, const EePose& ee) {
  const ClosestPoint cp = closest_point(limb, ee.position);
  const Mat3 frame = limb_frame(cp.axis_dir);
  const double radius = limb.segments[cp.segment_index].radius;
  const Vec3 origin = cp.axis_foot + radius * frame.col(2);
  const Vec3 offset = ee.position - origin;

  RelPose rel;
  rel.p_y = offset.dot(frame.col(1));
  rel.p_z = offset.dot(frame.col(2));

  // Past a segment end the axial overhang is folded into the radial offset,
  // so height over a cap or a convex joint keeps growing with distance.
  const Capsule& seg = limb.segments[cp.segment_index];
  const double along = (ee.position - seg.a).dot(cp.axis_dir);
  if (along < 0.0 || along > seg.length()) {
    const Vec3 from_foot = ee.position - cp.axis_foot;
    const double q_y = from_foot.dot(frame.col(1));
    const double q_z = from_foot.dot(frame.col(2));
    const double radial = std::hypot(q_y, q_z);
    const double scale = radial > 0.0 ? from_foot.norm() / radial : 0.0;
    rel.p_y = q_y * scale;
    rel.p_z = (radial > 0.0 ? q_z * scale : from_foot.norm()) - radius;
  }
  extract_yaw_pitch(frame.transpose() * ee.x_axis(), rel.theta_y, rel.theta_z);
  return rel;
}

ChainPoint chain_point_at(const LimbModel& limb, double arclength) {
  const double total = limb.chain_length();
  if (!(arclength >= 0.0 && arclength <= total))
    throw AnchorOutOfRange("anchor arclength outside [0, chain length]");
  double start = 0.0;
  for (std::size_t i = 0; i < limb.segments.size(); ++i) {
    const Capsule& c = limb.segments[i];
    const double len = c.length();
    if (arclength <= start + len || i + 1 == limb.segments.size()) {
      const Vec3 dir = (c.b - c.a) / len;
      const double local = std::min(arclength - start, len);
      return {i, c.a + local * dir, dir};
    }
    start += len;
  }
  return {};  // unreachable for a validated chain
}

double arclength_of(const LimbModel& limb, const Vec3& query) {
  const ClosestPoint cp = closest_point(limb, query);
  double start = 0.0;
  for (std::size_t i = 0; i < cp.segment_index; ++i) start += limb.segments[i].length();
  return start + (cp.axis_foot - limb.segments[cp.segment_index].a).norm();
}

EePose pose_from_rel(const LimbModel& limb, double anchor_arclength, const RelPose& rel) {
  const ChainPoint anchor = chain_point_at(limb, anchor_arclength);
  const Mat3 frame = limb_frame(anchor.axis_dir);
  const double radius = limb.segments[anchor.segment_index].radius;

  EePose ee;
  ee.position = anchor.point + (radius + rel.p_z) * frame.col(2) + rel.p_y * frame.col(1);
  ee.orientation = frame * yaw_pitch_rotation(rel.theta_y, rel.theta_z);
  return ee;
}

}  // namespace captrack
