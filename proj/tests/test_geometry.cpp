#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "captrack/errors.hpp"
#include "captrack/geometry.hpp"
#include "captrack/limbs.hpp"
#include "support.hpp"

using namespace captrack;
using captrack::testing::random_unit;
using captrack::testing::straight_limb;

namespace {

// Chain of 2-4 capsules with random joint turns, radii and lengths.
LimbModel random_chain(std::mt19937_64& gen) {
  LimbModel m;
  const int n = 2 + static_cast<int>(uniform_index(gen, 3));
  Vec3 a(uniform(gen, -0.5, 0.5), uniform(gen, -0.5, 0.5), uniform(gen, 0.5, 1.5));
  Vec3 dir = random_unit(gen);
  for (int i = 0; i < n; ++i) {
    const double len = uniform(gen, 0.1, 0.5);
    const Vec3 b = a + len * dir;
    m.segments.push_back({a, b, uniform(gen, 0.02, 0.08)});
    a = b;
    dir = (dir + 0.8 * random_unit(gen)).normalized();
  }
  return m;
}

// Distance from q to the union of capsules by sampling every axis densely.
double sampled_surface_distance(const LimbModel& limb, const Vec3& q, Vec3* surface_point) {
  constexpr int kSamples = 4000;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : limb.segments) {
    for (int k = 0; k <= kSamples; ++k) {
      const Vec3 s = c.a + (c.b - c.a) * (static_cast<double>(k) / kSamples);
      const double d = (q - s).norm() - c.radius;
      if (d < best) {
        best = d;
        if (surface_point) *surface_point = s + c.radius * (q - s).normalized();
      }
    }
  }
  return best;
}

// Point-to-segment distance by the cross-product formula, independent of the
// projection used by the library.
double segment_distance_oracle(const Vec3& a, const Vec3& b, const Vec3& q) {
  const Vec3 ab = b - a;
  if ((q - a).dot(ab) <= 0.0) return (q - a).norm();
  if ((q - b).dot(ab) >= 0.0) return (q - b).norm();
  return ab.cross(q - a).norm() / ab.norm();
}

}  // namespace

TEST(ClosestPoint, MatchesDenseSamplingOnRandomChains) {
  std::mt19937_64 gen(2024);
  int checked = 0;
  for (int chain = 0; chain < 100; ++chain) {
    const LimbModel limb = random_chain(gen);
    for (int q = 0; q < 20; ++q) {
      const Vec3 query = limb.segments[uniform_index(gen, limb.segments.size())].a +
                         uniform(gen, 0.0, 0.25) * random_unit(gen);
      Vec3 sampled_point;
      const double sampled = sampled_surface_distance(limb, query, &sampled_point);
      if (sampled < 0.0) continue;  // interior queries are covered separately
      const ClosestPoint cp = closest_point(limb, query);
      EXPECT_NEAR(cp.signed_distance, sampled, 1.5e-3);
      EXPECT_NEAR((cp.surface_point - query).norm(), cp.signed_distance, 1e-12);
      EXPECT_NEAR(surface_distance(limb, cp.surface_point), 0.0, 1e-9);
      EXPECT_NEAR(surface_distance(limb, query), cp.signed_distance, 1e-12);
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(ClosestPoint, InteriorQueryIsNegativeAndOnExposedSurface) {
  const LimbModel limb = straight_limb(0.4, 0.05);
  const ClosestPoint cp = closest_point(limb, Vec3(0.2, 0.0, 1.02));
  EXPECT_NEAR(cp.signed_distance, -0.03, 1e-12);
  EXPECT_NEAR(cp.surface_point.z(), 1.05, 1e-12);
}

TEST(ClosestPoint, JointInteriorPicksNearestExposedSurface) {
  LimbModel limb;
  limb.segments.push_back({Vec3(0, 0, 1), Vec3(0.3, 0, 1), 0.05});
  limb.segments.push_back({Vec3(0.3, 0, 1), Vec3(0.3, 0.3, 1), 0.05});
  const ClosestPoint cp = closest_point(limb, Vec3(0.3, 0.0, 1.03));
  EXPECT_LT(cp.signed_distance, 0.0);
  EXPECT_NEAR(surface_distance(limb, cp.surface_point), 0.0, 1e-12);
  EXPECT_NEAR(cp.signed_distance, -0.02, 1e-12);
}

TEST(AxisDistance, MatchesIndependentSegmentFormula) {
  std::mt19937_64 gen(7);
  for (int chain = 0; chain < 100; ++chain) {
    const LimbModel limb = random_chain(gen);
    for (int q = 0; q < 20; ++q) {
      const Vec3 query = limb.segments.front().a + uniform(gen, 0.0, 0.8) * random_unit(gen);
      double oracle = std::numeric_limits<double>::infinity();
      for (const auto& c : limb.segments) oracle = std::min(oracle, segment_distance_oracle(c.a, c.b, query));
      EXPECT_NEAR(distance_to_limb_axis(limb, query), oracle, 1e-12);
    }
  }
}

TEST(AxisDistance, IgnoresRadius) {
  LimbModel thin = straight_limb(1.0, 0.01), thick = straight_limb(1.0, 0.09);
  const Vec3 q(0.5, 0.0, 1.1);
  EXPECT_DOUBLE_EQ(distance_to_limb_axis(thin, q), distance_to_limb_axis(thick, q));
  EXPECT_NEAR(distance_to_limb_axis(thin, q), 0.1, 1e-12);
}

TEST(RelativePose, RoundTripsThroughPoseFromRel) {
  std::mt19937_64 gen(99);
  int checked = 0;
  for (int chain = 0; chain < 100; ++chain) {
    // Horizontal-ish chains keep the limb frame well defined.
    LimbModel limb;
    Vec3 a(0, 0, 1);
    double heading = uniform(gen, -std::numbers::pi, std::numbers::pi);
    for (int i = 0; i < 3; ++i) {
      const double len = uniform(gen, 0.25, 0.45);
      const double slope = uniform(gen, -0.5, 0.5);
      const Vec3 dir = Vec3(std::cos(heading), std::sin(heading), slope).normalized();
      limb.segments.push_back({a, a + len * dir, uniform(gen, 0.03, 0.07)});
      a = limb.segments.back().b;
      heading += uniform(gen, -0.4, 0.4);
    }
    for (int k = 0; k < 10; ++k) {
      const auto seg = uniform_index(gen, limb.segments.size());
      double start = 0.0;
      for (std::size_t i = 0; i < seg; ++i) start += limb.segments[i].length();
      const double anchor = start + limb.segments[seg].length() * uniform(gen, 0.4, 0.6);
      const RelPose rel{uniform(gen, -0.03, 0.03), uniform(gen, 0.0, 0.06), uniform(gen, -0.39, 0.39),
                        uniform(gen, -0.39, 0.39)};
      const EePose ee = pose_from_rel(limb, anchor, rel);
      EXPECT_TRUE(is_proper_rotation(ee.orientation));
      if (closest_point(limb, ee.position).segment_index != seg) continue;  // a neighbour is nearer
      const RelPose back = relative_pose(limb, ee);
      EXPECT_NEAR(back.p_y, rel.p_y, 1e-9);
      EXPECT_NEAR(back.p_z, rel.p_z, 1e-9);
      EXPECT_NEAR(back.theta_y, rel.theta_y, 1e-9);
      EXPECT_NEAR(back.theta_z, rel.theta_z, 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 800);
}

TEST(RelativePose, RoundTripsOnCollectionLimbsAcrossTargetSpace) {
  std::mt19937_64 gen(5);
  for (LimbKind kind : {LimbKind::arm, LimbKind::leg}) {
    const LimbModel limb = build_limb(collection_spec(kind));
    for (double frac : {0.15, 0.30, 0.80}) {
      for (int i = 0; i < 500; ++i) {
        const RelPose rel{uniform(gen, -0.1, 0.1), uniform(gen, 0.0, 0.15), uniform(gen, -0.39, 0.39),
                          uniform(gen, -0.39, 0.39)};
        const RelPose back = relative_pose(limb, pose_from_rel(limb, frac * limb.chain_length(), rel));
        EXPECT_LT((back.as_vector() - rel.as_vector()).cwiseAbs().maxCoeff(), 1e-9);
      }
    }
  }
}

TEST(RelativePose, HoveringAboveStraightLimb) {
  const LimbModel limb = straight_limb(1.0, 0.05);
  EePose ee;
  ee.position = Vec3(0.4, 0.02, 1.0 + 0.05 + 0.07);
  const RelPose r = relative_pose(limb, ee);
  EXPECT_NEAR(r.p_y, 0.02, 1e-12);
  EXPECT_NEAR(r.p_z, 0.07, 1e-12);
  EXPECT_NEAR(r.theta_y, 0.0, 1e-12);
  EXPECT_NEAR(r.theta_z, 0.0, 1e-12);
}

TEST(RelativePose, HeightGrowsPastSegmentEnd) {
  const LimbModel limb = straight_limb(1.0, 0.05);
  EePose ee;
  ee.position = Vec3(1.0 + 0.09, 0.0, 1.0 + 0.05 + 0.07);
  const RelPose r = relative_pose(limb, ee);
  EXPECT_NEAR(r.p_z, std::hypot(0.09, 0.12) - 0.05, 1e-12);
  EXPECT_NEAR(r.p_y, 0.0, 1e-12);

  // Lateral and vertical parts keep their ratio.
  ee.position = Vec3(-0.05, 0.03, 1.0 + 0.04);
  const RelPose s = relative_pose(limb, ee);
  const double full = std::sqrt(0.05 * 0.05 + 0.03 * 0.03 + 0.04 * 0.04);
  EXPECT_NEAR(s.p_y, 0.03 * full / 0.05, 1e-12);
  EXPECT_NEAR(s.p_z, 0.04 * full / 0.05 - 0.05, 1e-12);
}

TEST(RelativePose, YawThenPitchConvention) {
  const LimbModel limb = straight_limb(1.0, 0.05);
  EePose ee = pose_from_rel(limb, 0.5, {0.0, 0.05, 0.0, 0.3});
  // Positive yaw turns X_ee toward +Y.
  EXPECT_GT(ee.x_axis().y(), 0.0);
  ee = pose_from_rel(limb, 0.5, {0.0, 0.05, 0.2, 0.0});
  // Positive pitch about Y tips X_ee downward.
  EXPECT_LT(ee.x_axis().z(), 0.0);
  const RelPose r = relative_pose(limb, ee);
  EXPECT_NEAR(r.theta_y, 0.2, 1e-12);
}

TEST(LimbFrame, VerticalAxisIsDegenerate) {
  EXPECT_THROW(limb_frame(Vec3::UnitZ()), DegenerateFrame);
  EXPECT_THROW(limb_frame(-Vec3::UnitZ()), DegenerateFrame);
  EXPECT_NO_THROW(limb_frame(Vec3(1e-3, 0, 1).normalized()));
}

TEST(LimbFrame, IsRightHandedWithUpwardZ) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = random_unit(gen);
    if (std::abs(axis.z()) > 0.99) continue;
    const Mat3 f = limb_frame(axis);
    EXPECT_TRUE(is_proper_rotation(f));
    EXPECT_GE(f.col(2).z(), 0.0);
    EXPECT_NEAR(f.col(0).dot(axis), 1.0, 1e-12);
  }
}

TEST(ChainPoint, OutOfRangeAnchorThrows) {
  const LimbModel limb = straight_limb(0.5, 0.04);
  EXPECT_THROW(chain_point_at(limb, -1e-6), AnchorOutOfRange);
  EXPECT_THROW(chain_point_at(limb, 0.5 + 1e-6), AnchorOutOfRange);
  EXPECT_NEAR(chain_point_at(limb, 0.5).point.x(), 0.5, 1e-15);
}

TEST(LimbModel, ValidateRejectsBrokenChains) {
  LimbModel limb = straight_limb(0.5, 0.04);
  limb.segments.push_back({Vec3(0.6, 0, 1), Vec3(0.9, 0, 1), 0.04});
  EXPECT_THROW(limb.validate(), InvalidArgument);
  LimbModel thin = straight_limb(0.5, 0.0);
  EXPECT_THROW(thin.validate(), InvalidArgument);
}

TEST(Limbs, PresetsHaveRequestedBends) {
  const LimbEndpoints arm = limb_endpoints(arm_dressing_spec());
  const Vec3 upper = (arm.joint - arm.pivot).normalized(), fore = (arm.tip - arm.joint).normalized();
  EXPECT_NEAR(std::acos(upper.dot(fore)), std::numbers::pi / 6.0, 1e-12);
  EXPECT_NEAR(arm.tip.z(), arm.pivot.z(), 1e-12);

  const LimbEndpoints bath = limb_endpoints(arm_bathing_spec());
  const Vec3 forearm = (bath.tip - bath.joint).normalized();
  EXPECT_NEAR(std::asin(-forearm.z()), std::numbers::pi / 3.0, 1e-12);

  const LimbModel leg = build_limb(leg_bathing_spec());
  EXPECT_NEAR(leg.chain_length(), 0.87, 1e-12);
}
