#include <gtest/gtest.h>

#include <cmath>

#include "captrack/controller.hpp"
#include "captrack/errors.hpp"
#include "captrack/limbs.hpp"
#include "support.hpp"

using namespace captrack;
using captrack::testing::straight_limb;
using captrack::testing::TempDir;

namespace {

const MaterialMode kAir = MaterialMode::defaults(Material::air_gown);

// Oracle reading whatever limb the follower is given.
TrialLog run_oracle(const LimbTrajectory& limb_at, const ControlConfig& cfg, std::int64_t max_steps = 1'000'000) {
  return run_control_loop(limb_at, oracle_estimator(), cfg, SensorLayout::grid(), kAir, 1, max_steps);
}

// Time after which |truth.p_y - target| stays within `band`.
double settling_time(const TrialLog& log, double target, double band) {
  double settled = 0.0;
  for (const auto& r : log.steps)
    if (std::abs(r.truth.p_y - target) > band) settled = r.t + kSamplePeriod;
  return settled;
}

}  // namespace

TEST(Gains, PresetsAndNames) {
  EXPECT_EQ(to_string(Gains::smooth()), "smooth");
  EXPECT_EQ(to_string(Gains::responsive()), "responsive");
  Gains g = Gains::smooth();
  g.kp[0] = 0.3;
  EXPECT_EQ(to_string(g), "custom");
  EXPECT_EQ(Gains::responsive().kp, Vec4(0.2, 0.2, 0.1, 0.1));
  EXPECT_EQ(Gains::responsive().kd, Gains::smooth().kd);
  EXPECT_THROW(gains_from_string("stiff"), InvalidArgument);
  g.kd[3] = -0.1;
  EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(Pd, ActionFormula) {
  const Gains g = Gains::smooth();
  const Vec4 e(0.01, -0.02, 0.1, -0.05), prev(0.0, -0.01, 0.1, 0.0);
  const Vec4 u = compute_action(e, prev, 0.1, g);
  const Vec4 expected(0.025 * 0.01 + 0.0125 * 0.1, 0.025 * -0.02 + 0.0125 * -0.1, 0.1 * 0.1, 0.1 * -0.05 + 0.025 * -0.5);
  EXPECT_LT((u - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(compute_action(e, prev, 0.0, g), InvalidArgument);
  EXPECT_LT((compute_error({0.0, 0.05, 0.0, 0.0}, {0.01, 0.02, 0.1, -0.1}) - Vec4(-0.01, 0.03, -0.1, 0.1)).norm(), 1e-15);
}

TEST(Pd, StepBoundsCoverTargetSpaceErrors) {
  const Gains g = Gains::responsive();
  const Vec4 worst(0.2, 0.15, 0.7854, 0.7854);
  const Vec4 u = compute_action(worst, -worst, 0.1, g);
  EXPECT_GE(max_translation_step(g, 0.1) + 1e-12, std::max(std::abs(u[0]), std::abs(u[1])));
  EXPECT_GE(max_rotation_step(g, 0.1) + 1e-12, std::max(std::abs(u[2]), std::abs(u[3])));
}

TEST(TransformAction, MovesInEstimatedLimbFrame) {
  const LimbModel limb = straight_limb(1.0, 0.05);
  const RelPose start{0.01, 0.04, 0.1, -0.2};
  const EePose ee = pose_from_rel(limb, 0.5, start);
  const Vec4 u(0.005, -0.01, 0.02, 0.03);
  const RelPose after = relative_pose(limb, transform_action(u, ee, start));
  EXPECT_NEAR(after.p_y, start.p_y + u[0], 1e-12);
  EXPECT_NEAR(after.p_z, start.p_z + u[1], 1e-12);
  EXPECT_NEAR(after.theta_y, start.theta_y + u[2], 1e-12);
  EXPECT_NEAR(after.theta_z, start.theta_z + u[3], 1e-12);
}

TEST(TransformAction, VerticalImpliedAxisIsDegenerate) {
  EePose ee;
  ee.orientation = yaw_pitch_rotation(-std::numbers::pi / 2.0, 0.0);  // X_ee straight up
  EXPECT_THROW(transform_action(Vec4::Zero(), ee, RelPose{}), DegenerateFrame);
}

TEST(Contact, SpringForceFromGap) {
  const LimbModel limb = straight_limb(1.0, 0.05);
  EePose ee;
  ee.position = Vec3(0.5, 0.0, 1.0 + 0.05 + 0.005);
  EXPECT_NEAR(contact_force(limb, ee, ClothParams::washcloth()), 600.0 * 0.01, 1e-9);
  EXPECT_EQ(contact_force(limb, ee, ClothParams::bare()), 0.0);
  ee.position.z() = 1.0 + 0.05 + 0.02;
  EXPECT_EQ(contact_force(limb, ee, ClothParams::washcloth()), 0.0);
  EXPECT_NEAR(advance(ee, 0.1).position.x(), 0.6, 1e-15);
}

TEST(Follower, OracleHoldsDesiredOffsetOnStraightLimb) {
  const LimbModel limb = straight_limb(0.6, 0.05);
  ControlConfig cfg;
  const TrialLog log = run_oracle([&](double) { return limb; }, cfg);
  ASSERT_TRUE(log.summary.completed);
  EXPECT_TRUE(log.summary.success);
  for (const auto& r : log.steps) {
    ASSERT_LT(std::abs(r.truth.p_z - 0.05), 1e-3);
    ASSERT_LT(std::abs(r.truth.p_y), 1e-3);
    ASSERT_LT(std::abs(r.u[1]), 1e-12);
  }
  EXPECT_NEAR(log.summary.mean_axis_distance, 0.10, 1e-3);
}

TEST(Follower, ResponsiveGainsSettleFasterOnLateralStep) {
  const LimbModel limb = straight_limb(2.0, 0.05);
  LimbModel shifted = limb;
  for (auto& c : shifted.segments) {
    c.a.y() += 0.05;
    c.b.y() += 0.05;
  }
  const auto step_limb = [&](double t) { return t > 0.0 ? shifted : limb; };
  ControlConfig cfg;
  cfg.traversal_speed = 0.0;
  cfg.gains = Gains::smooth();
  const double smooth = settling_time(run_oracle(step_limb, cfg, 6000), 0.0, 0.05 * 0.05);
  cfg.gains = Gains::responsive();
  const double responsive = settling_time(run_oracle(step_limb, cfg, 6000), 0.0, 0.05 * 0.05);
  EXPECT_GT(smooth, 0.0);
  EXPECT_LT(responsive, smooth);
  EXPECT_LT(smooth, 59.0);  // settles inside the run
}

TEST(Follower, ForceBreachAborts) {
  const LimbModel limb = straight_limb(0.6, 0.05);
  ControlConfig cfg;
  cfg.y_desired = {0.0, -0.02, 0.0, 0.0};
  cfg.cloth = ClothParams::bare();
  const TrialLog log = run_oracle([&](double) { return limb; }, cfg);
  EXPECT_EQ(log.summary.abort, AbortReason::force_breach);
  EXPECT_FALSE(log.summary.success);
  EXPECT_EQ(log.steps.size(), 1u);
  EXPECT_NEAR(log.steps[0].force, 12.0, 1e-9);
}

TEST(Follower, NonFiniteEstimateAborts) {
  const LimbModel limb = straight_limb(0.6, 0.05);
  const Estimator nan_model = [](std::span<const double>, const LimbModel&, const EePose&) {
    return RelPose{0.0, std::nan(""), 0.0, 0.0};
  };
  const TrialLog log = run_control_loop([&](double) { return limb; }, nan_model, {}, SensorLayout::grid(), kAir, 1);
  EXPECT_EQ(log.summary.abort, AbortReason::model_non_finite);

  const Estimator throwing = [](std::span<const double>, const LimbModel&, const EePose&) -> RelPose {
    throw NonFiniteInput("bad window");
  };
  EXPECT_EQ(run_control_loop([&](double) { return limb; }, throwing, {}, SensorLayout::grid(), kAir, 1).summary.abort,
            AbortReason::model_non_finite);
}

TEST(Follower, VerticalLimbAbortsWithDegenerateFrame) {
  const LimbModel limb = straight_limb(0.6, 0.05);
  LimbModel upright;
  upright.segments.push_back({Vec3(0.03, 0, 0.0), Vec3(0.03, 0, 1.0), 0.05});
  const TrialLog log = run_oracle([&](double t) { return t < 0.5 ? limb : upright; }, {});
  EXPECT_EQ(log.summary.abort, AbortReason::degenerate_frame);
}

TEST(Follower, LogTimingAndRecomputableSummary) {
  const LimbModel limb = build_limb(arm_dressing_spec());
  const TrialLog log = run_oracle([&](double) { return limb; }, {});
  ASSERT_GT(log.steps.size(), 100u);
  for (std::size_t i = 1; i < log.steps.size(); ++i)
    ASSERT_NEAR(log.steps[i].t - log.steps[i - 1].t, 0.01, 1e-9);
  std::size_t actions = 0;
  for (const auto& r : log.steps) actions += r.action_step;
  EXPECT_EQ(actions, (log.steps.size() + 9) / 10);
  const TrialSummary again = summarize(log.steps, log.summary.completed, log.summary.abort, Task::dressing, 0.03);
  EXPECT_EQ(again.mean_axis_distance, log.summary.mean_axis_distance);
  EXPECT_EQ(again.success, log.summary.success);
  EXPECT_NEAR(log.summary.completion_arclength, limb.chain_length(), 2e-4);
}

TEST(Follower, DeterministicForSeed) {
  const LimbModel limb = build_limb(arm_dressing_spec());
  const auto noisy = [](std::span<const double> w, const LimbModel& l, const EePose& ee) {
    RelPose y = relative_pose(l, ee);
    y.p_z += 0.01 * (w[0] - w[1]);
    return y;
  };
  const auto run = [&](std::uint64_t seed) {
    return run_control_loop([&](double) { return limb; }, noisy, {}, SensorLayout::grid(), kAir, seed);
  };
  const TrialLog a = run(3), b = run(3), c = run(4);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    ASSERT_EQ(a.steps[i].c, b.steps[i].c);
    ASSERT_EQ(a.steps[i].ee.position, b.steps[i].ee.position);
  }
  EXPECT_NE(a.steps[5].c, c.steps[5].c);
}

TEST(Summary, BathingNeedsContactCoverage) {
  std::vector<StepRecord> steps(100);
  for (std::size_t i = 0; i < steps.size(); ++i) steps[i].force = i < 96 ? 3.0 : 0.0;
  EXPECT_TRUE(summarize(steps, true, AbortReason::none, Task::bathing, 0.0).success);
  steps[50].force = 0.0;
  steps[51].force = 0.0;
  const TrialSummary s = summarize(steps, true, AbortReason::none, Task::bathing, 0.0);
  EXPECT_FALSE(s.success);
  EXPECT_NEAR(s.contact_fraction, 0.94, 1e-12);
  EXPECT_TRUE(summarize(steps, true, AbortReason::none, Task::dressing, 0.0).success);
  EXPECT_FALSE(summarize(steps, false, AbortReason::none, Task::dressing, 0.0).success);
}

TEST(TrialCsv, RoundTripsExactly) {
  const LimbModel limb = build_limb(arm_dressing_spec());
  const TrialLog log = run_oracle([&](double) { return limb; }, {}, 400);
  TempDir dir("trial");
  write_trial_csv(log.steps, dir / "t.csv");
  const auto back = read_trial_csv(dir / "t.csv");
  ASSERT_EQ(back.size(), log.steps.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto &a = back[i], &b = log.steps[i];
    ASSERT_EQ(a.t, b.t);
    ASSERT_EQ(a.ee.position, b.ee.position);
    ASSERT_EQ(a.ee.orientation, b.ee.orientation);
    ASSERT_EQ(a.truth, b.truth);
    ASSERT_EQ(a.predicted, b.predicted);
    ASSERT_EQ(a.c, b.c);
    ASSERT_EQ(a.force, b.force);
    ASSERT_EQ(a.u, b.u);
    ASSERT_EQ(a.axis_distance, b.axis_distance);
    ASSERT_EQ(a.traversed, b.traversed);
    ASSERT_EQ(a.action_step, b.action_step);
  }
  EXPECT_EQ(trial_csv_columns().size(), 4u + 9 + 8 + 6 + 8);
}

TEST(TrialCsv, HeaderOnlyAndMalformed) {
  TempDir dir("trial_bad");
  write_trial_csv({}, dir / "empty.csv");
  EXPECT_TRUE(read_trial_csv(dir / "empty.csv").empty());
  std::ofstream(dir / "bad.csv") << "t,x\n1,2\n";
  EXPECT_THROW(read_trial_csv(dir / "bad.csv"), IoError);
  EXPECT_THROW(read_trial_csv(dir / "missing.csv"), IoError);
}
