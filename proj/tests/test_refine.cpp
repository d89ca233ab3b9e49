#include <gtest/gtest.h>

#include "mobileposer/motion_gen.hpp"
#include "mobileposer/refine.hpp"
#include "mobileposer/synthesis.hpp"
#include "test_util.hpp"

using namespace mobileposer;
using mptest::rad;

namespace {

double max_geodesic(const Pose& a, const Pose& b) {
  double worst = 0.0;
  for (int j = 0; j < kJointCount; ++j) worst = std::max(worst, geodesic_angle(a.local_rot[j], b.local_rot[j]));
  return worst;
}

Pose tilted(double degrees) {
  Pose p;
  for (int j : kPredictedJoints) p.local_rot[j] = mptest::axis_angle(Vec3(1, 2, 3), rad(degrees));
  return p;
}

}  // namespace

TEST(Pd, FirstCallSnapsToTarget) {
  PdState s;
  const Pose target = tilted(20);
  EXPECT_LT(max_geodesic(pd_smooth(s, target, 1 / 60.0, 400, 40), target), 1e-9);
}

TEST(Pd, CriticallyDampedEnvelope) {
  // From rest at offset e0, x(t) - target = e0 (1 + w t) exp(-w t) with w = sqrt(kp).
  const double kp = 400, kd = 2 * std::sqrt(kp), dt = 1 / 60.0;
  PdState s;
  pd_smooth(s, tilted(0), dt, kp, kd);
  const Pose target = tilted(2);
  const auto start = s.pos;
  const auto goal = pose_to_rot6d(target);
  const int steps = static_cast<int>(std::ceil(5 / std::sqrt(kp) / dt));
  Pose out;
  for (int k = 1; k <= steps; ++k) {
    out = pd_smooth(s, target, dt, kp, kd);
    const double wt = std::sqrt(kp) * k * dt;
    const double ratio = (1 + wt) * std::exp(-wt);
    for (int i = 0; i < kRot6dDim; ++i) ASSERT_NEAR(s.pos[i] - goal[i], ratio * (start[i] - goal[i]), 1e-12);
  }
  EXPECT_LT(max_geodesic(out, target), 0.1);
}

TEST(Pd, LongHorizonConverges) {
  PdState s;
  pd_smooth(s, tilted(0), 1 / 60.0, 400, 40);
  const Pose target = tilted(45);
  Pose out;
  for (int k = 0; k < 120; ++k) out = pd_smooth(s, target, 1 / 60.0, 400, 40);
  EXPECT_LT(max_geodesic(out, target), 0.1);
}

TEST(Pd, StiffLimitPassesThrough) {
  PdState s;
  pd_smooth(s, tilted(0), 1 / 60.0, 1e6, 2e3);
  const Pose target = tilted(30);
  EXPECT_LT(max_geodesic(pd_smooth(s, target, 1 / 60.0, 1e6, 2e3), target), 0.2);
}

TEST(Pd, ZeroGainsFreeze) {
  PdState s;
  const Pose start = tilted(10);
  pd_smooth(s, start, 1 / 60.0, 0, 0);
  for (int k = 0; k < 10; ++k) EXPECT_LT(max_geodesic(pd_smooth(s, tilted(40), 1 / 60.0, 0, 0), start), 1e-9);
}

TEST(Pd, OutputIsValidPoseAndKeepsUnpredicted) {
  std::mt19937_64 rng(1);
  PdState s;
  for (int k = 0; k < 30; ++k) {
    const Pose target = mptest::random_pose(rng);
    const Pose out = pd_smooth(s, target, 1 / 60.0, 400, 40);
    for (int j = 0; j < kJointCount; ++j) ASSERT_TRUE(is_rotation(out.local_rot[j], 1e-9));
    for (int j : kIdentityJoints) ASSERT_EQ(out.local_rot[j], target.local_rot[j]);
    ASSERT_EQ(out.root_trans, target.root_trans);
  }
}

TEST(FootLock, PlantedWalkDoesNotSkate) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 240;
  const MotionSequence clip = procedural_walk(wp);
  const auto labels = contact_labels(rig, clip);
  FootLockState st;
  Vec3 prev_foot;
  int prev_foot_id = -1;
  int locked_frames = 0;
  for (std::size_t t = 0; t < clip.size(); ++t) {
    // Translation estimate that skates forward 5 mm per frame faster than the body.
    const Vec3 skating = clip.frames[t].root_trans + Vec3(0.005 * t, 0, 0);
    const std::array<double, 2> c{labels[t][0] ? 1.0 : 0.0, labels[t][1] ? 1.0 : 0.0};
    const Vec3 adj = foot_lock(st, clip.frames[t], skating, c, rig, 0.7);
    Pose p = clip.frames[t];
    p.root_trans = adj;
    const int foot = supporting_foot(c);
    const Vec3 world = forward_kinematics(rig, p).positions[foot == 0 ? joint::kLeftFoot : joint::kRightFoot];
    if (st.locked && prev_foot_id == foot) {
      EXPECT_LT((world - prev_foot).norm(), 1e-3) << "frame " << t;
      ++locked_frames;
    }
    prev_foot = world;
    prev_foot_id = st.locked ? foot : -1;
  }
  EXPECT_GT(locked_frames, 100);
}

TEST(FootLock, AirborneUnchanged) {
  const Rig rig = builtin_toy_rig();
  FootLockState st;
  const Vec3 t(1, 2, 3);
  EXPECT_EQ(foot_lock(st, Pose{}, t, {0.6, 0.7}, rig, 0.7), t);
  EXPECT_FALSE(st.locked);
}

TEST(FootLock, StationaryCycleIdempotent) {
  const Rig rig = builtin_toy_rig();
  FootLockState st;
  const Vec3 t(0.3, 0.95, -0.2);
  for (int cycle = 0; cycle < 5; ++cycle) {
    for (int k = 0; k < 10; ++k) EXPECT_LT((foot_lock(st, Pose{}, t, {0.95, 0.1}, rig, 0.7) - t).norm(), 1e-15);
    for (int k = 0; k < 10; ++k) EXPECT_LT((foot_lock(st, Pose{}, t, {0.1, 0.1}, rig, 0.7) - t).norm(), 1e-15);
  }
}

TEST(GroundClamp, RaisesByPenetrationDepth) {
  const Rig rig = builtin_toy_rig();
  const Pose rest;
  const double low = lowest_foot_point(rig, rest);
  const Vec3 t(0.2, -low - 0.05, 0.4);  // lowest foot point at -0.05
  Pose placed = rest;
  placed.root_trans = t;
  ASSERT_NEAR(lowest_foot_point(rig, placed), -0.05, 1e-12);
  const Vec3 out = ground_clamp(rest, t, rig, 0.0);
  EXPECT_NEAR(out.y() - t.y(), 0.05, 1e-12);
  EXPECT_EQ(out.x(), t.x());
  EXPECT_EQ(out.z(), t.z());
  EXPECT_EQ(ground_clamp(rest, out, rig, 0.0), out);
}

TEST(GroundClamp, AboveFloorUnchanged) {
  const Rig rig = builtin_toy_rig();
  const Vec3 t(0, 2.0, 0);
  EXPECT_EQ(ground_clamp(Pose{}, t, rig, 0.0), t);
}

TEST(GroundClamp, FootVerticesCount) {
  // Lowest point includes skinned foot vertices, not only joints.
  Rig rig = builtin_toy_rig();
  const double with_skin = lowest_foot_point(rig, Pose{});
  rig.vertices.clear();
  EXPECT_LE(with_skin, lowest_foot_point(rig, Pose{}));
}

TEST(Refiner, NothingBelowFloor) {
  const Rig rig = builtin_toy_rig();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  RefinerConfig rc;
  rc.floor_height = 0.1;
  Refiner refiner(rig, rc, 60);
  for (int t = 0; t < 100; ++t) {
    Pose target = mptest::random_pose(rng);
    const auto out = refiner.step(target, Vec3(0, u(rng) - 0.5, 0), {u(rng), u(rng)});
    EXPECT_GE(lowest_foot_point(rig, out.pose), 0.1 - 1e-6);
  }
}

TEST(Refiner, Causal) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 60;
  const auto a = procedural_walk(wp).frames;
  auto b = a;
  std::mt19937_64 rng(3);
  for (std::size_t t = 30; t < b.size(); ++t) b[t] = mptest::random_pose(rng);
  Refiner ra(rig, {}, 60), rb(rig, {}, 60);
  for (std::size_t t = 0; t < 30; ++t) {
    const auto oa = ra.step(a[t], a[t].root_trans, {0.8, 0.1});
    const auto ob = rb.step(b[t], b[t].root_trans, {0.8, 0.1});
    EXPECT_EQ(oa.translation, ob.translation);
    for (int j = 0; j < kJointCount; ++j) EXPECT_EQ(oa.pose.local_rot[j], ob.pose.local_rot[j]);
  }
}

TEST(Refiner, ResetRestartsTracking) {
  const Rig rig = builtin_toy_rig();
  Refiner r(rig, {}, 60);
  r.step(tilted(0), Vec3(0, 1, 0), {0, 0});
  r.reset();
  const auto out = r.step(tilted(30), Vec3(0, 1, 0), {0, 0});
  EXPECT_LT(max_geodesic(out.pose, tilted(30)), 1e-9);
}

TEST(Refiner, InvalidGains) {
  RefinerConfig rc;
  rc.kp = -1;
  EXPECT_THROW(rc.validate(), std::exception);
}

TEST(Refiner, JitterBenchmark) {
  const auto r = mptest::run_jitter_benchmark(builtin_toy_rig());
  EXPECT_GE(r.reduction(), 0.5);
  EXPECT_LE(r.mpjpe_increase(), 1.0);
  EXPECT_LE(r.jitter_refined, r.jitter_noisy);
}
