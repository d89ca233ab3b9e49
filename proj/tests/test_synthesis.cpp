#include <gtest/gtest.h>

#include <filesystem>

#include "mobileposer/error.hpp"
#include "mobileposer/motion_gen.hpp"
#include "mobileposer/synthesis.hpp"
#include "test_util.hpp"

using namespace mobileposer;
using mptest::rad;

namespace {

MotionSequence translating(int frames, const std::function<Vec3(int)>& root, double fps = 60.0) {
  MotionSequence seq;
  seq.fps = fps;
  for (int t = 0; t < frames; ++t) {
    Pose p;
    p.root_trans = root(t);
    seq.frames.push_back(p);
  }
  return seq;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kRuntime;
}

}  // namespace

TEST(Orientation, RestPoseIsIdentity) {
  const Rig rig = builtin_toy_rig();
  const MotionSequence seq = translating(1, [](int) { return Vec3::Zero(); });
  for (auto loc : kAllLocations) EXPECT_TRUE(synth_orientation(rig, seq, loc, 0).isIdentity(0.0));
}

TEST(Orientation, ForearmQuarterTurnReachesWrist) {
  const Rig rig = builtin_toy_rig();
  MotionSequence seq = translating(1, [](int) { return Vec3::Zero(); });
  seq.frames[0].local_rot[joint::kLeftElbow] = rot_z(rad(90));
  EXPECT_LT((synth_orientation(rig, seq, BodyLocation::kLeftWrist, 0) - rot_z(rad(90))).norm(), 1e-12);
  EXPECT_TRUE(synth_orientation(rig, seq, BodyLocation::kHead, 0).isIdentity(0.0));
  EXPECT_TRUE(synth_orientation(rig, seq, BodyLocation::kRightWrist, 0).isIdentity(0.0));
}

TEST(Acceleration, StationaryIsZero) {
  const Rig rig = builtin_toy_rig();
  const MotionSequence seq = procedural_stand(10);
  MotionSequence still = seq;
  for (auto& f : still.frames) f = still.frames[0];
  for (auto loc : kAllLocations)
    for (const Vec3& a : synth_acceleration(rig, still, loc)) EXPECT_EQ(a, Vec3::Zero());
}

TEST(Acceleration, ExactOnQuadratic) {
  const Rig rig = builtin_toy_rig();
  const double fps = 60.0, c = 2.0;
  const auto seq = translating(30, [&](int t) { return Vec3(0.5 * c * std::pow(t / fps, 2), 0.9, 0); }, fps);
  for (auto loc : kAllLocations) {
    const auto acc = synth_acceleration(rig, seq, loc);
    ASSERT_EQ(acc.size(), 30u);
    for (const Vec3& a : acc) EXPECT_LT((a - Vec3(2, 0, 0)).norm(), 1e-9);
  }
}

TEST(Acceleration, ConstantVelocityIsZero) {
  const Rig rig = builtin_toy_rig();
  const auto seq = translating(20, [](int t) { return Vec3(0.02 * t, 0, -0.01 * t); });
  for (const Vec3& a : synth_acceleration(rig, seq, BodyLocation::kHead)) EXPECT_LT(a.norm(), 1e-9);
}

TEST(Acceleration, EndpointsCopyInterior) {
  const Rig rig = builtin_toy_rig();
  const auto seq = translating(6, [](int t) { return Vec3(0.01 * t * t * t, 0, 0); });
  const auto acc = synth_acceleration(rig, seq, BodyLocation::kRightPocket);
  EXPECT_EQ(acc.front(), acc[1]);
  EXPECT_EQ(acc.back(), acc[4]);
}

TEST(Acceleration, TooShort) {
  const auto seq = translating(2, [](int) { return Vec3::Zero(); });
  EXPECT_EQ(code_of([&] { synth_acceleration(builtin_toy_rig(), seq, BodyLocation::kHead); }), ErrorCode::kTooShort);
}

TEST(Normalize, ScaleOfThirty) {
  EXPECT_EQ(normalize_acceleration(Vec3(30, 0, 0)), Vec3(1, 0, 0));
  EXPECT_EQ(normalize_acceleration(Vec3::Zero()), Vec3::Zero());
  const Vec3 a(1.7, -3.3, 12.9);
  EXPECT_LT((denormalize_acceleration(normalize_acceleration(a)) - a).norm(), 1e-12);
}

TEST(Contacts, StandingStillAllTrue) {
  const auto seq = translating(10, [](int) { return Vec3(0, 0.95, 0); });
  for (const auto& c : contact_labels(builtin_toy_rig(), seq)) EXPECT_TRUE(c[0] && c[1]);
}

TEST(Contacts, FastFootFalseSlowFootTrue) {
  const Rig rig = builtin_toy_rig();
  const auto fast = translating(10, [](int t) { return Vec3(0.02 * t, 0, 0); });
  for (const auto& c : contact_labels(rig, fast)) EXPECT_FALSE(c[0] || c[1]);
  const auto slow = translating(10, [](int t) { return Vec3(0.005 * t, 0, 0); });
  for (const auto& c : contact_labels(rig, slow)) EXPECT_TRUE(c[0] && c[1]);
}

TEST(Contacts, SingleFootMoving) {
  const Rig rig = builtin_toy_rig();
  // Swinging the right hip moves only the right foot.
  MotionSequence seq = translating(10, [](int) { return Vec3::Zero(); });
  for (int t = 0; t < 10; ++t) seq.frames[t].local_rot[joint::kRightHip] = rot_x(0.05 * t);
  const auto labels = contact_labels(rig, seq);
  for (const auto& c : labels) {
    EXPECT_TRUE(c[0]);
    EXPECT_FALSE(c[1]);
  }
}

TEST(Contacts, FlipExactlyAtThreshold) {
  const Rig rig = builtin_toy_rig();
  const double u = kContactThreshold;
  const auto below = translating(4, [&](int t) { return Vec3(u * (1 - 1e-9) * t, 0, 0); });
  const auto above = translating(4, [&](int t) { return Vec3(u * (1 + 1e-9) * t, 0, 0); });
  for (const auto& c : contact_labels(rig, below)) EXPECT_TRUE(c[0] && c[1]);
  for (const auto& c : contact_labels(rig, above)) EXPECT_FALSE(c[0] || c[1]);
  // A custom threshold moves the flip point.
  for (const auto& c : contact_labels(rig, above, 0.01)) EXPECT_TRUE(c[0] && c[1]);
}

TEST(Contacts, FirstFrameCopiesSecond) {
  const Rig rig = builtin_toy_rig();
  const auto seq = translating(3, [](int t) { return Vec3(t == 2 ? 0.02 : 0.0, 0, 0); });
  const auto labels = contact_labels(rig, seq);
  EXPECT_EQ(labels[0], labels[1]);
  EXPECT_FALSE(labels[2][0]);
}

TEST(RootVelocity, StaticIsZero) {
  for (const Vec3& v : root_velocity_labels(translating(5, [](int) { return Vec3(1, 2, 3); }))) EXPECT_EQ(v, Vec3::Zero());
}

TEST(RootVelocity, WalkingForwardAtYawZero) {
  const auto seq = translating(10, [](int t) { return Vec3(1.2 / 60.0 * t, 0.95, 0); });
  const auto v = root_velocity_labels(seq);
  EXPECT_EQ(v[0], Vec3::Zero());
  for (int t = 1; t < 10; ++t) EXPECT_LT((v[t] - Vec3(0.02, 0, 0)).norm(), 1e-12);
}

TEST(RootVelocity, YawedRootRotatesIntoHeadingFrame) {
  auto seq = translating(10, [](int t) { return Vec3(1.2 / 60.0 * t, 0.95, 0); });
  const RotMat yaw = rot_y(rad(90));
  for (auto& f : seq.frames) f.local_rot[0] = yaw;
  const auto v = root_velocity_labels(seq);
  const Vec3 want = yaw.transpose() * Vec3(0.02, 0, 0);
  for (int t = 1; t < 10; ++t) EXPECT_LT((v[t] - want).norm(), 1e-12);
  EXPECT_LT((want - Vec3(0, 0, 0.02)).norm(), 1e-15);
}

TEST(RootVelocity, HeadingFrameRoundTrip) {
  std::mt19937_64 rng(30);
  for (int i = 0; i < 20; ++i) {
    const RotMat r = mptest::random_rotation(rng);
    const Vec3 w(0.3, -0.1, 0.7);
    EXPECT_LT((from_heading_frame(r, to_heading_frame(r, w)) - w).norm(), 1e-12);
    // The heading rotation is a pure yaw.
    const RotMat h = heading_rotation(r);
    EXPECT_LT((h * Vec3::UnitY() - Vec3::UnitY()).norm(), 1e-12);
  }
}

TEST(Labels, InvariantUnderConstantRootOffset) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 60;
  wp.turn_rate = 0.5;
  const MotionSequence a = procedural_walk(wp);
  MotionSequence b = a;
  for (auto& f : b.frames) f.root_trans += Vec3(4, 0.2, -7);
  EXPECT_EQ(contact_labels(rig, a), contact_labels(rig, b));
  const auto va = root_velocity_labels(a), vb = root_velocity_labels(b);
  for (std::size_t t = 0; t < va.size(); ++t) EXPECT_LT((va[t] - vb[t]).norm(), 1e-12);
}

TEST(Windows, Counts) {
  const Rig rig = builtin_toy_rig();
  const std::vector<DeviceCombo> one{*find_combo("lwrist")};
  WalkParams wp;
  wp.frames = 120;
  EXPECT_EQ(make_windows(rig, procedural_walk(wp), one, 60, 60).size(), 2u);
  wp.frames = 60;
  EXPECT_EQ(make_windows(rig, procedural_walk(wp), one, 60, 60).size(), 1u);
  wp.frames = 59;
  EXPECT_EQ(code_of([&] { make_windows(rig, procedural_walk(wp), one, 60, 60); }), ErrorCode::kTooShort);
}

TEST(Windows, MaskedSlotsZeroEveryFrame) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 90;
  const auto windows = make_windows(rig, procedural_walk(wp), enumerate_combos(), 60, 30);
  EXPECT_EQ(windows.size(), 48u);
  for (const auto& w : windows) {
    ASSERT_EQ(w.inputs.rows(), 60);
    ASSERT_EQ(w.inputs.cols(), 60);
    EXPECT_EQ(w.joints.cols(), 72);
    EXPECT_EQ(w.rot6d.cols(), 108);
    for (auto loc : kAllLocations) {
      const auto block = w.inputs.middleCols(slot_offset(loc), 12);
      if (w.combo.active(loc))
        EXPECT_GT(block.cwiseAbs().sum(), 0.0);
      else
        EXPECT_EQ(block.cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(Channels, Rot6dDecodesToClipPose) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 10;
  const auto seq = procedural_walk(wp);
  const ClipChannels ch = synthesize_channels(rig, seq);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Pose p = pose_from_rot6d(ch.rot6d[t]);
    for (int j : kPredictedJoints) EXPECT_LT((p.local_rot[j] - seq.frames[t].local_rot[j]).norm(), 1e-9);
    const auto rel = root_relative(forward_kinematics(rig, seq.frames[t]));
    const auto flat = flatten_joints(rel);
    for (int k = 0; k < kJointDim; ++k) EXPECT_EQ(ch.joints[t][k], flat[k]);
  }
}

TEST(Noise, ZeroSigmaUnchanged) {
  std::vector<double> x{1, 2, 3};
  add_joint_noise(x, 0.0, 5);
  EXPECT_EQ(x, (std::vector<double>{1, 2, 3}));
}

TEST(Noise, SampleStdWithinOnePercent) {
  std::vector<double> x(1000000, 0.0);
  add_joint_noise(x, 0.04, 123);
  double mean = 0.0, sq = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  for (double v : x) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (x.size() - 1));
  EXPECT_NEAR(sd, 0.04, 0.0004);
}

TEST(Noise, DeterministicForSeed) {
  std::vector<double> a(1000, 0.0), b(1000, 0.0), c(1000, 0.0);
  add_joint_noise(a, 0.04, 7);
  add_joint_noise(b, 0.04, 7);
  add_joint_noise(c, 0.04, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 70;
  Dataset ds;
  ds.window = 30;
  const std::vector<DeviceCombo> combos{*find_combo("head"), *find_combo("rpocket+lwrist")};
  ds.windows = make_windows(rig, procedural_walk(wp), combos, 30, 20);
  const auto path = (std::filesystem::temp_directory_path() / "mp_test_ds.bin").string();
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.windows.size(), ds.windows.size());
  EXPECT_EQ(back.window, 30);
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    EXPECT_EQ(back.windows[i].combo.mask, ds.windows[i].combo.mask);
    EXPECT_LT((back.windows[i].inputs - ds.windows[i].inputs).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((back.windows[i].root_vel - ds.windows[i].root_vel).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_EQ(back.windows[i].contacts, ds.windows[i].contacts);
  }
}
