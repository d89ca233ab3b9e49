#include "mobileposer/motion_gen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mobileposer {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLegLength = 0.83;

Pose arms_down(Pose pose, double swing_left, double swing_right, double elbow) {
  pose.local_rot[16] = rot_z(-1.2) * rot_y(swing_left);
  pose.local_rot[17] = rot_z(1.2) * rot_y(swing_right);
  pose.local_rot[joint::kLeftElbow] = rot_y(-elbow);
  pose.local_rot[joint::kRightElbow] = rot_y(elbow);
  return pose;
}

}  // namespace

MotionSequence procedural_walk(const WalkParams& p) {
  double hip_amp = p.speed / (2 * kPi * p.cadence * kLegLength);
  double knee_amp = 0.6;
  double arm_amp = p.arm_swing;
  if (p.seed != 0) {
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> u(0.85, 1.15);
    hip_amp *= u(rng);
    knee_amp *= u(rng);
    arm_amp *= u(rng);
  }

  MotionSequence seq;
  seq.fps = p.fps;
  seq.frames.resize(static_cast<std::size_t>(p.frames));
  Vec3 pos(0, p.pelvis_height, 0);
  for (int t = 0; t < p.frames; ++t) {
    const double time = t / p.fps;
    const double phase = 2 * kPi * p.cadence * time;
    const double yaw = p.initial_yaw + p.turn_rate * time;
    if (t > 0) pos += rot_y(yaw) * Vec3(0, 0, p.speed / p.fps);
    pos.y() = p.pelvis_height + 0.015 * std::cos(2 * phase);

    Pose pose;
    pose.local_rot[0] = rot_y(yaw) * rot_x(0.05) * rot_z(0.04 * std::sin(phase));
    pose.local_rot[1] = rot_x(-hip_amp * std::sin(phase));
    pose.local_rot[2] = rot_x(hip_amp * std::sin(phase));
    pose.local_rot[joint::kLeftKnee] = rot_x(knee_amp * std::max(0.0, std::sin(phase + 0.5 * kPi)));
    pose.local_rot[joint::kRightKnee] = rot_x(knee_amp * std::max(0.0, std::sin(phase - 0.5 * kPi)));
    pose.local_rot[joint::kLeftAnkle] = rot_x(0.15 * std::sin(phase));
    pose.local_rot[joint::kRightAnkle] = rot_x(-0.15 * std::sin(phase));
    pose.local_rot[3] = rot_y(-0.06 * std::sin(phase));
    pose.local_rot[6] = rot_x(0.02);
    pose.local_rot[joint::kHead] = rot_y(0.05 * std::sin(0.5 * phase));
    pose = arms_down(pose, arm_amp * std::sin(phase), arm_amp * std::sin(phase), 0.3 + 0.1 * std::cos(phase));
    pose.root_trans = pos;
    seq.frames[static_cast<std::size_t>(t)] = pose;
  }
  return seq;
}

MotionSequence procedural_stand(int frames, double fps, double pelvis_height) {
  MotionSequence seq;
  seq.fps = fps;
  seq.frames.resize(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const double time = t / fps;
    Pose pose = arms_down(Pose{}, 0.0, 0.0, 0.2);
    pose.local_rot[3] = rot_z(0.03 * std::sin(2 * kPi * 0.25 * time));
    pose.local_rot[joint::kHead] = rot_y(0.2 * std::sin(2 * kPi * 0.2 * time));
    pose.root_trans = Vec3(0, pelvis_height, 0);
    seq.frames[static_cast<std::size_t>(t)] = pose;
  }
  return seq;
}

}  // namespace mobileposer
