#pragma once

#include <cstdint>

#include "mobileposer/skeleton.hpp"

namespace mobileposer {

// Procedural clips for demos, smoke training and tests. Wrists, hands and
// toes stay at identity so every rotation is inside the predicted set.

struct WalkParams {
  int frames = 200;
  double fps = 60.0;
  double speed = 1.2;         // m/s along the heading
  double cadence = 0.9;       // strides per second
  double turn_rate = 0.0;     // rad/s of heading change
  double initial_yaw = 0.0;   // rad
  double arm_swing = 0.35;    // rad
  double pelvis_height = 0.95;
  std::uint64_t seed = 0;     // 0 = nominal gait; otherwise jitters amplitudes
};

MotionSequence procedural_walk(const WalkParams& params);

/// Standing with arms down and a slow sway of the upper body.
MotionSequence procedural_stand(int frames, double fps = 60.0, double pelvis_height = 0.95);

}  // namespace mobileposer
