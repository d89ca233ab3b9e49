#pragma once

#include <array>
#include <cmath>
#include <span>

#include "mobileposer/estimator.hpp"
#include "mobileposer/skeleton.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer {

struct RefinerConfig {
  double kp = 400.0;  // 1/s^2
  double kd = 40.0;   // 1/s; 2*sqrt(kp) is critical damping
  double contact_lock_threshold = 0.7;
  double floor_height = 0.0;  // m, along +Y

  static RefinerConfig critically_damped(double kp) {
    RefinerConfig c;
    c.kp = kp;
    c.kd = 2.0 * std::sqrt(kp);
    return c;
  }
  void validate() const;
};

/// Tracking state in 6D coordinates of the predicted joints.
struct PdState {
  std::array<double, kRot6dDim> pos{};
  std::array<double, kRot6dDim> vel{};
  bool initialized = false;
};

/// One step of x'' = kp (target - x) - kd x' with the target held over `dt`,
/// integrated exactly. The first call snaps to the target. Unpredicted
/// joints and root translation are copied from `target`.
Pose pd_smooth(PdState& state, const Pose& target, double dt, double kp, double kd);

struct FootLockState {
  bool locked = false;
  int foot = 0;                      // 0 left, 1 right
  Vec3 anchor = Vec3::Zero();        // world position of the locked foot
  Vec3 correction = Vec3::Zero();    // accumulated offset added to the translation
};

/// Pins the supporting foot while max(contacts) exceeds `threshold` by
/// shifting the root translation; returns the adjusted translation.
Vec3 foot_lock(FootLockState& state, const Pose& pose, const Vec3& translation, const std::array<double, 2>& contacts,
               const Rig& rig, double threshold);

/// Raises the translation so no foot joint or foot vertex is below `floor`.
Vec3 ground_clamp(const Pose& pose, const Vec3& translation, const Rig& rig, double floor);

/// Lowest +Y coordinate over the foot joints and foot-weighted vertices.
double lowest_foot_point(const Rig& rig, const Pose& pose);

/// Causal per-stream refiner: PD smoothing, then foot lock, then ground clamp.
class Refiner {
 public:
  Refiner(const Rig& rig, RefinerConfig config, double fps);

  struct Output {
    Pose pose;  // root_trans = refined translation
    Vec3 translation = Vec3::Zero();
  };

  Output step(const Pose& target, const Vec3& translation, const std::array<double, 2>& contacts);
  Output step(const PoseOutput& estimate) { return step(estimate.full_pose, estimate.translation, estimate.contacts); }
  void reset();

 private:
  const Rig* rig_;
  RefinerConfig config_;
  double dt_;
  PdState pd_;
  FootLockState lock_;
};

}  // namespace mobileposer
