#include "mobileposer/refine.hpp"

#include <algorithm>
#include <limits>

#include "mobileposer/error.hpp"

namespace mobileposer {

void RefinerConfig::validate() const {
  if (!(kp >= 0) || !(kd >= 0)) fail(ErrorCode::kUsage, "refiner gains must be nonnegative");
  if (!(contact_lock_threshold >= 0 && contact_lock_threshold <= 1))
    fail(ErrorCode::kUsage, "contact lock threshold must be in [0, 1]");
}

namespace {

// exp(A dt) for A = [[0, 1], [-kp, -kd]]:
// exp(s dt) * (C I + S (A - s I)) with s = -kd/2 and q^2 = s^2 - kp.
Eigen::Matrix2d pd_transition(double kp, double kd, double dt) {
  const double s = -0.5 * kd;
  const double q2 = s * s - kp;
  double ec = 0.0;  // exp(s dt) * C
  double es = 0.0;  // exp(s dt) * S
  if (std::abs(q2) * dt * dt < 1e-10) {
    const double e = std::exp(s * dt);
    ec = e * (1.0 + 0.5 * q2 * dt * dt);
    es = e * dt * (1.0 + q2 * dt * dt / 6.0);
  } else if (q2 > 0) {
    const double r = std::sqrt(q2);
    const double ep = std::exp((s + r) * dt);
    const double em = std::exp((s - r) * dt);
    ec = 0.5 * (ep + em);
    es = 0.5 * (ep - em) / r;
  } else {
    const double w = std::sqrt(-q2);
    const double e = std::exp(s * dt);
    ec = e * std::cos(w * dt);
    es = e * std::sin(w * dt) / w;
  }
  Eigen::Matrix2d shifted;
  shifted << -s, 1.0, -kp, -kd - s;
  return ec * Eigen::Matrix2d::Identity() + es * shifted;
}

constexpr std::array<int, 4> kFootJoints{joint::kLeftAnkle, joint::kRightAnkle, joint::kLeftFoot, joint::kRightFoot};

bool is_foot_joint(int j) { return std::find(kFootJoints.begin(), kFootJoints.end(), j) != kFootJoints.end(); }

}  // namespace

Pose pd_smooth(PdState& state, const Pose& target, double dt, double kp, double kd) {
  if (!(dt > 0)) fail(ErrorCode::kUsage, "pd_smooth needs dt > 0");
  const auto goal = pose_to_rot6d(target);
  if (!state.initialized) {
    state.pos = goal;
    state.vel.fill(0.0);
    state.initialized = true;
  } else {
    const Eigen::Matrix2d phi = pd_transition(kp, kd, dt);
    for (int i = 0; i < kRot6dDim; ++i) {
      const double e = state.pos[i] - goal[i];
      const double v = state.vel[i];
      state.pos[i] = goal[i] + phi(0, 0) * e + phi(0, 1) * v;
      state.vel[i] = phi(1, 0) * e + phi(1, 1) * v;
    }
  }
  Pose out = decode_pose(state.pos, target.root_trans);
  for (int j : kIdentityJoints) out.local_rot[j] = target.local_rot[j];
  return out;
}

Vec3 foot_lock(FootLockState& state, const Pose& pose, const Vec3& translation, const std::array<double, 2>& contacts,
               const Rig& rig, double threshold) {
  Vec3 adjusted = translation + state.correction;
  const double q = std::max(contacts[0], contacts[1]);
  if (q <= threshold) {
    state.locked = false;
    return adjusted;
  }
  const int foot = supporting_foot(contacts);
  Pose p = pose;
  p.root_trans = adjusted;
  const Vec3 world = forward_kinematics(rig, p).positions[foot == 0 ? joint::kLeftFoot : joint::kRightFoot];
  if (!state.locked || state.foot != foot) {
    state.locked = true;
    state.foot = foot;
    state.anchor = world;
    return adjusted;
  }
  const Vec3 drift = world - state.anchor;
  state.correction -= drift;
  return adjusted - drift;
}

double lowest_foot_point(const Rig& rig, const Pose& pose) {
  const FkResult fk = forward_kinematics(rig, pose);
  double lowest = std::numeric_limits<double>::infinity();
  for (int j : kFootJoints) lowest = std::min(lowest, fk.positions[j].y());
  if (rig.has_skin()) {
    const std::vector<Vec3> verts = skin_vertices(rig, fk);
    for (std::size_t v = 0; v < verts.size(); ++v) {
      const auto& w = rig.vertices[v].weights;
      const auto dominant = std::max_element(w.begin(), w.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
      if (dominant != w.end() && is_foot_joint(dominant->first)) lowest = std::min(lowest, verts[v].y());
    }
  }
  return lowest;
}

Vec3 ground_clamp(const Pose& pose, const Vec3& translation, const Rig& rig, double floor) {
  Pose p = pose;
  p.root_trans = translation;
  const double lowest = lowest_foot_point(rig, p);
  Vec3 out = translation;
  if (lowest < floor) out.y() += floor - lowest;
  return out;
}

Refiner::Refiner(const Rig& rig, RefinerConfig config, double fps) : rig_(&rig), config_(config), dt_(1.0 / fps) {
  config_.validate();
  if (!(fps > 0)) fail(ErrorCode::kUsage, "fps must be positive");
}

void Refiner::reset() {
  pd_ = PdState{};
  lock_ = FootLockState{};
}

Refiner::Output Refiner::step(const Pose& target, const Vec3& translation, const std::array<double, 2>& contacts) {
  Output out;
  out.pose = pd_smooth(pd_, target, dt_, config_.kp, config_.kd);
  Vec3 t = foot_lock(lock_, out.pose, translation, contacts, *rig_, config_.contact_lock_threshold);
  t = ground_clamp(out.pose, t, *rig_, config_.floor_height);
  out.translation = t;
  out.pose.root_trans = t;
  return out;
}

}  // namespace mobileposer
