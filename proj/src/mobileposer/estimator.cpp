#include "mobileposer/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "mobileposer/error.hpp"
#include "mobileposer/train.hpp"

namespace mobileposer {

using nn::Seq;

// ---- calibration -----------------------------------------------------------

CalibrationProfile calibrate_tpose(std::span<const RawReadingMap> frames, const DeviceCombo& combo, const Rig& rig,
                                   const CalibrationOptions& options) {
  if (static_cast<double>(frames.size()) < options.fps)
    fail(ErrorCode::kTooShort, "calibration needs at least one second of frames, got " + std::to_string(frames.size()));

  const FkResult rest = forward_kinematics(rig, Pose{});
  std::array<RotMat, kLocationCount> mean_rot;
  std::array<Vec3, kLocationCount> mean_acc;
  for (BodyLocation loc : combo.locations()) {
    const int k = static_cast<int>(loc);
    Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
    for (const auto& f : frames) {
      auto it = f.find(loc);
      if (it == f.end()) fail(ErrorCode::kMissingReading, "calibration frame lacks " + std::string(location_id(loc)));
      sum += it->second.orient;
    }
    mean_rot[k] = project_to_rotation(sum);
    double sq = 0.0;
    for (const auto& f : frames) {
      const double a = geodesic_angle(mean_rot[k], f.at(loc).orient);
      sq += a * a;
    }
    const double rms = std::sqrt(sq / static_cast<double>(frames.size()));
    if (rms > options.max_rms_deg)
      fail(ErrorCode::kTooNoisy, std::string(location_id(loc)) + " moved during calibration (" + std::to_string(rms) +
                                     " deg RMS)");
  }

  CalibrationProfile p;
  if (options.reference) {
    if (!combo.active(*options.reference)) fail(ErrorCode::kUsage, "calibration reference device is not active");
    p.global = options.reference_orientation * mean_rot[static_cast<int>(*options.reference)].transpose();
  }
  for (BodyLocation loc : combo.locations()) {
    const int k = static_cast<int>(loc);
    const RotMat& bone = rest.rotations[rig.site(loc).joint];
    p.offset[k] = (p.global * mean_rot[k]).transpose() * bone;
    Vec3 acc = Vec3::Zero();
    for (const auto& f : frames) {
      const RawReading& r = f.at(loc);
      acc += p.global * (r.orient * r.accel);
    }
    mean_acc[k] = acc / static_cast<double>(frames.size());
    p.bias[k] = mean_acc[k] - gravity_reaction();
  }
  return p;
}

Reading apply_calibration(const CalibrationProfile& profile, const RawReading& raw, BodyLocation loc) {
  const int k = static_cast<int>(loc);
  Reading r;
  r.orient = profile.global * raw.orient * profile.offset[k];
  r.accel = profile.global * (raw.orient * raw.accel) - gravity_reaction() - profile.bias[k];
  return r;
}

RawReading raw_from_model(const Reading& model) {
  RawReading r;
  r.orient = model.orient;
  r.accel = model.orient.transpose() * (model.accel + gravity_reaction());
  return r;
}

// ---- per-head inference -----------------------------------------------------

RotMat decode_rot6d(std::span<const double, 6> r6) {
  Vec3 a1(r6[0], r6[1], r6[2]);
  Vec3 a2(r6[3], r6[4], r6[5]);
  if (!a1.allFinite() || a1.norm() < 1e-8) a1 = Vec3::UnitX();
  if (!a2.allFinite()) a2 = Vec3::UnitY();
  const Vec3 c1 = a1.normalized();
  Vec3 b2 = a2 - c1.dot(a2) * c1;
  if (b2.norm() < 1e-8) {
    // Any unit vector orthogonal to c1.
    b2 = std::abs(c1.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    b2 -= c1.dot(b2) * c1;
  }
  const std::array<double, 6> safe{c1.x(), c1.y(), c1.z(), b2.x(), b2.y(), b2.z()};
  return matrix_from_rot6d(std::span<const double, 6>(safe));
}

Pose decode_pose(std::span<const double> rot6d, const Vec3& root_trans) {
  if (rot6d.size() != static_cast<std::size_t>(kRot6dDim)) fail(ErrorCode::kShapeMismatch, "expected 108 6D values");
  Pose pose;
  for (int k = 0; k < kPredictedJointCount; ++k)
    pose.local_rot[kPredictedJoints[k]] = decode_rot6d(std::span<const double, 6>(rot6d.data() + 6 * k, 6));
  pose.root_trans = root_trans;
  return pose;
}

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void check_window(const WindowMatrix& window) {
  if (window.cols() != kInputDim || window.rows() < 1)
    fail(ErrorCode::kShapeMismatch, "window must be N x 60");
}

Seq pose_features(const WindowMatrix& window, const Eigen::MatrixXd& joints) {
  check_window(window);
  if (joints.rows() != window.rows() || joints.cols() != kJointDim)
    fail(ErrorCode::kShapeMismatch, "joints must be N x 72 matching the window");
  return concat_features(Seq::from_rows(window), Seq::from_rows(joints));
}

struct LastFrame {
  std::array<double, kJointDim> joints{};
  std::array<double, kRot6dDim> rot6d{};
  std::array<double, 2> logits{};
};

// Runs the three window heads over `windows` (B windows of N steps) and
// keeps each window's final step.
std::vector<LastFrame> run_window_heads(const ModelBundle& bundle, const Seq& windows) {
  const Seq joints = bundle.head(Head::kJoint).forward(windows);
  const Seq feat = concat_features(windows, joints);
  const Seq rot = bundle.head(Head::kTheta).forward(feat);
  const Seq contact = bundle.head(Head::kContact).forward(feat);
  const int batch = windows.batch;
  const Eigen::Index last = static_cast<Eigen::Index>(windows.steps - 1) * batch;
  std::vector<LastFrame> out(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    auto& o = out[static_cast<std::size_t>(b)];
    Eigen::Map<Eigen::VectorXd>(o.joints.data(), kJointDim) = joints.data.col(last + b);
    Eigen::Map<Eigen::VectorXd>(o.rot6d.data(), kRot6dDim) = rot.data.col(last + b);
    o.logits = {contact.data(0, last + b), contact.data(1, last + b)};
  }
  return out;
}

Eigen::VectorXd velocity_input(const InputFrame& x, const std::array<double, kJointDim>& joints) {
  Eigen::VectorXd v(kPoseConditionedDim);
  v.head(kInputDim) = Eigen::Map<const Eigen::VectorXd>(x.data(), kInputDim);
  v.tail(kJointDim) = Eigen::Map<const Eigen::VectorXd>(joints.data(), kJointDim);
  return v;
}

// Everything after the networks: decode, contacts, v_f, fusion, integration.
PoseOutput finish_frame(const LastFrame& heads, const Vec3& v_e, const Rig& rig, const FusionThresholds& fusion,
                        std::optional<Pose>& prev_pose, Vec3& translation, std::array<double, 2>& contacts_out) {
  PoseOutput out;
  for (int j = 0; j < kJointCount; ++j)
    out.joints_rel[j] = Vec3(heads.joints[3 * j], heads.joints[3 * j + 1], heads.joints[3 * j + 2]);
  out.rot6d = heads.rot6d;
  out.contacts = {sigmoid(heads.logits[0]), sigmoid(heads.logits[1])};
  Pose pose = decode_pose(out.rot6d);
  out.v_e = v_e;
  out.v_f = prev_pose ? supporting_foot_velocity(*prev_pose, pose, out.contacts, rig) : Vec3::Zero();
  out.v_fused = fuse_velocity(out.v_e, out.v_f, out.contacts, fusion);
  out.translation = integrate_translation(translation, out.v_fused, heading_yaw(pose.local_rot[0]));
  pose.root_trans = out.translation;
  out.full_pose = pose;
  prev_pose = pose;
  contacts_out = out.contacts;
  return out;
}

}  // namespace

Eigen::MatrixXd estimate_joints(const ModelBundle& bundle, const WindowMatrix& window) {
  check_window(window);
  return bundle.head(Head::kJoint).forward(Seq::from_rows(window)).rows(0);
}

RotationEstimate estimate_rotations(const ModelBundle& bundle, const WindowMatrix& window,
                                    const Eigen::MatrixXd& joints) {
  RotationEstimate r;
  r.rot6d = bundle.head(Head::kTheta).forward(pose_features(window, joints)).rows(0);
  const Eigen::VectorXd last = r.rot6d.row(r.rot6d.rows() - 1).transpose();
  r.last = decode_pose(std::span<const double>(last.data(), kRot6dDim));
  return r;
}

std::array<double, 2> estimate_contacts(const ModelBundle& bundle, const WindowMatrix& window,
                                        const Eigen::MatrixXd& joints) {
  const Eigen::MatrixXd logits = bundle.head(Head::kContact).forward(pose_features(window, joints)).rows(0);
  const Eigen::Index t = logits.rows() - 1;
  return {sigmoid(logits(t, 0)), sigmoid(logits(t, 1))};
}

// ---- translation --------------------------------------------------------------

int supporting_foot(const std::array<double, 2>& contacts) { return contacts[1] > contacts[0] ? 1 : 0; }

Vec3 supporting_foot_velocity(const Pose& prev, const Pose& cur, const std::array<double, 2>& contacts, const Rig& rig) {
  const int foot = supporting_foot(contacts) == 0 ? joint::kLeftFoot : joint::kRightFoot;
  // Foot offset from the root in world axes (root rotation applied, no translation).
  auto offset = [&](const Pose& p) {
    Pose q = p;
    q.root_trans = Vec3::Zero();
    return forward_kinematics(rig, q).positions[foot];
  };
  return -to_heading_frame(cur.local_rot[0], offset(cur) - offset(prev));
}

Vec3 fuse_velocity(const Vec3& v_e, const Vec3& v_f, const std::array<double, 2>& contacts,
                   const FusionThresholds& t) {
  const double q = std::max(contacts[0], contacts[1]);
  if (q >= t.upper) return v_f;
  if (q <= t.lower) return v_e;
  const double w_e = (q - t.upper) / (t.lower - t.upper);
  const double w_f = (q - t.lower) / (t.upper - t.lower);
  return w_e * v_e + w_f * v_f;
}

Vec3 integrate_translation(Vec3& accum, const Vec3& v_heading, double heading_yaw) {
  accum += rot_y(heading_yaw) * v_heading;
  return accum;
}

// ---- streaming estimator ----------------------------------------------------

Estimator::Estimator(const ModelBundle& bundle, const Rig& rig, const DeviceCombo& combo, EstimatorConfig config)
    : bundle_(&bundle), rig_(&rig), config_(config) {
  if (config_.window < 1) fail(ErrorCode::kUsage, "window must be positive");
  bundle.head(Head::kJoint);
  bundle.head(Head::kTheta);
  bundle.head(Head::kContact);
  bundle.head(Head::kVelocity);
  state_.combo = combo;
  reset();
}

void Estimator::set_combo(const DeviceCombo& combo) {
  state_.combo = combo;
  reset();
}

void Estimator::reset() {
  state_.window.clear();
  state_.velocity_state = bundle_->head(Head::kVelocity).initial_state();
  state_.translation = Vec3::Zero();
  state_.contacts = {0.5, 0.5};
  state_.prev_pose.reset();
  state_.frames = 0;
}

PoseOutput Estimator::step(const RawReadingMap& raw) {
  ReadingMap readings;
  for (BodyLocation loc : state_.combo.locations()) {
    auto it = raw.find(loc);
    if (it == raw.end()) fail(ErrorCode::kMissingReading, "no reading for " + std::string(location_id(loc)));
    readings[loc] = apply_calibration(state_.calibration, it->second, loc);
  }
  return step_input(pack_input(readings, state_.combo));
}

PoseOutput Estimator::step_input(const InputFrame& input) {
  const int n = config_.window;
  state_.window.push_back(mask_input(input, state_.combo));
  while (static_cast<int>(state_.window.size()) > n) state_.window.pop_front();

  Seq win(kInputDim, n, 1);
  const int pad = n - static_cast<int>(state_.window.size());
  for (int i = 0; i < static_cast<int>(state_.window.size()); ++i)
    win.data.col(pad + i) = Eigen::Map<const Eigen::VectorXd>(state_.window[static_cast<std::size_t>(i)].data(), kInputDim);

  const LastFrame heads = run_window_heads(*bundle_, win)[0];
  const Eigen::VectorXd v = bundle_->head(Head::kVelocity).step(state_.velocity_state, velocity_input(state_.window.back(), heads.joints));
  ++state_.frames;
  return finish_frame(heads, Vec3(v[0], v[1], v[2]), *rig_, config_.fusion, state_.prev_pose, state_.translation,
                      state_.contacts);
}

std::vector<PoseOutput> offline_inference(const ModelBundle& bundle, const Rig& rig, std::span<const InputFrame> inputs,
                                          const DeviceCombo& combo, const EstimatorConfig& config, int chunk) {
  const int total = static_cast<int>(inputs.size());
  const int n = config.window;
  if (n < 1 || chunk < 1) fail(ErrorCode::kUsage, "window and chunk must be positive");
  std::vector<InputFrame> masked(inputs.size());
  for (int t = 0; t < total; ++t) masked[static_cast<std::size_t>(t)] = mask_input(inputs[static_cast<std::size_t>(t)], combo);

  std::vector<LastFrame> heads;
  heads.reserve(masked.size());
  for (int c0 = 0; c0 < total; c0 += chunk) {
    const int batch = std::min(chunk, total - c0);
    Seq win(kInputDim, n, batch);
    for (int b = 0; b < batch; ++b) {
      const int t = c0 + b;
      for (int s = 0; s < n; ++s) {
        const int src = t - (n - 1) + s;
        if (src >= 0) win.data.col(s * batch + b) = Eigen::Map<const Eigen::VectorXd>(masked[static_cast<std::size_t>(src)].data(), kInputDim);
      }
    }
    for (auto& h : run_window_heads(bundle, win)) heads.push_back(h);
  }

  std::vector<std::array<double, kJointDim>> joints(heads.size());
  for (std::size_t t = 0; t < heads.size(); ++t) joints[t] = heads[t].joints;
  const std::vector<Vec3> v_e = replay_velocity_head(bundle, Head::kVelocity, masked, joints);

  std::vector<PoseOutput> out;
  out.reserve(heads.size());
  std::optional<Pose> prev;
  Vec3 translation = Vec3::Zero();
  std::array<double, 2> contacts{};
  for (std::size_t t = 0; t < heads.size(); ++t)
    out.push_back(finish_frame(heads[t], v_e[t], rig, config.fusion, prev, translation, contacts));
  return out;
}

std::vector<Vec3> replay_velocity_head(const ModelBundle& bundle, Head head, std::span<const InputFrame> inputs,
                                       const std::vector<std::array<double, kJointDim>>& joints) {
  if (head != Head::kVelocity && head != Head::kVelocityImu) fail(ErrorCode::kUsage, "not a velocity head");
  const int total = static_cast<int>(inputs.size());
  if (total == 0) return {};
  const bool with_pose = head == Head::kVelocity;
  if (with_pose && joints.size() != inputs.size()) fail(ErrorCode::kLengthMismatch, "joints and inputs differ in length");
  Seq x(with_pose ? kPoseConditionedDim : kInputDim, total, 1);
  for (int t = 0; t < total; ++t) {
    const auto& in = inputs[static_cast<std::size_t>(t)];
    if (with_pose)
      x.data.col(t) = velocity_input(in, joints[static_cast<std::size_t>(t)]);
    else
      x.data.col(t) = Eigen::Map<const Eigen::VectorXd>(in.data(), kInputDim);
  }
  const Seq v = bundle.head(head).forward(x);
  std::vector<Vec3> out(static_cast<std::size_t>(total));
  for (int t = 0; t < total; ++t) out[static_cast<std::size_t>(t)] = v.data.col(t);
  return out;
}

}  // namespace mobileposer
