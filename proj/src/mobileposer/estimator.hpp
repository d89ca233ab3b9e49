#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mobileposer/bundle.hpp"
#include "mobileposer/devconfig.hpp"
#include "mobileposer/skeleton.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer {

// ---- calibration -----------------------------------------------------------

/// What a device reports: specific force in its own frame (m/s^2, gravity
/// included) and its sensor-to-inertial rotation.
struct RawReading {
  Vec3 accel = Vec3::Zero();
  RotMat orient = RotMat::Identity();
};

using RawReadingMap = std::map<BodyLocation, RawReading>;

struct CalibrationProfile {
  RotMat global = RotMat::Identity();  // inertial frame -> model frame
  std::array<RotMat, kLocationCount> offset;  // device -> bone, per location
  std::array<Vec3, kLocationCount> bias;      // m/s^2, model frame

  CalibrationProfile() {
    offset.fill(RotMat::Identity());
    bias.fill(Vec3::Zero());
  }
};

/// Specific force of a device at rest in the model frame (+Y up).
inline Vec3 gravity_reaction() { return Vec3(0, kGravity, 0); }

struct CalibrationOptions {
  double fps = 60.0;
  /// Device whose orientation during the hold is declared; the global
  /// alignment makes it read `reference_orientation`. Without one the
  /// inertial frame is taken as the model frame.
  std::optional<BodyLocation> reference;
  RotMat reference_orientation = RotMat::Identity();
  double max_rms_deg = 5.0;
};

/// Solves the profile from frames recorded during a held T-pose. Needs at
/// least one second of frames (TooShort) with every active device present
/// (MissingReading); throws TooNoisy when any device's orientation RMS
/// deviation exceeds `max_rms_deg`.
CalibrationProfile calibrate_tpose(std::span<const RawReadingMap> frames, const DeviceCombo& combo, const Rig& rig,
                                   const CalibrationOptions& options = {});

/// Model-frame orientation and gravity-free acceleration in m/s^2. The 1/30
/// input scaling is applied later by pack_input.
Reading apply_calibration(const CalibrationProfile& profile, const RawReading& raw, BodyLocation loc);

/// Inverse of apply_calibration under the identity profile: what a device at
/// rest-aligned mounting would report for a model-frame reading.
RawReading raw_from_model(const Reading& model);

// ---- per-head inference -----------------------------------------------------

using WindowMatrix = Eigen::MatrixXd;  // N x 60, one row per frame

/// F_joint over one window: N x 72 root-relative joint positions.
Eigen::MatrixXd estimate_joints(const ModelBundle& bundle, const WindowMatrix& window);

struct RotationEstimate {
  Eigen::MatrixXd rot6d;  // N x 108
  Pose last;              // decoded last frame, identity at unpredicted joints
};

RotationEstimate estimate_rotations(const ModelBundle& bundle, const WindowMatrix& window,
                                    const Eigen::MatrixXd& joints);

/// Last-frame (left, right) contact probabilities.
std::array<double, 2> estimate_contacts(const ModelBundle& bundle, const WindowMatrix& window,
                                        const Eigen::MatrixXd& joints);

/// Gram-Schmidt decode that never throws: a collapsed column falls back to
/// the identity's, so any network output yields a valid rotation.
RotMat decode_rot6d(std::span<const double, 6> r6);
Pose decode_pose(std::span<const double> rot6d, const Vec3& root_trans = Vec3::Zero());

// ---- translation --------------------------------------------------------------

struct FusionThresholds {
  double lower = 0.5;
  double upper = 0.9;
};

/// 0 = left, 1 = right; ties go to the left foot.
int supporting_foot(const std::array<double, 2>& contacts);

/// Root displacement implied by a planted supporting foot, in the heading
/// frame of `cur` (m/frame).
Vec3 supporting_foot_velocity(const Pose& prev, const Pose& cur, const std::array<double, 2>& contacts, const Rig& rig);

/// Weighted blend by q = max(contacts): v_e at or below `lower`, v_f at or
/// above `upper`, linear in between.
Vec3 fuse_velocity(const Vec3& v_e, const Vec3& v_f, const std::array<double, 2>& contacts,
                   const FusionThresholds& thresholds = {});

/// accum += R_yaw(heading) * v; returns the new accumulated translation.
Vec3 integrate_translation(Vec3& accum, const Vec3& v_heading, double heading_yaw);

// ---- streaming estimator ----------------------------------------------------

struct EstimatorConfig {
  int window = kDefaultWindow;
  FusionThresholds fusion;
};

struct PoseOutput {
  JointPositions joints_rel{};
  std::array<double, kRot6dDim> rot6d{};
  Pose full_pose;  // root_trans = translation
  std::array<double, 2> contacts{};
  Vec3 v_e = Vec3::Zero();
  Vec3 v_f = Vec3::Zero();
  Vec3 v_fused = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
};

struct EstimatorState {
  std::deque<InputFrame> window;
  nn::SeqModel::State velocity_state;
  DeviceCombo combo;
  CalibrationProfile calibration;
  Vec3 translation = Vec3::Zero();
  std::array<double, 2> contacts{0.5, 0.5};
  std::optional<Pose> prev_pose;
  std::int64_t frames = 0;
};

/// Online pipeline for one stream. Holds references to the bundle and rig,
/// which must outlive it and stay unchanged.
class Estimator {
 public:
  Estimator(const ModelBundle& bundle, const Rig& rig, const DeviceCombo& combo, EstimatorConfig config = {});

  void set_calibration(const CalibrationProfile& profile) { state_.calibration = profile; }
  void set_combo(const DeviceCombo& combo);
  /// Clears the window, recurrent state and translation; keeps calibration.
  void reset();

  /// Calibrates and packs raw device readings, then advances one frame.
  /// Throws MissingReading when an active device has no reading.
  PoseOutput step(const RawReadingMap& raw);
  /// Advances one frame from an already packed input (masked to the combo).
  PoseOutput step_input(const InputFrame& input);

  const EstimatorState& state() const { return state_; }
  const EstimatorConfig& config() const { return config_; }

 private:
  const ModelBundle* bundle_;
  const Rig* rig_;
  EstimatorConfig config_;
  EstimatorState state_;
};

/// Batch evaluation of the same pipeline over a whole clip: every trailing
/// window is stacked into one batched forward pass. Produces the outputs
/// step_input would give frame by frame.
std::vector<PoseOutput> offline_inference(const ModelBundle& bundle, const Rig& rig, std::span<const InputFrame> inputs,
                                          const DeviceCombo& combo, const EstimatorConfig& config = {},
                                          int chunk = 128);

/// Velocity-only replay used by the translation ablation: runs `head` (the
/// pose-conditioned or the IMU-only velocity head) over the clip and returns
/// per-frame heading-frame velocities.
std::vector<Vec3> replay_velocity_head(const ModelBundle& bundle, Head head, std::span<const InputFrame> inputs,
                                       const std::vector<std::array<double, kJointDim>>& joints);

}  // namespace mobileposer
