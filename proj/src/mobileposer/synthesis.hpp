#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mobileposer/devconfig.hpp"
#include "mobileposer/skeleton.hpp"

namespace mobileposer {

inline constexpr double kContactThreshold = 0.008;  // m per frame
inline constexpr double kGravity = 9.80665;          // m/s^2
inline constexpr int kJointDim = kJointCount * 3;    // 72
inline constexpr int kRot6dDim = kPredictedJointCount * 6;  // 108

/// World rotation of the bone carrying the virtual sensor.
RotMat synth_orientation(const Rig& rig, const MotionSequence& seq, BodyLocation loc, std::size_t frame);

/// Second central difference of the sensor position times fps^2 (m/s^2,
/// world frame, gravity-free). Endpoints copy the nearest interior value.
/// Throws TooShort below 3 frames.
std::vector<Vec3> synth_acceleration(const Rig& rig, const MotionSequence& seq, BodyLocation loc);

Vec3 normalize_acceleration(const Vec3& a);
Vec3 denormalize_acceleration(const Vec3& a);

/// Per-frame (left, right) foot contact: displacement since the previous
/// frame below `threshold`. Frame 0 copies frame 1.
std::vector<std::array<bool, 2>> contact_labels(const Rig& rig, const MotionSequence& seq,
                                                double threshold = kContactThreshold);

/// Root displacement since the previous frame, expressed in the heading
/// frame of the current frame. v(0) = 0.
std::vector<Vec3> root_velocity_labels(const MotionSequence& seq);

/// Rotation about +Y that removes the heading of `root_rot`.
RotMat heading_rotation(const RotMat& root_rot);
Vec3 to_heading_frame(const RotMat& root_rot, const Vec3& world);
Vec3 from_heading_frame(const RotMat& root_rot, const Vec3& local);

/// Per-frame channels of a whole clip, unmasked.
struct ClipChannels {
  std::vector<InputFrame> inputs;                 // every location filled
  std::vector<std::array<double, kJointDim>> joints;
  std::vector<std::array<double, kRot6dDim>> rot6d;
  std::vector<std::array<bool, 2>> contacts;
  std::vector<Vec3> root_velocity;
};

ClipChannels synthesize_channels(const Rig& rig, const MotionSequence& seq, double contact_threshold = kContactThreshold);

/// 6D rotations of the predicted joints of a pose, 108 values.
std::array<double, kRot6dDim> pose_to_rot6d(const Pose& pose);
/// Decodes 108 values into a pose (identity at the unpredicted joints).
Pose pose_from_rot6d(std::span<const double> rot6d, const Vec3& root_trans = Vec3::Zero());

std::array<double, kJointDim> flatten_joints(const JointPositions& joints);

struct LabeledWindow {
  DeviceCombo combo;
  Eigen::MatrixXd inputs;    // N x 60
  Eigen::MatrixXd joints;    // N x 72
  Eigen::MatrixXd rot6d;     // N x 108
  Eigen::MatrixXd contacts;  // N x 2, values in {0, 1}
  Eigen::MatrixXd root_vel;  // N x 3, m/frame, heading frame

  int length() const { return static_cast<int>(inputs.rows()); }
};

inline constexpr int kDefaultWindow = 60;
inline constexpr int kDefaultStride = 30;

/// Windows of length `window` every `stride` frames, once per combo.
std::vector<LabeledWindow> make_windows(const Rig& rig, const MotionSequence& seq, std::span<const DeviceCombo> combos,
                                        int window, int stride);
std::vector<LabeledWindow> make_windows(const ClipChannels& clip, std::span<const DeviceCombo> combos, int window,
                                        int stride);

/// Adds i.i.d. N(0, sigma^2) noise, deterministic for a given seed.
void add_joint_noise(std::span<double> joints, double sigma, std::uint64_t seed);
void add_joint_noise(Eigen::MatrixXd& joints, double sigma, std::uint64_t seed);

// Dataset file: a sequence of LabeledWindow records.

enum DatasetChannel : std::uint32_t {
  kChannelInputs = 1u,
  kChannelJoints = 2u,
  kChannelRot6d = 4u,
  kChannelContacts = 8u,
  kChannelRootVel = 16u,
  kAllChannels = 31u,
};

struct Dataset {
  int window = kDefaultWindow;
  double fps = 60.0;
  std::uint32_t channels = kAllChannels;
  std::vector<LabeledWindow> windows;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace mobileposer
