#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mobileposer/devconfig.hpp"
#include "mobileposer/rotmath.hpp"

namespace mobileposer {

inline constexpr int kJointCount = 24;

// SMPL joint indices used by name elsewhere.
namespace joint {
inline constexpr int kPelvis = 0;
inline constexpr int kLeftHip = 1;
inline constexpr int kRightHip = 2;
inline constexpr int kLeftKnee = 4;
inline constexpr int kRightKnee = 5;
inline constexpr int kLeftAnkle = 7;
inline constexpr int kRightAnkle = 8;
inline constexpr int kLeftFoot = 10;
inline constexpr int kRightFoot = 11;
inline constexpr int kHead = 15;
inline constexpr int kLeftElbow = 18;
inline constexpr int kRightElbow = 19;
inline constexpr int kLeftWrist = 20;
inline constexpr int kRightWrist = 21;
}  // namespace joint

/// Joints whose rotation is regressed; the other six (toes, wrists, hands)
/// are held at identity.
inline constexpr int kPredictedJointCount = 18;
inline constexpr std::array<int, kPredictedJointCount> kPredictedJoints{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 14, 15, 16, 17, 18, 19};
inline constexpr std::array<int, 6> kIdentityJoints{10, 11, 20, 21, 22, 23};

const std::array<std::string, kJointCount>& joint_names();

struct SkinVertex {
  Vec3 position = Vec3::Zero();                 // rest pose, meters
  std::vector<std::pair<int, double>> weights;  // at most 4 (joint, weight), summing to 1
};

struct SensorSite {
  int joint = 0;
  Vec3 offset = Vec3::Zero();  // in the joint's local frame
};

/// Kinematic body model. Rest pose is a T-pose with every joint frame
/// aligned to the world (+Y up, +Z forward, +X the body's left).
struct Rig {
  std::array<int, kJointCount> parent{};
  std::array<Vec3, kJointCount> rest_offset{};  // bone vector from parent; root entry is zero
  std::vector<SkinVertex> vertices;
  std::array<SensorSite, kLocationCount> sites{};  // indexed by BodyLocation

  const SensorSite& site(BodyLocation loc) const { return sites[static_cast<int>(loc)]; }
  bool has_skin() const { return !vertices.empty(); }
};

struct Pose {
  std::array<RotMat, kJointCount> local_rot;
  Vec3 root_trans = Vec3::Zero();

  Pose() { local_rot.fill(RotMat::Identity()); }
};

struct MotionSequence {
  double fps = 60.0;
  std::vector<Pose> frames;
  std::optional<std::vector<std::array<bool, 2>>> contacts;  // (left, right)
  std::optional<std::vector<Vec3>> root_velocity;            // m/frame

  std::size_t size() const { return frames.size(); }
};

struct FkResult {
  std::array<Vec3, kJointCount> positions;
  std::array<RotMat, kJointCount> rotations;
};

using JointPositions = std::array<Vec3, kJointCount>;

/// Throws InvariantViolation naming the offending field.
void validate_rig(const Rig& rig);

FkResult forward_kinematics(const Rig& rig, const Pose& pose);

/// p_rel[j] = R_root^T (p[j] - p_root).
JointPositions root_relative(const FkResult& fk);

/// Joint positions of the identity pose with the root at the origin.
JointPositions rest_joint_positions(const Rig& rig);

/// Linear blend skinning. Throws NoSkin when the rig has no vertices.
std::vector<Vec3> skin_vertices(const Rig& rig, const Pose& pose);
std::vector<Vec3> skin_vertices(const Rig& rig, const FkResult& fk);

/// World position of the virtual sensor at `loc`.
Vec3 sensor_position(const Rig& rig, const FkResult& fk, BodyLocation loc);

/// 24 joints in SMPL topology, a T-pose rest shape, 78 skin vertices and
/// zero sensor offsets.
Rig builtin_toy_rig();

Rig load_rig(const std::string& path);
Rig parse_rig(const std::string& text);
std::string serialize_rig(const Rig& rig);
void save_rig(const Rig& rig, const std::string& path);

MotionSequence load_motion(const std::string& path);
void save_motion(const MotionSequence& seq, const std::string& path);

inline constexpr std::uint32_t kMotionFormatVersion = 1;

}  // namespace mobileposer
