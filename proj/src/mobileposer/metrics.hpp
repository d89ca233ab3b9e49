#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mobileposer/skeleton.hpp"

namespace mobileposer {

// Root alignment removes both the root position and the root rotation. The
// root joint itself is then identical in prediction and ground truth and is
// left out of the per-joint means.

/// Mean geodesic error (degrees) of root-aligned global joint rotations.
double mpjre(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig);

/// Mean root-aligned joint position error in cm.
double mpjpe(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig);
double mpjpe_positions(std::span<const JointPositions> pred_rel, std::span<const JointPositions> gt_rel);

/// Mean root-aligned skinned-vertex error in cm. Throws NoSkin.
double mpjve(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig);

/// Mean norm of the third backward difference of world joint positions
/// times fps^3 (m/s^3). Needs at least 4 frames.
double jitter(std::span<const Pose> poses, const Rig& rig, double fps);
double jitter_positions(std::span<const JointPositions> world, double fps);

struct TranslationError {
  double mean_cm = 0.0;                              // over 1 s windows
  std::vector<std::pair<double, double>> curve;      // (seconds, cm)
};

/// Dense (stride 1) windows: error = |sum of (v_pred - v_gt)| over the window.
/// Curve horizons follow 1, 2, 5, 10, 20, ... seconds up to the clip length.
TranslationError root_translation_error(std::span<const Vec3> pred_vel, std::span<const Vec3> gt_vel, double fps);

/// Mean error for one horizon of `frames` frames (m).
double windowed_drift(std::span<const Vec3> pred_vel, std::span<const Vec3> gt_vel, int frames);

struct EvalReport {
  double mpjre = 0.0;   // degrees
  double mpjpe = 0.0;   // cm
  std::optional<double> mpjve;  // cm; absent without skin
  double jitter = 0.0;  // m/s^3
  double root_translation_error = 0.0;  // cm
  std::vector<std::pair<double, double>> cumulative_error_curve;
  std::size_t frames = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Full report for one clip. Velocities are per-frame world displacements.
EvalReport evaluate_clip(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig, double fps);

}  // namespace mobileposer
