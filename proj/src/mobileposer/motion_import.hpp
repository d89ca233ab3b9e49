#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mobileposer/skeleton.hpp"

namespace mobileposer {

// Generic adapter for motion stored as plain arrays. A manifest is a JSON
// object:
//
//   version          1
//   fps              frames per second (> 0)
//   up_axis          "y" or "z"; z-up data is rotated into the +Y-up model frame
//   rotation_layout  "matrix" (9, row-major) | "axis_angle" (3) | "quat_wxyz" (4) | "rot6d" (6)
//   units            "m" | "cm" | "mm" for translations
//   joints           24
//   rotations        per frame, joints x layout values of local rotations
//   translations     per frame, root position [x, y, z]
//
// Either array may instead be given as "<name>_file": a raw little-endian
// float64 file, path relative to the manifest.

struct FieldIssue {
  std::string field;
  std::string message;
};

/// Every problem found in the manifest, empty when valid. Array contents are
/// checked only for shape.
std::vector<FieldIssue> check_manifest(const nlohmann::json& manifest);

/// Converts a manifest to a canonical sequence. `base_dir` resolves the
/// *_file entries. Throws ManifestInvalid listing every field issue.
MotionSequence import_motion(const nlohmann::json& manifest, const std::string& base_dir = ".");
MotionSequence import_motion_file(const std::string& manifest_path);

/// Manifest in the canonical layout (matrix, +Y up, meters, inline arrays).
/// Importing it reproduces `seq` exactly.
nlohmann::json export_motion(const MotionSequence& seq);

/// Rotation taking +Z-up coordinates to +Y-up ones: z -> y, y -> -z.
RotMat z_up_to_y_up();

}  // namespace mobileposer
