#include "mobileposer/motion_import.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>

#include "mobileposer/binary_io.hpp"
#include "mobileposer/error.hpp"

namespace mobileposer {

using nlohmann::json;

namespace {

int layout_width(const std::string& layout) {
  if (layout == "matrix") return 9;
  if (layout == "axis_angle") return 3;
  if (layout == "quat_wxyz") return 4;
  if (layout == "rot6d") return 6;
  return 0;
}

double unit_scale(const std::string& units) {
  if (units == "m") return 1.0;
  if (units == "cm") return 0.01;
  if (units == "mm") return 0.001;
  return 0.0;
}

// Frame-major rows; each row `width` values.
using Rows = std::vector<std::vector<double>>;

void check_rows(const json& arr, std::size_t width, const std::string& field, std::vector<FieldIssue>& issues) {
  if (!arr.is_array()) {
    issues.push_back({field, "must be an array of per-frame arrays"});
    return;
  }
  for (std::size_t t = 0; t < arr.size(); ++t) {
    const json& row = arr[t];
    if (!row.is_array() || row.size() != width) {
      issues.push_back({field + "[" + std::to_string(t) + "]", "expected " + std::to_string(width) + " numbers"});
      return;
    }
    for (const json& v : row)
      if (!v.is_number()) {
        issues.push_back({field + "[" + std::to_string(t) + "]", "contains a non-number"});
        return;
      }
  }
}

Rows read_f64_file(const std::string& path, std::size_t width, const std::string& field) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail(ErrorCode::kManifestInvalid, field + ": cannot open " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % (8 * width) != 0)
    fail(ErrorCode::kManifestInvalid, field + ": file size is not a multiple of " + std::to_string(width) + " float64 values");
  in.seekg(0);
  Rows rows(bytes / (8 * width), std::vector<double>(width));
  for (auto& row : rows)
    for (auto& v : row) v = bin::get<double>(in, "array value");
  return rows;
}

Rows read_rows(const json& m, const std::string& name, std::size_t width, const std::string& base_dir) {
  if (m.contains(name)) return m[name].get<Rows>();
  const auto path = std::filesystem::path(base_dir) / m[name + "_file"].get<std::string>();
  return read_f64_file(path.string(), width, name + "_file");
}

RotMat decode_rotation(const std::string& layout, const double* v) {
  if (layout == "matrix") {
    RotMat r;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r(i, k) = v[3 * i + k];
    return r;
  }
  if (layout == "axis_angle") {
    const Vec3 w(v[0], v[1], v[2]);
    const double angle = w.norm();
    if (angle == 0.0) return RotMat::Identity();
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
  }
  if (layout == "quat_wxyz") {
    Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
    if (q.norm() == 0.0) fail(ErrorCode::kManifestInvalid, "rotations: zero quaternion");
    return q.normalized().toRotationMatrix();
  }
  return matrix_from_rot6d(std::span<const double, 6>(v, 6));
}

}  // namespace

RotMat z_up_to_y_up() {
  RotMat m;
  m << 1, 0, 0, 0, 0, 1, 0, -1, 0;
  return m;
}

std::vector<FieldIssue> check_manifest(const json& m) {
  std::vector<FieldIssue> issues;
  if (!m.is_object()) return {{"<root>", "manifest must be a JSON object"}};

  if (!m.contains("version")) issues.push_back({"version", "missing"});
  else if (!m["version"].is_number_integer()) issues.push_back({"version", "must be an integer"});
  else if (m["version"].get<int>() != 1) issues.push_back({"version", "unsupported version " + m["version"].dump()});

  if (!m.contains("fps")) issues.push_back({"fps", "missing"});
  else if (!m["fps"].is_number() || !(m["fps"].get<double>() > 0)) issues.push_back({"fps", "must be a positive number"});

  if (!m.contains("up_axis")) issues.push_back({"up_axis", "missing"});
  else if (!m["up_axis"].is_string() || (m["up_axis"] != "y" && m["up_axis"] != "z"))
    issues.push_back({"up_axis", "must be \"y\" or \"z\""});

  int width = 0;
  if (!m.contains("rotation_layout")) issues.push_back({"rotation_layout", "missing"});
  else if (!m["rotation_layout"].is_string() || (width = layout_width(m["rotation_layout"].get<std::string>())) == 0)
    issues.push_back({"rotation_layout", "must be one of matrix, axis_angle, quat_wxyz, rot6d"});

  if (!m.contains("units")) issues.push_back({"units", "missing"});
  else if (!m["units"].is_string() || unit_scale(m["units"].get<std::string>()) == 0.0)
    issues.push_back({"units", "must be one of m, cm, mm"});

  if (!m.contains("joints")) issues.push_back({"joints", "missing"});
  else if (!m["joints"].is_number_integer() || m["joints"].get<int>() != kJointCount)
    issues.push_back({"joints", "must be 24"});

  for (const char* name : {"rotations", "translations"}) {
    const std::string file = std::string(name) + "_file";
    const bool inline_data = m.contains(name);
    const bool file_data = m.contains(file);
    if (inline_data == file_data) {
      issues.push_back({name, "give exactly one of \"" + std::string(name) + "\" or \"" + file + "\""});
      continue;
    }
    if (file_data && !m[file].is_string()) issues.push_back({file, "must be a path string"});
  }
  if (m.contains("rotations") && width > 0) check_rows(m["rotations"], static_cast<std::size_t>(width) * kJointCount, "rotations", issues);
  if (m.contains("translations")) check_rows(m["translations"], 3, "translations", issues);
  if (m.contains("rotations") && m.contains("translations") && m["rotations"].is_array() &&
      m["translations"].is_array() && m["rotations"].size() != m["translations"].size())
    issues.push_back({"translations", "frame count differs from rotations"});

  static const std::vector<std::string> known{"version", "fps", "up_axis", "rotation_layout", "units", "joints",
                                              "rotations", "translations", "rotations_file", "translations_file"};
  for (auto it = m.begin(); it != m.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) issues.push_back({it.key(), "unknown field"});
  return issues;
}

MotionSequence import_motion(const json& m, const std::string& base_dir) {
  const auto issues = check_manifest(m);
  if (!issues.empty()) {
    std::string msg = "invalid motion manifest:";
    for (const auto& i : issues) msg += " " + i.field + ": " + i.message + ";";
    msg.pop_back();
    fail(ErrorCode::kManifestInvalid, msg);
  }
  const std::string layout = m["rotation_layout"];
  const std::size_t width = static_cast<std::size_t>(layout_width(layout));
  const Rows rots = read_rows(m, "rotations", width * kJointCount, base_dir);
  const Rows trans = read_rows(m, "translations", 3, base_dir);
  if (rots.size() != trans.size())
    fail(ErrorCode::kManifestInvalid, "translations: frame count " + std::to_string(trans.size()) +
                                          " differs from rotations " + std::to_string(rots.size()));
  if (rots.empty()) fail(ErrorCode::kManifestInvalid, "rotations: no frames");

  const bool z_up = m["up_axis"] == "z";
  const RotMat remap = z_up_to_y_up();
  const double scale = unit_scale(m["units"]);

  MotionSequence seq;
  seq.fps = m["fps"];
  seq.frames.resize(rots.size());
  for (std::size_t t = 0; t < rots.size(); ++t) {
    Pose& pose = seq.frames[t];
    for (int j = 0; j < kJointCount; ++j) {
      const RotMat r = decode_rotation(layout, rots[t].data() + width * j);
      if (!is_rotation(r, 1e-4))
        fail(ErrorCode::kManifestInvalid, "rotations[" + std::to_string(t) + "]: joint " + std::to_string(j) +
                                              " is not a rotation");
      pose.local_rot[j] = r;
    }
    Vec3 p(trans[t][0], trans[t][1], trans[t][2]);
    p *= scale;
    // Only the root sees the world frame; child rotations are parent-relative.
    if (z_up) {
      pose.local_rot[0] = remap * pose.local_rot[0];
      p = remap * p;
    }
    pose.root_trans = p;
  }
  return seq;
}

MotionSequence import_motion_file(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::kIo, "cannot open manifest " + manifest_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const json m = json::parse(ss.str(), nullptr, false);
  if (m.is_discarded()) fail(ErrorCode::kManifestInvalid, "<root>: " + manifest_path + " is not valid JSON");
  return import_motion(m, std::filesystem::path(manifest_path).parent_path().string());
}

json export_motion(const MotionSequence& seq) {
  json rots = json::array();
  json trans = json::array();
  for (const Pose& pose : seq.frames) {
    std::vector<double> row;
    row.reserve(9 * kJointCount);
    for (int j = 0; j < kJointCount; ++j)
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) row.push_back(pose.local_rot[j](i, k));
    rots.push_back(row);
    trans.push_back({pose.root_trans.x(), pose.root_trans.y(), pose.root_trans.z()});
  }
  return json{{"version", 1},          {"fps", seq.fps},      {"up_axis", "y"},
              {"rotation_layout", "matrix"}, {"units", "m"},  {"joints", kJointCount},
              {"rotations", rots},     {"translations", trans}};
}

}  // namespace mobileposer
