#include "mobileposer/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>

#include <json.hpp>

#include "mobileposer/binary_io.hpp"
#include "mobileposer/error.hpp"

namespace mobileposer {

namespace {

using nlohmann::json;

constexpr std::array<int, kJointCount> kSmplParents{-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                                    9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

void invariant(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kInvariantViolation, "rig invariant violated: " + what);
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::kParse, "rig: field '" + field + "' must be a 3-vector");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) fail(ErrorCode::kParse, "rig: field '" + field + "' must be numeric");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace

const std::array<std::string, kJointCount>& joint_names() {
  static const std::array<std::string, kJointCount> names{
      "pelvis",     "left_hip",       "right_hip",      "spine1",     "left_knee",   "right_knee",
      "spine2",     "left_ankle",     "right_ankle",    "spine3",     "left_foot",   "right_foot",
      "neck",       "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
      "left_elbow", "right_elbow",    "left_wrist",     "right_wrist", "left_hand",  "right_hand"};
  return names;
}

void validate_rig(const Rig& rig) {
  int roots = 0;
  for (int j = 0; j < kJointCount; ++j) {
    const int p = rig.parent[j];
    if (p == -1) {
      ++roots;
      invariant(j == 0, "parent[" + std::to_string(j) + "] = -1 but only joint 0 may be the root");
    } else {
      invariant(p >= 0 && p < j, "parent[" + std::to_string(j) + "] = " + std::to_string(p) + " is not topologically sorted");
    }
    invariant(rig.rest_offset[j].allFinite(), "rest_offset[" + std::to_string(j) + "] is not finite");
  }
  invariant(roots == 1, "exactly one root required");
  invariant(rig.rest_offset[0].isZero(0.0), "rest_offset[0] must be zero");

  for (std::size_t v = 0; v < rig.vertices.size(); ++v) {
    const auto& vx = rig.vertices[v];
    const std::string tag = "vertices[" + std::to_string(v) + "]";
    invariant(vx.position.allFinite(), tag + ".position is not finite");
    invariant(!vx.weights.empty() && vx.weights.size() <= 4, tag + " must have 1..4 weights");
    double sum = 0.0;
    for (const auto& [jj, w] : vx.weights) {
      invariant(jj >= 0 && jj < kJointCount, tag + " weight joint out of range");
      invariant(w >= 0.0 && std::isfinite(w), tag + " weight must be nonnegative");
      sum += w;
    }
    invariant(std::abs(sum - 1.0) <= 1e-6, tag + " weights must sum to 1");
  }
  for (int k = 0; k < kLocationCount; ++k) {
    const auto& s = rig.sites[k];
    invariant(s.joint >= 0 && s.joint < kJointCount,
              "location_map[" + std::string(location_id(static_cast<BodyLocation>(k))) + "].joint out of range");
    invariant(s.offset.allFinite(), "location_map offset is not finite");
  }
}

FkResult forward_kinematics(const Rig& rig, const Pose& pose) {
  FkResult out;
  out.rotations[0] = pose.local_rot[0];
  out.positions[0] = pose.root_trans;
  for (int j = 1; j < kJointCount; ++j) {
    const int p = rig.parent[j];
    out.rotations[j] = out.rotations[p] * pose.local_rot[j];
    out.positions[j] = out.positions[p] + out.rotations[p] * rig.rest_offset[j];
  }
  return out;
}

JointPositions root_relative(const FkResult& fk) {
  JointPositions rel;
  const RotMat inv = fk.rotations[0].transpose();
  for (int j = 0; j < kJointCount; ++j) rel[j] = inv * (fk.positions[j] - fk.positions[0]);
  rel[0].setZero();
  return rel;
}

JointPositions rest_joint_positions(const Rig& rig) { return forward_kinematics(rig, Pose{}).positions; }

std::vector<Vec3> skin_vertices(const Rig& rig, const Pose& pose) { return skin_vertices(rig, forward_kinematics(rig, pose)); }

std::vector<Vec3> skin_vertices(const Rig& rig, const FkResult& fk) {
  if (!rig.has_skin()) fail(ErrorCode::kNoSkin, "rig has no skin vertices");
  const JointPositions rest = rest_joint_positions(rig);
  std::vector<Vec3> out;
  out.reserve(rig.vertices.size());
  for (const auto& v : rig.vertices) {
    Vec3 acc = Vec3::Zero();
    for (const auto& [j, w] : v.weights) acc += w * (fk.rotations[j] * (v.position - rest[j]) + fk.positions[j]);
    out.push_back(acc);
  }
  return out;
}

Vec3 sensor_position(const Rig& rig, const FkResult& fk, BodyLocation loc) {
  const auto& s = rig.site(loc);
  return fk.positions[s.joint] + fk.rotations[s.joint] * s.offset;
}

Rig builtin_toy_rig() {
  Rig rig;
  rig.parent = kSmplParents;
  // Approximate SMPL neutral proportions, arms straight out (T-pose).
  const std::array<Vec3, kJointCount> offsets{
      Vec3(0, 0, 0),          Vec3(0.06, -0.09, 0),    Vec3(-0.06, -0.09, 0),   Vec3(0, 0.11, -0.02),
      Vec3(0.03, -0.38, 0),   Vec3(-0.03, -0.38, 0),   Vec3(0, 0.13, 0.01),     Vec3(-0.01, -0.40, -0.04),
      Vec3(0.01, -0.40, -0.04), Vec3(0, 0.05, 0.02),   Vec3(0.02, -0.05, 0.12), Vec3(-0.02, -0.05, 0.12),
      Vec3(0, 0.21, -0.03),   Vec3(0.08, 0.12, -0.01), Vec3(-0.08, 0.12, -0.01), Vec3(0, 0.09, 0.05),
      Vec3(0.12, 0.04, -0.01), Vec3(-0.12, 0.04, -0.01), Vec3(0.26, 0, 0),       Vec3(-0.26, 0, 0),
      Vec3(0.25, 0, 0),       Vec3(-0.25, 0, 0),       Vec3(0.09, 0, 0),        Vec3(-0.09, 0, 0)};
  rig.rest_offset = offsets;

  const JointPositions rest = rest_joint_positions(rig);
  std::array<bool, kJointCount> has_child{};
  for (int j = 1; j < kJointCount; ++j) has_child[rig.parent[j]] = true;

  // Three vertices along every bone, pushed off-axis, blending into the
  // child near its end.
  for (int j = 1; j < kJointCount; ++j) {
    const int p = rig.parent[j];
    const Vec3 bone = rest[j] - rest[p];
    Vec3 side = bone.cross(Vec3::UnitZ());
    if (side.norm() < 1e-9) side = bone.cross(Vec3::UnitX());
    side = side.normalized() * 0.04;
    const std::array<double, 3> fractions{0.25, 0.5, 0.75};
    for (int k = 0; k < 3; ++k) {
      SkinVertex v;
      v.position = rest[p] + fractions[k] * bone + (k == 1 ? -side : side);
      if (k < 2)
        v.weights = {{p, 1.0}};
      else
        v.weights = {{p, 0.6}, {j, 0.4}};
      rig.vertices.push_back(v);
    }
  }
  // Tips of end effectors.
  for (int j = 0; j < kJointCount; ++j) {
    if (has_child[j]) continue;
    SkinVertex v;
    v.position = rest[j] + (j == joint::kHead ? Vec3(0, 0.1, 0) : rig.rest_offset[j].normalized() * 0.03);
    v.weights = {{j, 1.0}};
    rig.vertices.push_back(v);
  }
  // Soles and heels.
  for (int f : {joint::kLeftFoot, joint::kRightFoot}) rig.vertices.push_back({rest[f] + Vec3(0, -0.03, 0.02), {{f, 1.0}}});
  for (int a : {joint::kLeftAnkle, joint::kRightAnkle}) rig.vertices.push_back({rest[a] + Vec3(0, -0.06, -0.04), {{a, 1.0}}});

  rig.sites[static_cast<int>(BodyLocation::kRightPocket)] = {joint::kRightHip, Vec3::Zero()};
  rig.sites[static_cast<int>(BodyLocation::kLeftPocket)] = {joint::kLeftHip, Vec3::Zero()};
  rig.sites[static_cast<int>(BodyLocation::kRightWrist)] = {joint::kRightWrist, Vec3::Zero()};
  rig.sites[static_cast<int>(BodyLocation::kLeftWrist)] = {joint::kLeftWrist, Vec3::Zero()};
  rig.sites[static_cast<int>(BodyLocation::kHead)] = {joint::kHead, Vec3::Zero()};
  return rig;
}

std::string serialize_rig(const Rig& rig) {
  json j;
  j["format"] = "mobileposer-rig";
  j["version"] = 1;
  j["up_axis"] = "+y";
  json joints = json::array();
  for (int k = 0; k < kJointCount; ++k)
    joints.push_back({{"name", joint_names()[k]}, {"parent", rig.parent[k]}, {"offset", vec_json(rig.rest_offset[k])}});
  j["joints"] = joints;
  json sites = json::object();
  for (auto loc : kAllLocations)
    sites[std::string(location_id(loc))] = {{"joint", rig.site(loc).joint}, {"offset", vec_json(rig.site(loc).offset)}};
  j["location_map"] = sites;
  json verts = json::array();
  for (const auto& v : rig.vertices) {
    json w = json::array();
    for (const auto& [jj, ww] : v.weights) w.push_back(json::array({jj, ww}));
    verts.push_back({{"position", vec_json(v.position)}, {"weights", w}});
  }
  j["vertices"] = verts;
  return j.dump(1) + "\n";
}

Rig parse_rig(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("rig: ") + e.what());
  }
  try {
    if (j.value("format", "") != "mobileposer-rig") fail(ErrorCode::kParse, "rig: missing or wrong 'format'");
    const int version = j.at("version").get<int>();
    if (version > 1) fail(ErrorCode::kVersionUnsupported, "rig: version " + std::to_string(version) + " is newer than supported (1)");
    if (j.value("up_axis", "+y") != "+y") fail(ErrorCode::kParse, "rig: only +y up rigs are supported; convert on import");

    Rig rig;
    const auto& joints = j.at("joints");
    if (!joints.is_array() || joints.size() != kJointCount)
      fail(ErrorCode::kInvariantViolation, "rig invariant violated: joints must have exactly 24 entries");
    for (int k = 0; k < kJointCount; ++k) {
      rig.parent[k] = joints[k].at("parent").get<int>();
      rig.rest_offset[k] = json_vec(joints[k].at("offset"), "joints[" + std::to_string(k) + "].offset");
    }
    const auto& sites = j.at("location_map");
    if (!sites.is_object() || sites.size() != kLocationCount)
      fail(ErrorCode::kInvariantViolation, "rig invariant violated: location_map must cover exactly the 5 sensor sites");
    for (auto loc : kAllLocations) {
      const std::string id(location_id(loc));
      if (!sites.contains(id)) fail(ErrorCode::kInvariantViolation, "rig invariant violated: location_map lacks '" + id + "'");
      rig.sites[static_cast<int>(loc)] = {sites[id].at("joint").get<int>(), json_vec(sites[id].at("offset"), "location_map." + id)};
    }
    if (j.contains("vertices")) {
      for (const auto& v : j["vertices"]) {
        SkinVertex sv;
        sv.position = json_vec(v.at("position"), "vertices.position");
        for (const auto& w : v.at("weights")) sv.weights.emplace_back(w.at(0).get<int>(), w.at(1).get<double>());
        rig.vertices.push_back(std::move(sv));
      }
    }
    validate_rig(rig);
    return rig;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("rig: ") + e.what());
  }
}

Rig load_rig(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open rig file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rig(ss.str());
}

void save_rig(const Rig& rig, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write rig file " + path);
  out << serialize_rig(rig);
}

namespace {
constexpr std::uint32_t kFlagContacts = 1u;
constexpr std::uint32_t kFlagRootVelocity = 2u;
}  // namespace

void save_motion(const MotionSequence& seq, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write motion file " + path);
  std::uint32_t flags = 0;
  if (seq.contacts) flags |= kFlagContacts;
  if (seq.root_velocity) flags |= kFlagRootVelocity;
  bin::put_magic(out, "MPSQ");
  bin::put<std::uint32_t>(out, kMotionFormatVersion);
  bin::put_f32(out, seq.fps);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.frames.size()));
  bin::put<std::uint32_t>(out, flags);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const auto& f = seq.frames[t];
    for (int j = 0; j < kJointCount; ++j)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) bin::put_f32(out, f.local_rot[j](r, c));
    for (int i = 0; i < 3; ++i) bin::put_f32(out, f.root_trans[i]);
    if (seq.contacts) {
      bin::put<std::uint8_t>(out, (*seq.contacts)[t][0] ? 1 : 0);
      bin::put<std::uint8_t>(out, (*seq.contacts)[t][1] ? 1 : 0);
    }
    if (seq.root_velocity)
      for (int i = 0; i < 3; ++i) bin::put_f32(out, (*seq.root_velocity)[t][i]);
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open motion file " + path);
  bin::expect_magic(in, "MPSQ", "motion sequence");
  const auto version = bin::get<std::uint32_t>(in, "version");
  if (version > kMotionFormatVersion)
    fail(ErrorCode::kVersionUnsupported, "motion file version " + std::to_string(version) + " is newer than supported");
  MotionSequence seq;
  seq.fps = bin::get_f32(in, "fps");
  if (!(seq.fps > 0)) fail(ErrorCode::kParse, "motion file: fps must be positive");
  const auto count = bin::get<std::uint32_t>(in, "frame count");
  const auto flags = bin::get<std::uint32_t>(in, "flags");
  if (flags & ~(kFlagContacts | kFlagRootVelocity)) fail(ErrorCode::kParse, "motion file: unknown channel flags");
  if (flags & kFlagContacts) seq.contacts.emplace();
  if (flags & kFlagRootVelocity) seq.root_velocity.emplace();
  seq.frames.resize(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    auto& f = seq.frames[t];
    for (int j = 0; j < kJointCount; ++j)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) f.local_rot[j](r, c) = bin::get_f32(in, "rotation");
    for (int i = 0; i < 3; ++i) f.root_trans[i] = bin::get_f32(in, "translation");
    if (seq.contacts) {
      const auto l = bin::get<std::uint8_t>(in, "contact");
      const auto r = bin::get<std::uint8_t>(in, "contact");
      seq.contacts->push_back({l != 0, r != 0});
    }
    if (seq.root_velocity) {
      Vec3 v;
      for (int i = 0; i < 3; ++i) v[i] = bin::get_f32(in, "root velocity");
      seq.root_velocity->push_back(v);
    }
  }
  return seq;
}

}  // namespace mobileposer
