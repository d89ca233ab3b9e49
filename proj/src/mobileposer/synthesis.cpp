#include "mobileposer/synthesis.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "mobileposer/binary_io.hpp"
#include "mobileposer/error.hpp"

namespace mobileposer {

RotMat synth_orientation(const Rig& rig, const MotionSequence& seq, BodyLocation loc, std::size_t frame) {
  const FkResult fk = forward_kinematics(rig, seq.frames.at(frame));
  return fk.rotations[rig.site(loc).joint];
}

std::vector<Vec3> synth_acceleration(const Rig& rig, const MotionSequence& seq, BodyLocation loc) {
  const std::size_t n = seq.size();
  if (n < 3) fail(ErrorCode::kTooShort, "acceleration synthesis needs at least 3 frames");
  std::vector<Vec3> p(n);
  for (std::size_t t = 0; t < n; ++t) p[t] = sensor_position(rig, forward_kinematics(rig, seq.frames[t]), loc);
  const double fps2 = seq.fps * seq.fps;
  std::vector<Vec3> a(n);
  for (std::size_t t = 1; t + 1 < n; ++t) a[t] = (p[t - 1] + p[t + 1] - 2.0 * p[t]) * fps2;
  a[0] = a[1];
  a[n - 1] = a[n - 2];
  return a;
}

Vec3 normalize_acceleration(const Vec3& a) { return a / kAccelScale; }
Vec3 denormalize_acceleration(const Vec3& a) { return a * kAccelScale; }

std::vector<std::array<bool, 2>> contact_labels(const Rig& rig, const MotionSequence& seq, double threshold) {
  const std::size_t n = seq.size();
  if (n < 2) fail(ErrorCode::kTooShort, "contact labels need at least 2 frames");
  std::vector<std::array<Vec3, 2>> feet(n);
  for (std::size_t t = 0; t < n; ++t) {
    const FkResult fk = forward_kinematics(rig, seq.frames[t]);
    feet[t] = {fk.positions[joint::kLeftFoot], fk.positions[joint::kRightFoot]};
  }
  std::vector<std::array<bool, 2>> out(n);
  for (std::size_t t = 1; t < n; ++t)
    for (int f = 0; f < 2; ++f) out[t][f] = (feet[t][f] - feet[t - 1][f]).norm() < threshold;
  out[0] = out[1];
  return out;
}

RotMat heading_rotation(const RotMat& root_rot) { return rot_y(-heading_yaw(root_rot)); }

Vec3 to_heading_frame(const RotMat& root_rot, const Vec3& world) { return heading_rotation(root_rot) * world; }

Vec3 from_heading_frame(const RotMat& root_rot, const Vec3& local) { return rot_y(heading_yaw(root_rot)) * local; }

std::vector<Vec3> root_velocity_labels(const MotionSequence& seq) {
  const std::size_t n = seq.size();
  if (n < 2) fail(ErrorCode::kTooShort, "root velocity labels need at least 2 frames");
  std::vector<Vec3> v(n, Vec3::Zero());
  for (std::size_t t = 1; t < n; ++t)
    v[t] = to_heading_frame(seq.frames[t].local_rot[0], seq.frames[t].root_trans - seq.frames[t - 1].root_trans);
  return v;
}

std::array<double, kRot6dDim> pose_to_rot6d(const Pose& pose) {
  std::array<double, kRot6dDim> out{};
  for (int k = 0; k < kPredictedJointCount; ++k) {
    const Rot6D r = rot6d_from_matrix(pose.local_rot[kPredictedJoints[k]]);
    std::copy(r.r.begin(), r.r.end(), out.begin() + 6 * k);
  }
  return out;
}

Pose pose_from_rot6d(std::span<const double> rot6d, const Vec3& root_trans) {
  if (rot6d.size() != kRot6dDim) fail(ErrorCode::kShapeMismatch, "pose_from_rot6d expects 108 values");
  Pose pose;
  for (int k = 0; k < kPredictedJointCount; ++k)
    pose.local_rot[kPredictedJoints[k]] = matrix_from_rot6d(std::span<const double, 6>(rot6d.data() + 6 * k, 6));
  pose.root_trans = root_trans;
  return pose;
}

std::array<double, kJointDim> flatten_joints(const JointPositions& joints) {
  std::array<double, kJointDim> out{};
  for (int j = 0; j < kJointCount; ++j)
    for (int i = 0; i < 3; ++i) out[3 * j + i] = joints[j][i];
  return out;
}

ClipChannels synthesize_channels(const Rig& rig, const MotionSequence& seq, double contact_threshold) {
  const std::size_t n = seq.size();
  if (n < 3) fail(ErrorCode::kTooShort, "clip needs at least 3 frames");
  ClipChannels clip;
  clip.inputs.assign(n, InputFrame{});
  std::array<std::vector<Vec3>, kLocationCount> accel;
  for (auto loc : kAllLocations) accel[static_cast<int>(loc)] = synth_acceleration(rig, seq, loc);

  clip.joints.resize(n);
  clip.rot6d.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const FkResult fk = forward_kinematics(rig, seq.frames[t]);
    ReadingMap readings;
    for (auto loc : kAllLocations)
      readings[loc] = Reading{accel[static_cast<int>(loc)][t], fk.rotations[rig.site(loc).joint]};
    clip.inputs[t] = pack_input(readings, combo_from_mask(0x1f));
    clip.joints[t] = flatten_joints(root_relative(fk));
    clip.rot6d[t] = pose_to_rot6d(seq.frames[t]);
  }
  if (seq.contacts && seq.contacts->size() == n)
    clip.contacts = *seq.contacts;
  else
    clip.contacts = contact_labels(rig, seq, contact_threshold);
  if (seq.root_velocity && seq.root_velocity->size() == n)
    clip.root_velocity = *seq.root_velocity;
  else
    clip.root_velocity = root_velocity_labels(seq);
  return clip;
}

std::vector<LabeledWindow> make_windows(const Rig& rig, const MotionSequence& seq, std::span<const DeviceCombo> combos,
                                        int window, int stride) {
  if (window < 8 || stride < 1) fail(ErrorCode::kUsage, "window must be >= 8 and stride >= 1");
  if (static_cast<int>(seq.size()) < window)
    fail(ErrorCode::kTooShort, "clip of " + std::to_string(seq.size()) + " frames is shorter than window " + std::to_string(window));
  return make_windows(synthesize_channels(rig, seq), combos, window, stride);
}

std::vector<LabeledWindow> make_windows(const ClipChannels& clip, std::span<const DeviceCombo> combos, int window,
                                        int stride) {
  if (window < 8 || stride < 1) fail(ErrorCode::kUsage, "window must be >= 8 and stride >= 1");
  const int n = static_cast<int>(clip.inputs.size());
  if (n < window)
    fail(ErrorCode::kTooShort, "clip of " + std::to_string(n) + " frames is shorter than window " + std::to_string(window));
  std::vector<LabeledWindow> out;
  for (int start = 0; start + window <= n; start += stride) {
    for (const auto& combo : combos) {
      LabeledWindow w;
      w.combo = combo;
      w.inputs.resize(window, kInputDim);
      w.joints.resize(window, kJointDim);
      w.rot6d.resize(window, kRot6dDim);
      w.contacts.resize(window, 2);
      w.root_vel.resize(window, 3);
      for (int i = 0; i < window; ++i) {
        const int t = start + i;
        const InputFrame x = mask_input(clip.inputs[t], combo);
        for (int c = 0; c < kInputDim; ++c) w.inputs(i, c) = x[c];
        for (int c = 0; c < kJointDim; ++c) w.joints(i, c) = clip.joints[t][c];
        for (int c = 0; c < kRot6dDim; ++c) w.rot6d(i, c) = clip.rot6d[t][c];
        w.contacts(i, 0) = clip.contacts[t][0] ? 1.0 : 0.0;
        w.contacts(i, 1) = clip.contacts[t][1] ? 1.0 : 0.0;
        w.root_vel.row(i) = clip.root_velocity[t].transpose();
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

void add_joint_noise(std::span<double> joints, double sigma, std::uint64_t seed) {
  if (sigma < 0) fail(ErrorCode::kUsage, "noise sigma must be nonnegative");
  if (sigma == 0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : joints) v += dist(rng);
}

void add_joint_noise(Eigen::MatrixXd& joints, double sigma, std::uint64_t seed) {
  add_joint_noise(std::span<double>(joints.data(), static_cast<std::size_t>(joints.size())), sigma, seed);
}

namespace {

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) bin::put_f32(os, m(r, c));
}

Eigen::MatrixXd get_matrix(std::istream& is, int rows, int cols, const char* what) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = bin::get_f32(is, what);
  return m;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write dataset " + path);

  // Combo table: unique combos in order of first appearance.
  std::vector<DeviceCombo> table;
  std::vector<std::uint32_t> index;
  for (const auto& w : ds.windows) {
    auto it = std::find(table.begin(), table.end(), w.combo);
    if (it == table.end()) {
      table.push_back(w.combo);
      it = table.end() - 1;
    }
    index.push_back(static_cast<std::uint32_t>(it - table.begin()));
  }

  bin::put_magic(out, "MPDS");
  bin::put<std::uint32_t>(out, kDatasetFormatVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.window));
  bin::put<std::uint32_t>(out, ds.channels);
  bin::put_f32(out, ds.fps);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& c : table) {
    bin::put<std::uint8_t>(out, c.mask);
    bin::put_string(out, c.id());
  }
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.windows.size()));
  for (std::size_t k = 0; k < ds.windows.size(); ++k) {
    const auto& w = ds.windows[k];
    bin::put<std::uint32_t>(out, index[k]);
    if (ds.channels & kChannelInputs) put_matrix(out, w.inputs);
    if (ds.channels & kChannelJoints) put_matrix(out, w.joints);
    if (ds.channels & kChannelRot6d) put_matrix(out, w.rot6d);
    if (ds.channels & kChannelContacts)
      for (int r = 0; r < w.contacts.rows(); ++r)
        for (int c = 0; c < 2; ++c) bin::put<std::uint8_t>(out, w.contacts(r, c) > 0.5 ? 1 : 0);
    if (ds.channels & kChannelRootVel) put_matrix(out, w.root_vel);
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open dataset " + path);
  bin::expect_magic(in, "MPDS", "dataset");
  const auto version = bin::get<std::uint32_t>(in, "version");
  if (version > kDatasetFormatVersion)
    fail(ErrorCode::kVersionUnsupported, "dataset version " + std::to_string(version) + " is newer than supported");
  Dataset ds;
  ds.window = static_cast<int>(bin::get<std::uint32_t>(in, "window"));
  ds.channels = bin::get<std::uint32_t>(in, "channels");
  ds.fps = bin::get_f32(in, "fps");
  if (ds.window < 1 || ds.window > 100000) fail(ErrorCode::kParse, "dataset: implausible window length");
  if (ds.channels & ~static_cast<std::uint32_t>(kAllChannels)) fail(ErrorCode::kParse, "dataset: unknown channel flags");
  const auto ncombo = bin::get<std::uint32_t>(in, "combo count");
  std::vector<DeviceCombo> table;
  for (std::uint32_t k = 0; k < ncombo; ++k) {
    const auto mask = bin::get<std::uint8_t>(in, "combo mask");
    const std::string id = bin::get_string(in, "combo id", 256);
    DeviceCombo c = combo_from_mask(mask);
    if (c.id() != id) fail(ErrorCode::kParse, "dataset: combo table entry '" + id + "' does not match its mask");
    table.push_back(c);
  }
  const auto count = bin::get<std::uint32_t>(in, "window count");
  const int n = ds.window;
  ds.windows.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    LabeledWindow w;
    const auto ci = bin::get<std::uint32_t>(in, "combo index");
    if (ci >= table.size()) fail(ErrorCode::kParse, "dataset: combo index out of range");
    w.combo = table[ci];
    if (ds.channels & kChannelInputs) w.inputs = get_matrix(in, n, kInputDim, "inputs");
    if (ds.channels & kChannelJoints) w.joints = get_matrix(in, n, kJointDim, "joints");
    if (ds.channels & kChannelRot6d) w.rot6d = get_matrix(in, n, kRot6dDim, "rot6d");
    if (ds.channels & kChannelContacts) {
      w.contacts.resize(n, 2);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < 2; ++c) w.contacts(r, c) = bin::get<std::uint8_t>(in, "contacts") ? 1.0 : 0.0;
    }
    if (ds.channels & kChannelRootVel) w.root_vel = get_matrix(in, n, 3, "root velocity");
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

}  // namespace mobileposer
