#include "mobileposer/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "mobileposer/error.hpp"

namespace mobileposer {

namespace {

void same_length(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::kLengthMismatch, "prediction has " + std::to_string(a) + " frames, ground truth " + std::to_string(b));
  if (a == 0) fail(ErrorCode::kTooShort, "no frames to evaluate");
}

std::vector<Vec3> aligned_vertices(const Rig& rig, const FkResult& fk) {
  std::vector<Vec3> v = skin_vertices(rig, fk);
  const RotMat rt = fk.rotations[0].transpose();
  for (auto& p : v) p = rt * (p - fk.positions[0]);
  return v;
}

}  // namespace

double mpjre(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig) {
  same_length(pred.size(), gt.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const FkResult a = forward_kinematics(rig, pred[t]);
    const FkResult b = forward_kinematics(rig, gt[t]);
    for (int j = 1; j < kJointCount; ++j)
      sum += geodesic_angle(a.rotations[0].transpose() * a.rotations[j], b.rotations[0].transpose() * b.rotations[j]);
  }
  return sum / (static_cast<double>(pred.size()) * (kJointCount - 1));
}

double mpjpe_positions(std::span<const JointPositions> pred_rel, std::span<const JointPositions> gt_rel) {
  same_length(pred_rel.size(), gt_rel.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < pred_rel.size(); ++t)
    for (int j = 1; j < kJointCount; ++j) sum += (pred_rel[t][j] - gt_rel[t][j]).norm();
  return 100.0 * sum / (static_cast<double>(pred_rel.size()) * (kJointCount - 1));
}

double mpjpe(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig) {
  same_length(pred.size(), gt.size());
  std::vector<JointPositions> a(pred.size()), b(gt.size());
  for (std::size_t t = 0; t < pred.size(); ++t) {
    a[t] = root_relative(forward_kinematics(rig, pred[t]));
    b[t] = root_relative(forward_kinematics(rig, gt[t]));
  }
  return mpjpe_positions(a, b);
}

double mpjve(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig) {
  if (!rig.has_skin()) fail(ErrorCode::kNoSkin, "rig has no skin vertices");
  same_length(pred.size(), gt.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const auto a = aligned_vertices(rig, forward_kinematics(rig, pred[t]));
    const auto b = aligned_vertices(rig, forward_kinematics(rig, gt[t]));
    for (std::size_t v = 0; v < a.size(); ++v) sum += (a[v] - b[v]).norm();
  }
  return 100.0 * sum / (static_cast<double>(pred.size()) * static_cast<double>(rig.vertices.size()));
}

double jitter_positions(std::span<const JointPositions> world, double fps) {
  if (world.size() < 4) fail(ErrorCode::kTooShort, "jitter needs at least 4 frames");
  const double f3 = fps * fps * fps;
  double sum = 0.0;
  for (std::size_t t = 3; t < world.size(); ++t)
    for (int j = 0; j < kJointCount; ++j)
      sum += (world[t][j] - 3.0 * world[t - 1][j] + 3.0 * world[t - 2][j] - world[t - 3][j]).norm() * f3;
  return sum / (static_cast<double>(world.size() - 3) * kJointCount);
}

double jitter(std::span<const Pose> poses, const Rig& rig, double fps) {
  std::vector<JointPositions> world(poses.size());
  for (std::size_t t = 0; t < poses.size(); ++t) world[t] = forward_kinematics(rig, poses[t]).positions;
  return jitter_positions(world, fps);
}

double windowed_drift(std::span<const Vec3> pred_vel, std::span<const Vec3> gt_vel, int frames) {
  same_length(pred_vel.size(), gt_vel.size());
  const int n = static_cast<int>(pred_vel.size());
  if (frames < 1 || frames > n) fail(ErrorCode::kTooShort, "sequence shorter than the error window");
  std::vector<Vec3> prefix(static_cast<std::size_t>(n) + 1, Vec3::Zero());
  for (int t = 0; t < n; ++t) prefix[static_cast<std::size_t>(t) + 1] = prefix[static_cast<std::size_t>(t)] + (pred_vel[static_cast<std::size_t>(t)] - gt_vel[static_cast<std::size_t>(t)]);
  double sum = 0.0;
  for (int s = 0; s + frames <= n; ++s)
    sum += (prefix[static_cast<std::size_t>(s + frames)] - prefix[static_cast<std::size_t>(s)]).norm();
  return sum / (n - frames + 1);
}

TranslationError root_translation_error(std::span<const Vec3> pred_vel, std::span<const Vec3> gt_vel, double fps) {
  if (!(fps > 0)) fail(ErrorCode::kUsage, "fps must be positive");
  const int second = static_cast<int>(std::lround(fps));
  TranslationError r;
  r.mean_cm = 100.0 * windowed_drift(pred_vel, gt_vel, second);
  const int n = static_cast<int>(pred_vel.size());
  for (double decade = 1.0;; decade *= 10.0) {
    bool any = false;
    for (double m : {1.0, 2.0, 5.0}) {
      const double secs = m * decade;
      const int frames = static_cast<int>(std::lround(secs * fps));
      if (frames > n) continue;
      any = true;
      r.curve.emplace_back(secs, 100.0 * windowed_drift(pred_vel, gt_vel, frames));
    }
    if (!any) break;
  }
  return r;
}

EvalReport evaluate_clip(std::span<const Pose> pred, std::span<const Pose> gt, const Rig& rig, double fps) {
  same_length(pred.size(), gt.size());
  EvalReport r;
  r.frames = pred.size();
  r.mpjre = mpjre(pred, gt, rig);
  r.mpjpe = mpjpe(pred, gt, rig);
  if (rig.has_skin()) r.mpjve = mpjve(pred, gt, rig);
  r.jitter = jitter(pred, rig, fps);
  std::vector<Vec3> vp(pred.size(), Vec3::Zero()), vg(gt.size(), Vec3::Zero());
  for (std::size_t t = 1; t < pred.size(); ++t) {
    vp[t] = pred[t].root_trans - pred[t - 1].root_trans;
    vg[t] = gt[t].root_trans - gt[t - 1].root_trans;
  }
  const TranslationError te = root_translation_error(vp, vg, fps);
  r.root_translation_error = te.mean_cm;
  r.cumulative_error_curve = te.curve;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["frames"] = frames;
  j["mpjre_deg"] = mpjre;
  j["mpjpe_cm"] = mpjpe;
  j["mpjve_cm"] = mpjve ? nlohmann::json(*mpjve) : nlohmann::json(nullptr);
  j["jitter_m_s3"] = jitter;
  j["jitter_1e2_m_s3"] = jitter / 100.0;
  j["root_translation_error_cm"] = root_translation_error;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [s, cm] : cumulative_error_curve) curve.push_back({{"seconds", s}, {"error_cm", cm}});
  j["cumulative_error_curve"] = curve;
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "frames                    " << frames << "\n";
  os << "MPJRE (deg)               " << mpjre << "\n";
  os << "MPJPE (cm)                " << mpjpe << "\n";
  if (mpjve)
    os << "MPJVE (cm)                " << *mpjve << "\n";
  else
    os << "MPJVE (cm)                n/a (rig has no skin)\n";
  os << "Jitter (1e2 m/s^3)        " << jitter / 100.0 << "\n";
  os << "Root translation err (cm) " << root_translation_error << "\n";
  for (const auto& [s, cm] : cumulative_error_curve) os << "  drift @ " << s << " s: " << cm << " cm\n";
  return os.str();
}

}  // namespace mobileposer
