#include "mobileposer/nn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mobileposer/error.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer::nn {

namespace {

void require_same_shape(const Seq& a, const Seq& b, const char* what) {
  if (a.features() != b.features() || a.steps != b.steps || a.batch != b.batch)
    fail(ErrorCode::kShapeMismatch, std::string(what) + ": prediction and target shapes differ");
}

Seq like(const Seq& s) { return Seq(s.features(), s.steps, s.batch); }

double frames(const Seq& s) { return static_cast<double>(s.steps) * s.batch; }

// Predicted joint slot (0..17) for each SMPL joint, or -1.
constexpr std::array<int, kJointCount> predicted_slot() {
  std::array<int, kJointCount> slot{};
  for (auto& s : slot) s = -1;
  for (int k = 0; k < kPredictedJointCount; ++k) slot[kPredictedJoints[k]] = k;
  return slot;
}
constexpr auto kSlot = predicted_slot();

struct FrameFk {
  std::array<RotMat, kJointCount> local;
  std::array<RotMat, kJointCount> world;
  std::array<Vec3, kJointCount> pos;
};

FrameFk relative_fk(std::span<const double> rot6d, const Rig& rig) {
  FrameFk fk;
  fk.local[0] = RotMat::Identity();
  fk.world[0] = RotMat::Identity();
  fk.pos[0] = Vec3::Zero();
  for (int j = 1; j < kJointCount; ++j) {
    const int s = kSlot[j];
    fk.local[j] = s < 0 ? RotMat::Identity() : matrix_from_rot6d(std::span<const double, 6>(rot6d.data() + 6 * s, 6));
    const int p = rig.parent[j];
    fk.world[j] = fk.world[p] * fk.local[j];
    fk.pos[j] = fk.pos[p] + fk.world[p] * rig.rest_offset[j];
  }
  return fk;
}

}  // namespace

std::array<double, kJointCount * 3> fk_from_rot6d(std::span<const double> rot6d, const Rig& rig) {
  if (rot6d.size() != static_cast<std::size_t>(kRot6dDim)) fail(ErrorCode::kShapeMismatch, "fk_from_rot6d expects 108 values");
  const FrameFk fk = relative_fk(rot6d, rig);
  std::array<double, kJointCount * 3> out{};
  for (int j = 0; j < kJointCount; ++j)
    for (int i = 0; i < 3; ++i) out[3 * j + i] = fk.pos[j][i];
  return out;
}

LossResult loss_joint(const Seq& pred, const Seq& gt) {
  require_same_shape(pred, gt, "loss_joint");
  const double n = frames(pred);
  LossResult r;
  const Mat diff = pred.data - gt.data;
  r.value = diff.squaredNorm() / n;
  r.grad = like(pred);
  r.grad.data = 2.0 * diff / n;
  return r;
}

LossResult loss_mse(const Seq& pred, const Seq& gt) {
  require_same_shape(pred, gt, "loss_mse");
  const double n = static_cast<double>(pred.data.size());
  LossResult r;
  const Mat diff = pred.data - gt.data;
  r.value = diff.squaredNorm() / n;
  r.grad = like(pred);
  r.grad.data = 2.0 * diff / n;
  return r;
}

RotationLoss loss_rotation(const Seq& pred6d, const Seq& gt6d, const Seq& gt_pos, const Rig& rig, double lambda) {
  require_same_shape(pred6d, gt6d, "loss_rotation");
  if (pred6d.features() != kRot6dDim) fail(ErrorCode::kShapeMismatch, "loss_rotation expects 108-wide 6D predictions");
  if (gt_pos.features() != kJointDim || gt_pos.steps != pred6d.steps || gt_pos.batch != pred6d.batch)
    fail(ErrorCode::kShapeMismatch, "loss_rotation expects 72-wide joint targets matching the prediction length");

  const double n = frames(pred6d);
  const int steps = pred6d.steps;
  const int batch = pred6d.batch;
  RotationLoss r;
  r.grad = like(pred6d);

  // Orientation term on raw 6D values.
  const Mat diff = pred6d.data - gt6d.data;
  r.ori = diff.squaredNorm() / n;
  r.grad.data = 2.0 * diff / n;

  // Position term through FK.
  for (Eigen::Index col = 0; col < pred6d.data.cols(); ++col) {
    const double* theta = pred6d.data.col(col).data();
    const std::span<const double> frame6d(theta, kRot6dDim);
    const FrameFk fk = relative_fk(frame6d, rig);

    std::array<Vec3, kJointCount> gpos;
    for (int j = 0; j < kJointCount; ++j) {
      const Vec3 target = gt_pos.data.col(col).segment<3>(3 * j);
      const Vec3 res = fk.pos[j] - target;
      r.pos += res.squaredNorm() / n;
      gpos[j] = 2.0 * res / n;
    }
    std::array<RotMat, kJointCount> gworld;
    for (auto& g : gworld) g.setZero();
    for (int j = kJointCount - 1; j >= 1; --j) {
      const int p = rig.parent[j];
      gpos[p] += gpos[j];
      gworld[p] += gpos[j] * rig.rest_offset[j].transpose();
      gworld[p] += gworld[j] * fk.local[j].transpose();
      const int s = kSlot[j];
      if (s >= 0) {
        const RotMat glocal = fk.world[p].transpose() * gworld[j];
        double* g6 = r.grad.data.col(col).data() + 6 * s;
        matrix_from_rot6d_backward(std::span<const double, 6>(theta + 6 * s, 6), glocal, std::span<double, 6>(g6, 6));
      }
    }
  }

  // Jerk term: third backward difference.
  if (steps >= 4) {
    for (int b = 0; b < batch; ++b) {
      for (int t = 3; t < steps; ++t) {
        const auto x0 = pred6d.data.col(t * batch + b);
        const auto x1 = pred6d.data.col((t - 1) * batch + b);
        const auto x2 = pred6d.data.col((t - 2) * batch + b);
        const auto x3 = pred6d.data.col((t - 3) * batch + b);
        const Eigen::VectorXd jerk = x0 - 3.0 * x1 + 3.0 * x2 - x3;
        r.jerk += jerk.squaredNorm() / n;
        const Eigen::VectorXd g = (2.0 * lambda / n) * jerk;
        r.grad.data.col(t * batch + b) += g;
        r.grad.data.col((t - 1) * batch + b) -= 3.0 * g;
        r.grad.data.col((t - 2) * batch + b) += 3.0 * g;
        r.grad.data.col((t - 3) * batch + b) -= g;
      }
    }
  }

  r.total = r.ori + r.pos + lambda * r.jerk;
  return r;
}

LossResult loss_contact(const Seq& logits, const Seq& gt) {
  require_same_shape(logits, gt, "loss_contact");
  const double n = static_cast<double>(logits.data.size());
  LossResult r;
  r.grad = like(logits);
  for (Eigen::Index k = 0; k < logits.data.size(); ++k) {
    const double x = logits.data.data()[k];
    const double y = gt.data.data()[k];
    r.value += (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)))) / n;
    const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    r.grad.data.data()[k] = (p - y) / n;
  }
  return r;
}

LossResult loss_velocity_cumulative(const Seq& pred, const Seq& gt, std::span<const int> horizons) {
  require_same_shape(pred, gt, "loss_velocity_cumulative");
  if (horizons.empty()) fail(ErrorCode::kUsage, "at least one horizon is required");
  const int steps = pred.steps;
  const int batch = pred.batch;
  const int dim = pred.features();
  for (int h : horizons)
    if (h < 1 || h > steps)
      fail(ErrorCode::kHorizonTooLong, "horizon " + std::to_string(h) + " exceeds sequence length " + std::to_string(steps));

  LossResult r;
  r.grad = like(pred);
  const double scale = 1.0 / (static_cast<double>(horizons.size()) * batch);
  for (int b = 0; b < batch; ++b) {
    // prefix[t] = sum of residuals over frames [0, t)
    Mat prefix = Mat::Zero(dim, steps + 1);
    for (int t = 0; t < steps; ++t)
      prefix.col(t + 1) = prefix.col(t) + (pred.data.col(t * batch + b) - gt.data.col(t * batch + b));
    for (int h : horizons) {
      const int starts = steps - h + 1;
      const double coef = scale / starts;
      // window sums S_s and their running sum for the gradient
      Mat sums(dim, starts);
      for (int s = 0; s < starts; ++s) {
        sums.col(s) = prefix.col(s + h) - prefix.col(s);
        r.value += coef * sums.col(s).squaredNorm();
      }
      Mat run = Mat::Zero(dim, starts + 1);
      for (int s = 0; s < starts; ++s) run.col(s + 1) = run.col(s) + sums.col(s);
      for (int k = 0; k < steps; ++k) {
        const int lo = std::max(0, k - h + 1);
        const int hi = std::min(k, starts - 1);
        if (lo > hi) continue;
        r.grad.data.col(k * batch + b) += 2.0 * coef * (run.col(hi + 1) - run.col(lo));
      }
    }
  }
  return r;
}

}  // namespace mobileposer::nn
