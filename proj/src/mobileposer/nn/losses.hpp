#pragma once

#include <span>
#include <vector>

#include "mobileposer/nn/seq_model.hpp"
#include "mobileposer/skeleton.hpp"

namespace mobileposer::nn {

// Every loss takes sequences in the Seq layout, averages over frames and
// batch, and returns dL/dpred in the same layout.

struct LossResult {
  double value = 0.0;
  Seq grad;
};

/// Sum of squared residuals per frame, averaged over frames.
LossResult loss_joint(const Seq& pred, const Seq& gt);

struct RotationLoss {
  double total = 0.0;
  double ori = 0.0;
  double pos = 0.0;
  double jerk = 0.0;
  Seq grad;
};

/// L_ori + L_pos + lambda * L_jerk over 108-wide 6D predictions.
/// L_pos decodes the 6D values, runs root-relative FK (identity at the six
/// unpredicted joints) and compares against the 72-wide `gt_pos`. L_jerk
/// sums squared third backward differences. Each term is normalized by the
/// frame count.
RotationLoss loss_rotation(const Seq& pred6d, const Seq& gt6d, const Seq& gt_pos, const Rig& rig, double lambda);

/// Mean binary cross-entropy from logits.
LossResult loss_contact(const Seq& logits, const Seq& gt);

inline const std::vector<int> kDefaultHorizons{1, 3, 9, 27};

/// For each horizon h: squared norm of the h-frame cumulative residual
/// averaged over the valid start frames; then averaged over horizons.
/// Throws HorizonTooLong when a horizon exceeds the sequence length.
LossResult loss_velocity_cumulative(const Seq& pred, const Seq& gt, std::span<const int> horizons = kDefaultHorizons);

/// Plain mean squared error over all entries.
LossResult loss_mse(const Seq& pred, const Seq& gt);

/// Root-relative joint positions (24 x 3 flattened) for one frame of 108
/// 6D values; root rotation is ignored.
std::array<double, kJointCount * 3> fk_from_rot6d(std::span<const double> rot6d, const Rig& rig);

}  // namespace mobileposer::nn
