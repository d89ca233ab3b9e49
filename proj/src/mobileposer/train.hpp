#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mobileposer/bundle.hpp"
#include "mobileposer/skeleton.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 256;
  int epochs = 80;
  double grad_clip = 1.0;
  double lambda_jerk = 1e-5;
  double noise_sigma = 0.04;  // on joint inputs of the pose-conditioned heads
  std::uint64_t seed = 0;
  int max_steps = 0;  // per head; 0 = no cap
  std::vector<int> horizons{1, 3, 9, 27};

  void validate() const;
};

struct EpochRecord {
  Head head = Head::kJoint;
  int epoch = 0;
  std::int64_t step = 0;  // optimizer steps taken so far, including resumed ones
  double loss = 0.0;      // mean batch loss over the epoch
};

struct HeadTrainResult {
  Head head = Head::kJoint;
  double initial_loss = 0.0;  // first batch, before any update
  double final_loss = 0.0;    // last epoch mean
  std::int64_t steps = 0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<HeadTrainResult> heads;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains each requested head independently on `data`. Optimizer state in
/// the bundle is resumed and written back. Throws ChannelMissing when the
/// dataset lacks a channel the head needs.
TrainResult train_heads(ModelBundle& bundle, const Dataset& data, std::span<const Head> heads, const Rig& rig,
                        const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Channels a head reads from a dataset.
std::uint32_t required_channels(Head head);

enum class JointSource { kGroundTruth, kPredicted };

/// Noise-free loss of one head over `windows` (one batch). Pose-conditioned
/// heads read ground-truth joints or F_joint predictions.
double head_loss(const ModelBundle& bundle, Head head, std::span<const LabeledWindow> windows, const Rig& rig,
                 const TrainConfig& config, JointSource joints = JointSource::kGroundTruth);

/// Stacks the selected member of each window into a batched sequence.
nn::Seq stack_windows(std::span<const LabeledWindow> windows, std::span<const int> order,
                      Eigen::MatrixXd LabeledWindow::*member);

/// Row-wise concatenation of IMU inputs (60) and joints (72).
nn::Seq concat_features(const nn::Seq& inputs, const nn::Seq& joints);

}  // namespace mobileposer
