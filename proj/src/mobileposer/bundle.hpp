#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mobileposer/nn/optim.hpp"
#include "mobileposer/nn/seq_model.hpp"

namespace mobileposer {

// The four pipeline heads plus the IMU-only velocity head used by the
// translation ablation.
enum class Head : int { kJoint = 0, kTheta, kContact, kVelocity, kVelocityImu };
inline constexpr int kHeadCount = 5;
inline constexpr std::array<Head, 4> kPipelineHeads{Head::kJoint, Head::kTheta, Head::kContact, Head::kVelocity};

std::string_view head_name(Head head);
std::optional<Head> parse_head(std::string_view name);

inline constexpr int kPoseConditionedDim = 132;  // 60 IMU + 72 joints

struct BundleSpec {
  int hidden_dim = 48;
  int layers = 1;
  bool imu_only_velocity = false;  // also allocate the ablation head
};

nn::SeqModelSpec head_spec(Head head, const BundleSpec& spec);

struct AdamSnapshot {
  nn::Params m;
  nn::Params v;
  std::int64_t steps = 0;
};

struct ModelBundle {
  BundleSpec spec;
  std::array<std::optional<nn::SeqModel>, kHeadCount> heads;
  std::array<std::optional<AdamSnapshot>, kHeadCount> optimizer;
  nlohmann::json record = nlohmann::json::object();  // hyperparameters and training history

  /// Heads initialized from `seed` (each head gets its own stream).
  static ModelBundle create(const BundleSpec& spec, std::uint64_t seed);
  /// Every weight zero.
  static ModelBundle zeros(const BundleSpec& spec);

  bool has(Head h) const { return heads[static_cast<int>(h)].has_value(); }
  /// Throws ChannelMissing when the head is absent.
  const nn::SeqModel& head(Head h) const;
  nn::SeqModel& head(Head h);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint: magic "MPCK", u32 version, hyperparameter JSON, then a table of
/// named f32 tensors "<head>/<tensor>" (plus "adam.m/..." and "adam.v/..."
/// when optimizer state is present).
void save_bundle(const ModelBundle& bundle, const std::string& path, bool with_optimizer = true);
ModelBundle load_bundle(const std::string& path);

/// Rounds every weight to f32, matching what a save/load round trip yields.
void round_to_f32(ModelBundle& bundle);

}  // namespace mobileposer
