#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobileposer/bundle.hpp"
#include "mobileposer/config.hpp"
#include "mobileposer/metrics.hpp"
#include "mobileposer/skeleton.hpp"
#include "mobileposer/train.hpp"

namespace mobileposer {

// The operations behind each CLI subcommand. Each returns a JSON record that
// the CLI prints; artifacts go to the paths given.

/// Rig from `config.rig`, or the built-in toy rig when unset.
Rig load_run_rig(const RunConfig& config);

/// Checks every head against the dims the pipeline feeds it. Throws DimMismatch.
void check_bundle_dims(const ModelBundle& bundle);

/// Windows every clip for each combo (all 24 when `combos` is empty) and
/// writes the dataset to `out_path` and a manifest to `out_path + ".json"`.
/// Unreadable clips are all reported in one Parse error; nothing is written.
nlohmann::json cmd_synth(std::span<const std::string> motion_files, const Rig& rig, const RunConfig& config,
                         const std::string& out_path, std::span<const DeviceCombo> combos = {});

struct TrainOptions {
  std::vector<Head> heads{kPipelineHeads.begin(), kPipelineHeads.end()};
  std::string resume;   // checkpoint to continue from
  bool overfit = false; // step-capped run (2000 steps unless train.max_steps is set)
  EpochCallback on_epoch;
};

inline constexpr int kOverfitSteps = 2000;

/// Trains the selected heads and writes the checkpoint to `out_path` and the
/// training record to `out_path + ".json"`.
nlohmann::json cmd_train(const std::string& dataset_path, const Rig& rig, const RunConfig& config,
                         const std::string& out_path, const TrainOptions& options = {});

struct EvalOptions {
  std::vector<DeviceCombo> combos;  // empty = all 24
  bool ablate_translation = false;
  bool ground_truth_as_prediction = false;  // sanity mode; no checkpoint needed
};

/// Frame-weighted mean of per-clip reports.
EvalReport merge_reports(std::span<const EvalReport> reports);

/// Offline inference (plus the refiner when enabled) and metrics per combo.
nlohmann::json cmd_eval(const ModelBundle* bundle, std::span<const std::string> motion_files, const Rig& rig,
                        const RunConfig& config, const EvalOptions& options = {});
nlohmann::json cmd_eval_sequences(const ModelBundle* bundle, std::span<const MotionSequence> clips, const Rig& rig,
                                  const RunConfig& config, const EvalOptions& options = {});

struct BenchOptions {
  int frames = 10000;
  int warmup = 100;
};

/// Times one online step (estimator, plus refiner when enabled) per frame on
/// a looped synthetic walk.
nlohmann::json cmd_bench(const ModelBundle& bundle, const Rig& rig, const RunConfig& config,
                         const BenchOptions& options = {});

/// Summary of a rig: joints, parents, bone lengths, sensor sites, skin size.
nlohmann::json cmd_rig_info(const Rig& rig);

/// Imports every manifest into `out_dir/<stem>.mpsq`.
nlohmann::json cmd_import(std::span<const std::string> manifests, const std::string& out_dir);

}  // namespace mobileposer
