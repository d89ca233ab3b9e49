#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mobileposer/bundle.hpp"
#include "mobileposer/devconfig.hpp"
#include "mobileposer/estimator.hpp"
#include "mobileposer/refine.hpp"
#include "mobileposer/train.hpp"

namespace mobileposer {

/// Everything a CLI run reads. Serialized as nested JSON objects; every leaf
/// can be overridden with a dotted key ("train.lr", "fusion.upper").
struct RunConfig {
  std::string rig;         // rig file; empty = built-in toy rig
  std::string checkpoint;  // checkpoint file
  int window = kDefaultWindow;
  int stride = kDefaultStride;
  double fps = 60.0;
  std::string combo = "rpocket+lwrist+head";
  FusionThresholds fusion;
  bool refine = true;
  RefinerConfig refiner;
  TrainConfig train;
  BundleSpec model;
  double contact_threshold = kContactThreshold;
  std::uint64_t seed = 0;

  /// Throws Usage on out-of-range values or an unknown combo.
  void validate() const;
  DeviceCombo device_combo() const;
  EstimatorConfig estimator_config() const;
  TrainConfig train_config() const;  // train section with the top-level seed

  nlohmann::json to_json() const;
  /// Unknown keys and wrong types are Usage errors; missing keys keep defaults.
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::string& path);

/// Applies "a.b=value"; the value is parsed as JSON when possible, otherwise
/// taken as a string.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace mobileposer
