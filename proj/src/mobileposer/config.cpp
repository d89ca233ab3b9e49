#include "mobileposer/config.hpp"

#include <fstream>
#include <sstream>

#include "mobileposer/error.hpp"

namespace mobileposer {

using nlohmann::json;

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // integers may not silently take fractions
    if (a.is_number_integer() && b.is_number_float()) return false;
    return true;
  }
  return a.type() == b.type();
}

// Checks `user` against the default layout, then overlays it.
void merge_checked(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) fail(ErrorCode::kUsage, "config " + (path.empty() ? "root" : path) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorCode::kUsage, "unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) fail(ErrorCode::kUsage, "config key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  if (window < 4) fail(ErrorCode::kUsage, "window must be at least 4 frames");
  if (stride < 1) fail(ErrorCode::kUsage, "stride must be positive");
  if (!(fps > 0)) fail(ErrorCode::kUsage, "fps must be positive");
  if (!(fusion.lower < fusion.upper)) fail(ErrorCode::kUsage, "fusion.lower must be below fusion.upper");
  if (!(contact_threshold > 0)) fail(ErrorCode::kUsage, "contact_threshold must be positive");
  if (model.hidden_dim < 0 || model.layers < 0) fail(ErrorCode::kUsage, "model sizes must be non-negative");
  device_combo();
  refiner.validate();
  train.validate();
}

DeviceCombo RunConfig::device_combo() const {
  const auto c = find_combo(combo);
  if (!c) fail(ErrorCode::kUsage, "unknown combo '" + combo + "'");
  return *c;
}

EstimatorConfig RunConfig::estimator_config() const {
  EstimatorConfig e;
  e.window = window;
  e.fusion = fusion;
  return e;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

json RunConfig::to_json() const {
  return json{
      {"rig", rig},
      {"checkpoint", checkpoint},
      {"window", window},
      {"stride", stride},
      {"fps", fps},
      {"combo", combo},
      {"fusion", {{"lower", fusion.lower}, {"upper", fusion.upper}}},
      {"refiner",
       {{"enabled", refine},
        {"kp", refiner.kp},
        {"kd", refiner.kd},
        {"contact_lock_threshold", refiner.contact_lock_threshold},
        {"floor_height", refiner.floor_height}}},
      {"train",
       {{"lr", train.lr},
        {"batch", train.batch},
        {"epochs", train.epochs},
        {"grad_clip", train.grad_clip},
        {"lambda_jerk", train.lambda_jerk},
        {"noise_sigma", train.noise_sigma},
        {"max_steps", train.max_steps},
        {"horizons", train.horizons}}},
      {"model",
       {{"hidden", model.hidden_dim}, {"layers", model.layers}, {"imu_only_velocity", model.imu_only_velocity}}},
      {"contact_threshold", contact_threshold},
      {"accel_scale", kAccelScale},
      {"seed", seed},
  };
}

RunConfig RunConfig::from_json(const json& user) {
  json j = RunConfig{}.to_json();
  merge_checked(j, user, "");
  if (j["accel_scale"].get<double>() != kAccelScale)
    fail(ErrorCode::kUsage, "accel_scale is fixed at 30 by the model input layout");

  RunConfig c;
  c.rig = j["rig"];
  c.checkpoint = j["checkpoint"];
  c.window = j["window"];
  c.stride = j["stride"];
  c.fps = j["fps"];
  c.combo = j["combo"];
  c.fusion.lower = j["fusion"]["lower"];
  c.fusion.upper = j["fusion"]["upper"];
  const json& r = j["refiner"];
  c.refine = r["enabled"];
  c.refiner.kp = r["kp"];
  c.refiner.kd = r["kd"];
  c.refiner.contact_lock_threshold = r["contact_lock_threshold"];
  c.refiner.floor_height = r["floor_height"];
  const json& t = j["train"];
  c.train.lr = t["lr"];
  c.train.batch = t["batch"];
  c.train.epochs = t["epochs"];
  c.train.grad_clip = t["grad_clip"];
  c.train.lambda_jerk = t["lambda_jerk"];
  c.train.noise_sigma = t["noise_sigma"];
  c.train.max_steps = t["max_steps"];
  try {
    c.train.horizons = t["horizons"].get<std::vector<int>>();
  } catch (const json::exception&) {
    fail(ErrorCode::kUsage, "train.horizons must be a list of integers");
  }
  const json& m = j["model"];
  c.model.hidden_dim = m["hidden"];
  c.model.layers = m["layers"];
  c.model.imu_only_velocity = m["imu_only_velocity"];
  c.contact_threshold = j["contact_threshold"];
  c.seed = j["seed"];
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, "config " + path + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    fail(ErrorCode::kUsage, "override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  // Build the nested patch {"a": {"b": value}}.
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};

  json merged = config.to_json();
  merge_checked(merged, patch, "");
  config = RunConfig::from_json(merged);
}

}  // namespace mobileposer
