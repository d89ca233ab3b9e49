// mobileposer command-line front end. Every command goes through the C API.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mobileposer/mobileposer.h"

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsageExit = 1, kDataExit = 2, kRuntimeExit = 3 };

int exit_code(mp_status s) {
  switch (s) {
    case MP_OK:
      return kOk;
    case MP_ERR_USAGE:
      return kUsageExit;
    case MP_ERR_NON_FINITE_GRADIENT:
    case MP_ERR_PROTOCOL:
    case MP_ERR_RUNTIME:
      return kRuntimeExit;
    default:
      return kDataExit;
  }
}

int report(mp_status s) {
  std::cerr << "error [" << mp_status_name(s) << "]: " << mp_last_error() << "\n";
  return exit_code(s);
}

// Config assembled from --config, then --set, then typed flags.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::string> rig, checkpoint, combo;
  std::optional<int> window, stride, hidden, layers;
  std::optional<double> fps;
  std::optional<std::uint64_t> seed;
  bool no_refine = false;

  void add_to(CLI::App& app) {
    app.add_option("--config", file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "Override a config key, e.g. --set train.lr=1e-4")->take_all();
    app.add_option("--rig", rig, "Rig file (default: built-in toy rig)");
    app.add_option("--checkpoint", checkpoint, "Checkpoint file");
    app.add_option("--combo", combo, "Device combo id, e.g. rpocket+lwrist+head");
    app.add_option("--window", window, "Window length N in frames");
    app.add_option("--stride", stride, "Window stride for synthesis");
    app.add_option("--fps", fps, "Frame rate");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--hidden", hidden, "LSTM hidden size");
    app.add_option("--layers", layers, "LSTM layers per head");
    app.add_flag("--no-refine", no_refine, "Disable the pose refiner");
  }

  json build() const {
    json cfg = json::object();
    if (!file.empty()) {
      std::ifstream in(file);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = json::parse(ss.str(), nullptr, false);
      if (cfg.is_discarded() || !cfg.is_object()) throw CLI::ValidationError("--config", file + " is not a JSON object");
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got " + s);
      json value = json::parse(s.substr(eq + 1), nullptr, false);
      if (value.is_discarded()) value = s.substr(eq + 1);
      json::json_pointer ptr;
      std::string key = s.substr(0, eq);
      for (std::size_t pos; (pos = key.find('.')) != std::string::npos; key = key.substr(pos + 1)) ptr /= key.substr(0, pos);
      ptr /= key;
      cfg[ptr] = value;
    }
    if (rig) cfg["rig"] = *rig;
    if (checkpoint) cfg["checkpoint"] = *checkpoint;
    if (combo) cfg["combo"] = *combo;
    if (window) cfg["window"] = *window;
    if (stride) cfg["stride"] = *stride;
    if (fps) cfg["fps"] = *fps;
    if (seed) cfg["seed"] = *seed;
    if (hidden) cfg["model"]["hidden"] = *hidden;
    if (layers) cfg["model"]["layers"] = *layers;
    if (no_refine) cfg["refiner"]["enabled"] = false;
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int run(const char* command, const json& request, json* result = nullptr, bool print = true) {
  char* out = nullptr;
  const mp_status s = mp_run(command, request.dump().c_str(), &out);
  if (s != MP_OK) return report(s);
  const json j = json::parse(out);
  mp_string_free(out);
  if (print) std::cout << j.dump(2) << "\n";
  if (result) *result = j;
  return kOk;
}

void print_log(const char* line, void*) { std::cerr << line << "\n"; }

int serve(const json& config, const std::string& host, int port) {
  // Block the signals before any thread starts so sigwait receives them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const std::string rig_path = config.value("rig", std::string());
  const std::string ckpt = config.value("checkpoint", std::string());
  if (ckpt.empty()) {
    std::cerr << "error [usage]: stream needs --checkpoint\n";
    return kUsageExit;
  }
  mp_rig* rig = nullptr;
  mp_model* model = nullptr;
  mp_server* server = nullptr;
  mp_status s = mp_rig_load(rig_path.c_str(), &rig);
  if (s == MP_OK) s = mp_model_load(ckpt.c_str(), &model);
  if (s == MP_OK) s = mp_server_start(model, rig, config.dump().c_str(), host.c_str(), port, &server);
  if (s != MP_OK) {
    const int code = report(s);
    mp_model_free(model);
    mp_rig_free(rig);
    return code;
  }
  std::cout << json{{"listening", host}, {"port", mp_server_port(server)}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "shutting down\n";
  mp_server_stop(server);
  mp_server_free(server);
  mp_model_free(model);
  mp_rig_free(rig);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-body pose and translation from sparse phone, watch and earbud IMUs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mp_version()));
  ConfigArgs cfg;

  std::vector<std::string> inputs;
  std::string output;
  std::string combos;

  auto* synth = app.add_subcommand("synth", "Synthesize a labeled window dataset from motion clips");
  cfg.add_to(*synth);
  synth->add_option("inputs", inputs, "Motion files (.mpsq)")->required();
  synth->add_option("-o,--output", output, "Dataset file")->required();
  synth->add_option("--combos", combos, "Comma-separated combo ids (default: all 24)");

  auto* train = app.add_subcommand("train", "Train model heads on a dataset");
  cfg.add_to(*train);
  std::string dataset, heads = "joint,theta,contact,velocity", resume;
  bool overfit = false;
  std::optional<int> steps, epochs, batch;
  std::optional<double> lr, lambda_jerk;
  train->add_option("dataset", dataset, "Dataset file")->required();
  train->add_option("-o,--output", output, "Checkpoint to write")->required();
  train->add_option("--heads", heads, "Heads: joint,theta,contact,velocity,velocity_imu");
  train->add_option("--resume", resume, "Continue from this checkpoint");
  train->add_flag("--overfit", overfit, "Step-capped run (2000 steps per head unless --steps)");
  train->add_option("--steps", steps, "Optimizer steps per head");
  train->add_option("--epochs", epochs, "Epochs per head");
  train->add_option("--batch", batch, "Batch size");
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--lambda-jerk", lambda_jerk, "Jerk penalty weight");

  auto* eval = app.add_subcommand("eval", "Run offline inference and report metrics per combo");
  cfg.add_to(*eval);
  bool ablate = false, ground_truth = false, json_only = false;
  std::string record;
  eval->add_option("inputs", inputs, "Motion files (.mpsq)")->required();
  eval->add_option("--combos", combos, "Comma-separated combo ids (default: all 24)");
  eval->add_flag("--ablate-translation", ablate, "Compare pose-conditioned and IMU-only velocity heads");
  eval->add_flag("--ground-truth", ground_truth, "Score ground truth against itself");
  eval->add_option("--record", record, "Also write the JSON record to this file");
  eval->add_flag("--json", json_only, "Print the JSON record instead of the text report");

  auto* stream = app.add_subcommand("stream", "Serve live pose estimation over TCP");
  cfg.add_to(*stream);
  std::string host = "127.0.0.1";
  int port = 7878;
  stream->add_option("--host", host, "Bind address");
  stream->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  auto* bench = app.add_subcommand("bench", "Time online step() latency");
  cfg.add_to(*bench);
  int frames = 10000;
  bench->add_option("--frames", frames, "Timed frames")->check(CLI::PositiveNumber);

  auto* import = app.add_subcommand("import", "Convert array manifests to motion files");
  std::string out_dir = ".";
  import->add_option("inputs", inputs, "Manifest files (.json)")->required();
  import->add_option("-o,--output-dir", out_dir, "Directory for the .mpsq files");

  auto* exporter = app.add_subcommand("export", "Write a motion file as a canonical manifest");
  std::string motion;
  exporter->add_option("input", motion, "Motion file")->required();
  exporter->add_option("-o,--output", output, "Manifest to write")->required();

  auto* rig_info = app.add_subcommand("rig-info", "Describe the rig");
  cfg.add_to(*rig_info);

  auto* demo = app.add_subcommand("demo", "Write a procedural motion clip");
  std::string kind = "walk";
  int demo_frames = 200;
  double speed = 1.2, turn_rate = 0.0;
  std::uint64_t demo_seed = 0;
  demo->add_option("-o,--output", output, "Motion file")->required();
  demo->add_option("--kind", kind, "walk or stand")->check(CLI::IsMember({"walk", "stand"}));
  demo->add_option("--frames", demo_frames, "Frames")->check(CLI::PositiveNumber);
  demo->add_option("--speed", speed, "Walking speed, m/s");
  demo->add_option("--turn-rate", turn_rate, "Heading change, rad/s");
  demo->add_option("--seed", demo_seed, "Gait variation seed (0 = nominal)");

  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");
  cfg.add_to(*config_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageExit;
  }

  json config;
  try {
    config = cfg.build();
  } catch (const CLI::Error& e) {
    std::cerr << "error [usage]: " << e.what() << "\n";
    return kUsageExit;
  }
  mp_set_log(print_log, nullptr);

  if (*synth) {
    json req{{"config", config}, {"inputs", inputs}, {"output", output}};
    if (!combos.empty()) req["combos"] = split_list(combos);
    return run("synth", req);
  }
  if (*train) {
    if (steps) config["train"]["max_steps"] = *steps;
    if (epochs) config["train"]["epochs"] = *epochs;
    if (batch) config["train"]["batch"] = *batch;
    if (lr) config["train"]["lr"] = *lr;
    if (lambda_jerk) config["train"]["lambda_jerk"] = *lambda_jerk;
    json req{{"config", config}, {"dataset", dataset}, {"output", output}, {"heads", split_list(heads)},
             {"overfit", overfit}};
    if (!resume.empty()) req["resume"] = resume;
    return run("train", req);
  }
  if (*eval) {
    json req{{"config", config}, {"inputs", inputs}, {"ablate_translation", ablate}, {"ground_truth", ground_truth}};
    if (!combos.empty()) req["combos"] = split_list(combos);
    json result;
    if (const int rc = run("eval", req, &result, false); rc != kOk) return rc;
    const std::string text = result.value("text", std::string());
    result.erase("text");
    if (json_only)
      std::cout << result.dump(2) << "\n";
    else
      std::cout << text;
    if (result.contains("ablation") && !json_only) std::cout << "== translation ablation\n" << result["ablation"].dump(2) << "\n";
    if (!record.empty()) {
      std::ofstream out(record);
      out << result.dump(2) << "\n";
      if (!out) {
        std::cerr << "error [io_error]: cannot write " << record << "\n";
        return kDataExit;
      }
    }
    return kOk;
  }
  if (*stream) return serve(config, host, port);
  if (*bench) return run("bench", json{{"config", config}, {"frames", frames}});
  if (*import) return run("import", json{{"inputs", inputs}, {"output_dir", out_dir}});
  if (*exporter) return run("export", json{{"input", motion}, {"output", output}});
  if (*rig_info) return run("rig-info", json{{"config", config}});
  if (*demo)
    return run("demo", json{{"output", output},
                            {"kind", kind},
                            {"frames", demo_frames},
                            {"speed", speed},
                            {"turn_rate", turn_rate},
                            {"seed", demo_seed}});
  if (*config_cmd) {
    char* resolved = nullptr;
    const mp_status s = mp_config_resolve(config.dump().c_str(), &resolved);
    if (s != MP_OK) return report(s);
    std::cout << resolved << "\n";
    mp_string_free(resolved);
    return kOk;
  }
  return kUsageExit;
}
