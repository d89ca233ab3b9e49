#include "mobileposer/mobileposer.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "mobileposer/commands.hpp"
#include "mobileposer/error.hpp"
#include "mobileposer/estimator.hpp"
#include "mobileposer/motion_gen.hpp"
#include "mobileposer/motion_import.hpp"
#include "mobileposer/refine.hpp"
#include "mobileposer/stream.hpp"

using nlohmann::json;
namespace mp = mobileposer;

struct mp_rig {
  std::shared_ptr<const mp::Rig> rig;
};

struct mp_model {
  std::shared_ptr<const mp::ModelBundle> bundle;
};

struct mp_estimator {
  std::shared_ptr<const mp::ModelBundle> bundle;
  std::shared_ptr<const mp::Rig> rig;
  mp::RunConfig config;
  mp::Estimator estimator;
  mp::Refiner refiner;

  mp_estimator(std::shared_ptr<const mp::ModelBundle> b, std::shared_ptr<const mp::Rig> r, mp::RunConfig c)
      : bundle(std::move(b)),
        rig(std::move(r)),
        config(std::move(c)),
        estimator(*bundle, *rig, config.device_combo(), config.estimator_config()),
        refiner(*rig, config.refiner, config.fps) {}
};

struct mp_server {
  std::unique_ptr<mp::StreamServer> server;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mu;
mp_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& line) {
  std::lock_guard lock(g_log_mu);
  if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

template <typename F>
mp_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MP_OK;
  } catch (const mp::Error& e) {
    g_last_error = e.what();
    return static_cast<mp_status>(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed request: ") + e.what();
    return MP_ERR_USAGE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MP_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MP_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) mp::fail(mp::ErrorCode::kUsage, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_json(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) mp::fail(mp::ErrorCode::kParse, std::string(what) + " is not valid JSON");
  if (!j.is_object()) mp::fail(mp::ErrorCode::kUsage, std::string(what) + " must be a JSON object");
  return j;
}

mp::RunConfig config_from(const json& request) {
  return mp::RunConfig::from_json(request.value("config", json::object()));
}

std::vector<std::string> strings(const json& request, const char* key) {
  if (!request.contains(key)) return {};
  return request.at(key).get<std::vector<std::string>>();
}

std::vector<mp::DeviceCombo> combos(const json& request) {
  std::vector<mp::DeviceCombo> out;
  for (const auto& id : strings(request, "combos")) {
    const auto c = mp::find_combo(id);
    if (!c) mp::fail(mp::ErrorCode::kUsage, "unknown combo '" + id + "'");
    out.push_back(*c);
  }
  return out;
}

std::string checkpoint_of(const json& request, const mp::RunConfig& config) {
  return request.value("checkpoint", config.checkpoint);
}

json run_command(const std::string& cmd, const json& req) {
  if (cmd == "synth") {
    const auto config = config_from(req);
    const auto roster = combos(req);
    return mp::cmd_synth(strings(req, "inputs"), mp::load_run_rig(config), config, req.at("output"), roster);
  }
  if (cmd == "train") {
    const auto config = config_from(req);
    mp::TrainOptions opts;
    if (req.contains("heads")) {
      opts.heads.clear();
      for (const auto& name : strings(req, "heads")) {
        const auto h = mp::parse_head(name);
        if (!h) mp::fail(mp::ErrorCode::kUsage, "unknown head '" + name + "'");
        opts.heads.push_back(*h);
      }
    }
    opts.resume = req.value("resume", std::string());
    opts.overfit = req.value("overfit", false);
    opts.on_epoch = [](const mp::EpochRecord& e) {
      log_line(json{{"head", mp::head_name(e.head)}, {"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}}.dump());
    };
    return mp::cmd_train(req.at("dataset"), mp::load_run_rig(config), config, req.at("output"), opts);
  }
  if (cmd == "eval") {
    const auto config = config_from(req);
    mp::EvalOptions opts;
    opts.combos = combos(req);
    opts.ablate_translation = req.value("ablate_translation", false);
    opts.ground_truth_as_prediction = req.value("ground_truth", false);
    std::optional<mp::ModelBundle> bundle;
    if (!opts.ground_truth_as_prediction) {
      const std::string ckpt = checkpoint_of(req, config);
      require(!ckpt.empty(), "eval needs a checkpoint");
      bundle = mp::load_bundle(ckpt);
    }
    return mp::cmd_eval(bundle ? &*bundle : nullptr, strings(req, "inputs"), mp::load_run_rig(config), config, opts);
  }
  if (cmd == "bench") {
    const auto config = config_from(req);
    const std::string ckpt = checkpoint_of(req, config);
    const mp::ModelBundle bundle = ckpt.empty() ? mp::ModelBundle::create(config.model, config.seed) : mp::load_bundle(ckpt);
    mp::BenchOptions opts;
    opts.frames = req.value("frames", opts.frames);
    opts.warmup = req.value("warmup", opts.warmup);
    json out = mp::cmd_bench(bundle, mp::load_run_rig(config), config, opts);
    out["checkpoint"] = ckpt;
    return out;
  }
  if (cmd == "import") return mp::cmd_import(strings(req, "inputs"), req.value("output_dir", std::string(".")));
  if (cmd == "export") {
    const mp::MotionSequence seq = mp::load_motion(req.at("input"));
    const std::string out = req.at("output");
    std::ofstream os(out);
    if (!os) mp::fail(mp::ErrorCode::kIo, "cannot write " + out);
    os << mp::export_motion(seq).dump() << '\n';
    if (!os) mp::fail(mp::ErrorCode::kIo, "write failed for " + out);
    return json{{"manifest", out}, {"frames", seq.size()}};
  }
  if (cmd == "rig-info") return mp::cmd_rig_info(mp::load_run_rig(config_from(req)));
  if (cmd == "demo") {
    const std::string kind = req.value("kind", std::string("walk"));
    mp::MotionSequence seq;
    if (kind == "walk") {
      mp::WalkParams p;
      p.frames = req.value("frames", p.frames);
      p.fps = req.value("fps", p.fps);
      p.speed = req.value("speed", p.speed);
      p.cadence = req.value("cadence", p.cadence);
      p.turn_rate = req.value("turn_rate", p.turn_rate);
      p.seed = req.value("seed", p.seed);
      seq = mp::procedural_walk(p);
    } else if (kind == "stand") {
      seq = mp::procedural_stand(req.value("frames", 200), req.value("fps", 60.0));
    } else {
      mp::fail(mp::ErrorCode::kUsage, "demo kind must be walk or stand");
    }
    const std::string out = req.at("output");
    mp::save_motion(seq, out);
    return json{{"motion", out}, {"frames", seq.size()}, {"fps", seq.fps}, {"kind", kind}};
  }
  mp::fail(mp::ErrorCode::kUsage, "unknown command '" + cmd + "'");
}

void fill_pose(const mp::PoseOutput& o, const mp::Pose& pose, const mp::Vec3& trans, mp_pose* out) {
  for (int j = 0; j < mp::kJointCount; ++j)
    for (int i = 0; i < 3; ++i) out->joints[3 * j + i] = o.joints_rel[static_cast<std::size_t>(j)][i];
  int k = 0;
  for (int j : mp::kPredictedJoints)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out->rots[k++] = pose.local_rot[static_cast<std::size_t>(j)](r, c);
  for (int i = 0; i < 3; ++i) {
    out->trans[i] = trans[i];
    out->v_e[i] = o.v_e[i];
    out->v_f[i] = o.v_f[i];
    out->v_fused[i] = o.v_fused[i];
  }
  out->contacts[0] = o.contacts[0];
  out->contacts[1] = o.contacts[1];
}

void finish_step(mp_estimator* est, const mp::PoseOutput& o, mp_pose* out) {
  if (est->config.refine) {
    const auto r = est->refiner.step(o);
    fill_pose(o, r.pose, r.translation, out);
  } else {
    fill_pose(o, o.full_pose, o.translation, out);
  }
}

mp::RawReadingMap reading_map(const mp_reading* readings, size_t count) {
  require(readings || count == 0, "readings is NULL");
  mp::RawReadingMap map;
  for (size_t i = 0; i < count; ++i) {
    const mp_reading& r = readings[i];
    require(r.location >= 0 && r.location < mp::kLocationCount, "reading location out of range");
    mp::RawReading raw;
    raw.accel = mp::Vec3(r.acc[0], r.acc[1], r.acc[2]);
    for (int k = 0; k < 9; ++k) raw.orient(k / 3, k % 3) = r.rot[k];
    map[static_cast<mp::BodyLocation>(r.location)] = raw;
  }
  return map;
}

}  // namespace

extern "C" {

const char* mp_version(void) { return "1.0.0"; }

const char* mp_status_name(mp_status status) {
  if (status == MP_OK) return "ok";
  if (status < MP_ERR_USAGE || status > MP_ERR_RUNTIME) return "unknown";
  return mp::error_code_name(static_cast<mp::ErrorCode>(status));
}

const char* mp_last_error(void) { return g_last_error.c_str(); }

void mp_string_free(char* s) { std::free(s); }

mp_status mp_default_config(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json is NULL");
    *out_json = dup_string(mp::RunConfig{}.to_json().dump(2));
  });
}

mp_status mp_config_resolve(const char* config_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json is NULL");
    *out_json = dup_string(mp::RunConfig::from_json(parse_json(config_json, "config")).to_json().dump(2));
  });
}

mp_status mp_rig_load(const char* path, mp_rig** out) {
  return guarded([&] {
    require(out, "out is NULL");
    auto rig = std::make_shared<const mp::Rig>(path && *path ? mp::load_rig(path) : mp::builtin_toy_rig());
    *out = new mp_rig{std::move(rig)};
  });
}

mp_status mp_rig_info(const mp_rig* rig, char** out_json) {
  return guarded([&] {
    require(rig && out_json, "NULL argument");
    *out_json = dup_string(mp::cmd_rig_info(*rig->rig).dump(2));
  });
}

void mp_rig_free(mp_rig* rig) { delete rig; }

mp_status mp_model_load(const char* path, mp_model** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    auto bundle = std::make_shared<mp::ModelBundle>(mp::load_bundle(path));
    mp::check_bundle_dims(*bundle);
    *out = new mp_model{std::move(bundle)};
  });
}

mp_status mp_model_create(const char* config_json, mp_model** out) {
  return guarded([&] {
    require(out, "out is NULL");
    const auto config = mp::RunConfig::from_json(parse_json(config_json, "config"));
    *out = new mp_model{std::make_shared<mp::ModelBundle>(mp::ModelBundle::create(config.model, config.seed))};
  });
}

mp_status mp_model_save(const mp_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "NULL argument");
    mp::save_bundle(*model->bundle, path);
  });
}

void mp_model_free(mp_model* model) { delete model; }

mp_status mp_estimator_create(const mp_model* model, const mp_rig* rig, const char* config_json, mp_estimator** out) {
  return guarded([&] {
    require(model && rig && out, "NULL argument");
    auto config = mp::RunConfig::from_json(parse_json(config_json, "config"));
    *out = new mp_estimator(model->bundle, rig->rig, std::move(config));
  });
}

mp_status mp_estimator_set_combo(mp_estimator* est, const char* combo_id) {
  return guarded([&] {
    require(est && combo_id, "NULL argument");
    const auto c = mp::find_combo(combo_id);
    if (!c) mp::fail(mp::ErrorCode::kUsage, std::string("unknown combo '") + combo_id + "'");
    est->estimator.set_combo(*c);
    est->refiner.reset();
  });
}

mp_status mp_estimator_calibrate(mp_estimator* est, const mp_reading* readings, size_t per_frame, size_t frames) {
  return guarded([&] {
    require(est, "NULL argument");
    std::vector<mp::RawReadingMap> maps;
    maps.reserve(frames);
    for (size_t f = 0; f < frames; ++f) maps.push_back(reading_map(readings + f * per_frame, per_frame));
    mp::CalibrationOptions opts;
    opts.fps = est->config.fps;
    est->estimator.set_calibration(mp::calibrate_tpose(maps, est->estimator.state().combo, *est->rig, opts));
    est->estimator.reset();
    est->refiner.reset();
  });
}

mp_status mp_estimator_step(mp_estimator* est, const mp_reading* readings, size_t count, mp_pose* out) {
  return guarded([&] {
    require(est && out, "NULL argument");
    finish_step(est, est->estimator.step(reading_map(readings, count)), out);
  });
}

mp_status mp_estimator_step_packed(mp_estimator* est, const double* input60, mp_pose* out) {
  return guarded([&] {
    require(est && input60 && out, "NULL argument");
    mp::InputFrame frame;
    std::copy(input60, input60 + mp::kInputDim, frame.begin());
    finish_step(est, est->estimator.step_input(frame), out);
  });
}

mp_status mp_estimator_reset(mp_estimator* est) {
  return guarded([&] {
    require(est, "NULL argument");
    est->estimator.reset();
    est->refiner.reset();
  });
}

void mp_estimator_free(mp_estimator* est) { delete est; }

mp_status mp_run(const char* command, const char* request_json, char** out_json) {
  return guarded([&] {
    require(command && out_json, "NULL argument");
    *out_json = nullptr;
    const json result = run_command(command, parse_json(request_json, "request"));
    *out_json = dup_string(result.dump(2));
  });
}

void mp_set_log(mp_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mu);
  g_log_fn = fn;
  g_log_user = user;
}

mp_status mp_server_start(const mp_model* model, const mp_rig* rig, const char* config_json, const char* host,
                          int port, mp_server** out) {
  return guarded([&] {
    require(model && rig && out, "NULL argument");
    require(port >= 0 && port <= 65535, "port out of range");
    auto config = mp::RunConfig::from_json(parse_json(config_json, "config"));
    auto server = std::make_unique<mp::StreamServer>(model->bundle, rig->rig, std::move(config),
                                                     host && *host ? host : "127.0.0.1", port);
    server->start();
    *out = new mp_server{std::move(server)};
  });
}

int mp_server_port(const mp_server* server) { return server ? server->server->port() : -1; }

mp_status mp_server_stop(mp_server* server) {
  return guarded([&] {
    require(server, "NULL argument");
    server->server->stop();
  });
}

void mp_server_free(mp_server* server) { delete server; }

}  // extern "C"
