#include "mobileposer/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "mobileposer/error.hpp"
#include "mobileposer/estimator.hpp"
#include "mobileposer/motion_gen.hpp"
#include "mobileposer/motion_import.hpp"
#include "mobileposer/nn/losses.hpp"
#include "mobileposer/refine.hpp"
#include "mobileposer/synthesis.hpp"

namespace mobileposer {

using nlohmann::json;

namespace {

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

std::vector<DeviceCombo> combos_or_all(std::span<const DeviceCombo> combos) {
  if (combos.empty()) return enumerate_combos();
  return {combos.begin(), combos.end()};
}

std::vector<MotionSequence> load_clips(std::span<const std::string> files) {
  if (files.empty()) fail(ErrorCode::kUsage, "no motion files given");
  std::vector<MotionSequence> clips;
  std::string errors;
  for (const auto& f : files) {
    try {
      clips.push_back(load_motion(f));
    } catch (const Error& e) {
      errors += "\n  " + f + ": " + e.what();
    }
  }
  if (!errors.empty()) fail(ErrorCode::kParse, "could not read motion files:" + errors);
  return clips;
}

nn::Seq velocity_seq(std::span<const Vec3> v) {
  nn::Seq s(3, static_cast<int>(v.size()), 1);
  for (std::size_t t = 0; t < v.size(); ++t) s.data.col(static_cast<Eigen::Index>(t)) = v[t];
  return s;
}

}  // namespace

Rig load_run_rig(const RunConfig& config) {
  return config.rig.empty() ? builtin_toy_rig() : load_rig(config.rig);
}

void check_bundle_dims(const ModelBundle& bundle) {
  for (int k = 0; k < kHeadCount; ++k) {
    if (!bundle.heads[k]) continue;
    const Head h = static_cast<Head>(k);
    const auto want = head_spec(h, bundle.spec);
    const auto& got = bundle.heads[k]->spec();
    if (got.input_dim != want.input_dim || got.output_dim != want.output_dim)
      fail(ErrorCode::kDimMismatch, std::string(head_name(h)) + " head maps " + std::to_string(got.input_dim) + " -> " +
                                        std::to_string(got.output_dim) + ", pipeline needs " +
                                        std::to_string(want.input_dim) + " -> " + std::to_string(want.output_dim));
  }
}

// ---- synth ------------------------------------------------------------------

json cmd_synth(std::span<const std::string> motion_files, const Rig& rig, const RunConfig& config,
               const std::string& out_path, std::span<const DeviceCombo> combos) {
  config.validate();
  const auto clips = load_clips(motion_files);
  const auto roster = combos_or_all(combos);

  Dataset ds;
  ds.window = config.window;
  ds.fps = config.fps;
  json clip_info = json::array();
  std::map<std::string, int> per_combo;
  for (const auto& c : roster) per_combo[c.id()] = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& clip = clips[i];
    if (std::abs(clip.fps - config.fps) > 1e-3)
      fail(ErrorCode::kUsage, motion_files[i] + ": clip is " + std::to_string(clip.fps) + " fps, config expects " +
                                  std::to_string(config.fps));
    const ClipChannels ch = synthesize_channels(rig, clip, config.contact_threshold);
    auto windows = make_windows(ch, roster, config.window, config.stride);
    for (const auto& w : windows) ++per_combo[w.combo.id()];
    clip_info.push_back({{"file", motion_files[i]}, {"frames", clip.size()}, {"windows", windows.size()}});
    for (auto& w : windows) ds.windows.push_back(std::move(w));
  }
  save_dataset(ds, out_path);

  json manifest{{"version", kDatasetFormatVersion},
                {"dataset", std::filesystem::path(out_path).filename().string()},
                {"window", config.window},
                {"stride", config.stride},
                {"fps", config.fps},
                {"windows", ds.windows.size()},
                {"combos", per_combo},
                {"clips", clip_info},
                {"contact_threshold", config.contact_threshold}};
  write_json(manifest, out_path + ".json");
  return manifest;
}

// ---- train ------------------------------------------------------------------

json cmd_train(const std::string& dataset_path, const Rig& rig, const RunConfig& config, const std::string& out_path,
               const TrainOptions& options) {
  config.validate();
  if (options.heads.empty()) fail(ErrorCode::kUsage, "no heads selected");
  const Dataset ds = load_dataset(dataset_path);
  if (ds.windows.empty()) fail(ErrorCode::kUsage, dataset_path + " has no windows");

  ModelBundle bundle;
  if (!options.resume.empty()) {
    bundle = load_bundle(options.resume);
    check_bundle_dims(bundle);
  } else {
    BundleSpec spec = config.model;
    for (Head h : options.heads)
      if (h == Head::kVelocityImu) spec.imu_only_velocity = true;
    bundle = ModelBundle::create(spec, config.seed);
  }
  for (Head h : options.heads) {
    const int k = static_cast<int>(h);
    if (bundle.heads[k]) continue;
    // a resumed bundle gains a head it never had
    bundle.spec.imu_only_velocity = bundle.spec.imu_only_velocity || h == Head::kVelocityImu;
    bundle.heads[k] = nn::SeqModel::initialized(head_spec(h, bundle.spec), config.seed * 1000003ull + k + 1);
  }

  TrainConfig tc = config.train_config();
  if (options.overfit) {
    if (tc.max_steps == 0) tc.max_steps = kOverfitSteps;
    tc.epochs = std::numeric_limits<int>::max();
  }
  bundle.record["config"] = config.to_json();
  const TrainResult result = train_heads(bundle, ds, options.heads, rig, tc, options.on_epoch);
  save_bundle(bundle, out_path);

  json epochs = json::array();
  for (const auto& e : result.epochs)
    epochs.push_back({{"head", head_name(e.head)}, {"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}});
  json heads = json::object();
  for (const auto& h : result.heads)
    heads[std::string(head_name(h.head))] = {
        {"initial_loss", h.initial_loss}, {"final_loss", h.final_loss}, {"steps", h.steps}};
  json record{{"checkpoint", out_path}, {"dataset", dataset_path}, {"heads", heads},
              {"epochs", epochs},       {"config", config.to_json()}};
  write_json(record, out_path + ".json");
  return record;
}

// ---- eval -------------------------------------------------------------------

EvalReport merge_reports(std::span<const EvalReport> reports) {
  EvalReport out;
  double total = 0.0;
  double vertex_frames = 0.0;
  std::map<double, std::pair<double, double>> curve;  // seconds -> (weighted sum, weight)
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.frames);
    total += w;
    out.mpjre += w * r.mpjre;
    out.mpjpe += w * r.mpjpe;
    out.jitter += w * r.jitter;
    out.root_translation_error += w * r.root_translation_error;
    if (r.mpjve) {
      out.mpjve = out.mpjve.value_or(0.0) + w * *r.mpjve;
      vertex_frames += w;
    }
    for (const auto& [s, cm] : r.cumulative_error_curve) {
      curve[s].first += w * cm;
      curve[s].second += w;
    }
    out.frames += r.frames;
  }
  if (total > 0) {
    out.mpjre /= total;
    out.mpjpe /= total;
    out.jitter /= total;
    out.root_translation_error /= total;
  }
  if (out.mpjve && vertex_frames > 0) *out.mpjve /= vertex_frames;
  for (const auto& [s, acc] : curve) out.cumulative_error_curve.emplace_back(s, acc.first / acc.second);
  return out;
}

json cmd_eval(const ModelBundle* bundle, std::span<const std::string> motion_files, const Rig& rig,
              const RunConfig& config, const EvalOptions& options) {
  const auto clips = load_clips(motion_files);
  return cmd_eval_sequences(bundle, clips, rig, config, options);
}

json cmd_eval_sequences(const ModelBundle* bundle, std::span<const MotionSequence> clips, const Rig& rig,
                        const RunConfig& config, const EvalOptions& options) {
  config.validate();
  if (clips.empty()) fail(ErrorCode::kUsage, "no clips to evaluate");
  const bool oracle = options.ground_truth_as_prediction;
  if (!oracle) {
    if (!bundle) fail(ErrorCode::kUsage, "a checkpoint is required");
    check_bundle_dims(*bundle);
  }
  if (options.ablate_translation && (oracle || !bundle->has(Head::kVelocityImu)))
    fail(ErrorCode::kChannelMissing, "translation ablation needs a checkpoint with a velocity_imu head");
  const auto roster = combos_or_all(options.combos);

  std::map<std::string, std::vector<EvalReport>> by_combo;
  std::vector<EvalReport> all;
  struct AblationAcc {
    double loss = 0.0;
    double drift = 0.0;
    double frames = 0.0;
  } pose_cond, imu_only;

  for (const auto& clip : clips) {
    const ClipChannels ch = synthesize_channels(rig, clip, config.contact_threshold);
    for (const auto& combo : roster) {
      std::vector<Pose> pred;
      if (oracle) {
        pred = clip.frames;
      } else {
        const auto outputs = offline_inference(*bundle, rig, ch.inputs, combo, config.estimator_config());
        pred.reserve(outputs.size());
        if (config.refine) {
          Refiner refiner(rig, config.refiner, clip.fps);
          for (const auto& o : outputs) pred.push_back(refiner.step(o).pose);
        } else {
          for (const auto& o : outputs) pred.push_back(o.full_pose);
        }

        if (options.ablate_translation) {
          std::vector<InputFrame> masked(ch.inputs.size());
          for (std::size_t t = 0; t < masked.size(); ++t) masked[t] = mask_input(ch.inputs[t], combo);
          std::vector<std::array<double, kJointDim>> joints(outputs.size());
          for (std::size_t t = 0; t < outputs.size(); ++t) joints[t] = flatten_joints(outputs[t].joints_rel);
          const nn::Seq gt = velocity_seq(ch.root_velocity);
          const std::vector<int> horizons = [&] {
            std::vector<int> h;
            for (int x : config.train.horizons)
              if (x <= static_cast<int>(clip.size())) h.push_back(x);
            return h;
          }();
          for (auto [head, acc] : {std::pair{Head::kVelocity, &pose_cond}, std::pair{Head::kVelocityImu, &imu_only}}) {
            const auto v = replay_velocity_head(*bundle, head, masked, joints);
            const double w = static_cast<double>(clip.size());
            acc->loss += w * nn::loss_velocity_cumulative(velocity_seq(v), gt, horizons).value;
            // heading-frame velocities placed in the world with the true heading
            std::vector<Vec3> pv(v.size()), gv(v.size());
            for (std::size_t t = 0; t < v.size(); ++t) {
              pv[t] = from_heading_frame(clip.frames[t].local_rot[0], v[t]);
              gv[t] = from_heading_frame(clip.frames[t].local_rot[0], ch.root_velocity[t]);
            }
            acc->drift += w * root_translation_error(pv, gv, clip.fps).mean_cm;
            acc->frames += w;
          }
        }
      }
      EvalReport r = evaluate_clip(pred, clip.frames, rig, clip.fps);
      by_combo[combo.id()].push_back(r);
      all.push_back(r);
    }
  }

  json combos = json::object();
  const EvalReport overall = merge_reports(all);
  std::string text = "== overall (" + std::to_string(clips.size()) + " clips, " + std::to_string(roster.size()) +
                     " combos)\n" + overall.to_text();
  for (const auto& [id, reports] : by_combo) {
    const EvalReport merged = merge_reports(reports);
    combos[id] = merged.to_json();
    if (by_combo.size() > 1) text += "== " + id + "\n" + merged.to_text();
  }
  json out{{"overall", overall.to_json()},
           {"combos", combos},
           {"clips", clips.size()},
           {"refined", config.refine && !oracle},
           {"mode", oracle ? "ground_truth" : "checkpoint"},
           {"text", text}};
  if (options.ablate_translation) {
    auto entry = [](const AblationAcc& a) {
      return json{{"velocity_loss", a.loss / a.frames}, {"root_translation_error_cm", a.drift / a.frames}};
    };
    const double base = imu_only.loss / imu_only.frames;
    const double ours = pose_cond.loss / pose_cond.frames;
    out["ablation"] = {{"pose_conditioned", entry(pose_cond)},
                       {"imu_only", entry(imu_only)},
                       {"velocity_loss_change", base > 0 ? (ours - base) / base : 0.0}};
  }
  return out;
}

// ---- bench ------------------------------------------------------------------

json cmd_bench(const ModelBundle& bundle, const Rig& rig, const RunConfig& config, const BenchOptions& options) {
  config.validate();
  check_bundle_dims(bundle);
  if (options.frames < 1 || options.warmup < 0) fail(ErrorCode::kUsage, "bench needs a positive frame count");

  WalkParams wp;
  wp.frames = 600;
  wp.fps = config.fps;
  wp.turn_rate = 0.3;
  const MotionSequence clip = procedural_walk(wp);
  const ClipChannels ch = synthesize_channels(rig, clip, config.contact_threshold);
  const DeviceCombo combo = config.device_combo();
  std::vector<RawReadingMap> raw(ch.inputs.size());
  for (std::size_t t = 0; t < raw.size(); ++t) {
    for (BodyLocation loc : combo.locations()) {
      const double* slot = ch.inputs[t].data() + slot_offset(loc);
      Reading r;
      r.accel = Vec3(slot[0], slot[1], slot[2]) * kAccelScale;
      for (int i = 0; i < 9; ++i) r.orient(i / 3, i % 3) = slot[3 + i];
      raw[t][loc] = raw_from_model(r);
    }
  }

  Estimator est(bundle, rig, combo, config.estimator_config());
  Refiner refiner(rig, config.refiner, config.fps);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(options.frames));
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < options.warmup + options.frames; ++i) {
    const auto& frame = raw[static_cast<std::size_t>(i) % raw.size()];
    const auto t0 = clock::now();
    const PoseOutput out = est.step(frame);
    if (config.refine) refiner.step(out);
    const auto t1 = clock::now();
    if (i >= options.warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }

  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()))) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  double mean = 0.0;
  for (double x : ms) mean += x;
  mean /= static_cast<double>(ms.size());
  const double budget = 1000.0 / 60.0;
  return json{{"frames", ms.size()},
              {"mean_ms", mean},
              {"p50_ms", pct(0.50)},
              {"p99_ms", pct(0.99)},
              {"max_ms", sorted.back()},
              {"budget_ms", budget},
              {"within_budget", pct(0.99) < budget},
              {"throughput_fps", 1000.0 / mean},
              {"headroom", budget / pct(0.99)},
              {"hidden", bundle.spec.hidden_dim},
              {"layers", bundle.spec.layers},
              {"window", config.window},
              {"combo", combo.id()},
              {"refine", config.refine}};
}

// ---- rig-info / import --------------------------------------------------------

json cmd_rig_info(const Rig& rig) {
  validate_rig(rig);
  json joints = json::array();
  for (int j = 0; j < kJointCount; ++j)
    joints.push_back({{"index", j},
                      {"name", joint_names()[j]},
                      {"parent", rig.parent[j]},
                      {"bone_length", rig.rest_offset[j].norm()}});
  json sites = json::object();
  for (BodyLocation loc : kAllLocations) {
    const auto& s = rig.site(loc);
    sites[std::string(location_id(loc))] = {{"joint", s.joint}, {"offset", {s.offset.x(), s.offset.y(), s.offset.z()}}};
  }
  const JointPositions rest = rest_joint_positions(rig);
  double lo = rest[0].y(), hi = rest[0].y();
  for (const auto& p : rest) {
    lo = std::min(lo, p.y());
    hi = std::max(hi, p.y());
  }
  json combos = json::array();
  for (const auto& c : enumerate_combos()) combos.push_back(c.id());
  return json{{"joints", joints},
              {"vertices", rig.vertices.size()},
              {"sites", sites},
              {"rest_height", hi - lo},
              {"combos", combos}};
}

json cmd_import(std::span<const std::string> manifests, const std::string& out_dir) {
  if (manifests.empty()) fail(ErrorCode::kUsage, "no manifests given");
  std::filesystem::create_directories(out_dir);
  json written = json::array();
  for (const auto& m : manifests) {
    const MotionSequence seq = import_motion_file(m);
    const auto out = (std::filesystem::path(out_dir) / std::filesystem::path(m).stem()).string() + ".mpsq";
    save_motion(seq, out);
    written.push_back({{"manifest", m}, {"motion", out}, {"frames", seq.size()}, {"fps", seq.fps}});
  }
  return json{{"imported", written}};
}

}  // namespace mobileposer
