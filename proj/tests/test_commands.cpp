#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "mobileposer/commands.hpp"
#include "mobileposer/error.hpp"
#include "mobileposer/motion_gen.hpp"
#include "mobileposer/motion_import.hpp"
#include "mobileposer/synthesis.hpp"

using namespace mobileposer;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mp_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    WalkParams wp;
    wp.frames = 120;
    clip_ = procedural_walk(wp);
    clip_path_ = path("walk.mpsq");
    save_motion(clip_, clip_path_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  RunConfig small_config() const {
    RunConfig c;
    c.stride = 60;
    c.model.hidden_dim = 8;
    c.train.batch = 8;
    c.train.max_steps = 3;
    c.train.epochs = 1;
    return c;
  }

  fs::path dir_;
  MotionSequence clip_;
  std::string clip_path_;
  Rig rig_ = builtin_toy_rig();
};

int code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return 0;
}

}  // namespace

TEST_F(Commands, SynthWindowsEveryCombo) {
  const std::vector<std::string> files{clip_path_};
  const json m = cmd_synth(files, rig_, small_config(), path("ds.bin"));
  // (120 - 60) / 60 + 1 = 2 windows per combo
  EXPECT_EQ(m["windows"], 48);
  EXPECT_EQ(m["combos"].size(), 24u);
  for (const auto& [id, n] : m["combos"].items()) EXPECT_EQ(n, 2) << id;
  EXPECT_TRUE(fs::exists(path("ds.bin.json")));
  const Dataset ds = load_dataset(path("ds.bin"));
  EXPECT_EQ(ds.windows.size(), 48u);
  EXPECT_EQ(ds.window, 60);
}

TEST_F(Commands, SynthIsByteDeterministic) {
  const std::vector<std::string> files{clip_path_};
  cmd_synth(files, rig_, small_config(), path("a.bin"));
  cmd_synth(files, rig_, small_config(), path("b.bin"));
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
}

TEST_F(Commands, SynthSubsetAndErrors) {
  const std::vector<std::string> files{clip_path_};
  const std::vector<DeviceCombo> one{*find_combo("lwrist")};
  EXPECT_EQ(cmd_synth(files, rig_, small_config(), path("one.bin"), one)["windows"], 2);
  EXPECT_EQ(code_of([&] { cmd_synth({}, rig_, small_config(), path("x.bin")); }),
            static_cast<int>(ErrorCode::kUsage));
  const std::vector<std::string> missing{path("nope.mpsq"), path("nada.mpsq")};
  EXPECT_NE(code_of([&] { cmd_synth(missing, rig_, small_config(), path("x.bin")); }), 0);
  EXPECT_FALSE(fs::exists(path("x.bin")));
  RunConfig slow = small_config();
  slow.fps = 30;
  EXPECT_EQ(code_of([&] { cmd_synth(files, rig_, slow, path("x.bin")); }), static_cast<int>(ErrorCode::kUsage));
}

TEST_F(Commands, TrainWritesCheckpointAndResumes) {
  const std::vector<std::string> files{clip_path_};
  const RunConfig cfg = small_config();
  cmd_synth(files, rig_, cfg, path("ds.bin"));
  TrainOptions opt;
  int epochs_seen = 0;
  opt.on_epoch = [&](const EpochRecord&) { ++epochs_seen; };
  const json rec = cmd_train(path("ds.bin"), rig_, cfg, path("m.ckpt"), opt);
  EXPECT_EQ(rec["heads"].size(), 4u);
  for (const auto& [name, h] : rec["heads"].items()) EXPECT_EQ(h["steps"], 3) << name;
  EXPECT_EQ(epochs_seen, 4);
  EXPECT_TRUE(fs::exists(path("m.ckpt.json")));

  TrainOptions more;
  more.resume = path("m.ckpt");
  more.heads = {Head::kContact};
  const json rec2 = cmd_train(path("ds.bin"), rig_, cfg, path("m2.ckpt"), more);
  EXPECT_EQ(rec2["heads"]["contact"]["steps"], 6);
  const ModelBundle b = load_bundle(path("m2.ckpt"));
  EXPECT_TRUE(b.has(Head::kJoint));
  EXPECT_EQ(b.optimizer[static_cast<int>(Head::kJoint)]->steps, 3);
}

TEST_F(Commands, JerkWeightChangesRotationHead) {
  const std::vector<std::string> files{clip_path_};
  RunConfig cfg = small_config();
  cmd_synth(files, rig_, cfg, path("ds.bin"));
  TrainOptions opt;
  opt.heads = {Head::kTheta};
  cfg.train.lambda_jerk = 0.0;
  cmd_train(path("ds.bin"), rig_, cfg, path("a.ckpt"), opt);
  cfg.train.lambda_jerk = 1e-5;
  cmd_train(path("ds.bin"), rig_, cfg, path("b.ckpt"), opt);
  const ModelBundle a = load_bundle(path("a.ckpt"));
  const ModelBundle b = load_bundle(path("b.ckpt"));
  std::vector<nn::Mat> ta, tb;
  a.head(Head::kTheta).params().for_each([&](const std::string&, const nn::Mat& m) { ta.push_back(m); });
  b.head(Head::kTheta).params().for_each([&](const std::string&, const nn::Mat& m) { tb.push_back(m); });
  ASSERT_EQ(ta.size(), tb.size());
  double diff = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) diff += (ta[i] - tb[i]).cwiseAbs().sum();
  EXPECT_GT(diff, 0.0);
}

TEST_F(Commands, EvalGroundTruthIsZeroError) {
  EvalOptions opt;
  opt.ground_truth_as_prediction = true;
  const std::vector<MotionSequence> clips{clip_};
  const json r = cmd_eval_sequences(nullptr, clips, rig_, small_config(), opt);
  EXPECT_EQ(r["mode"], "ground_truth");
  EXPECT_EQ(r["combos"].size(), 24u);
  for (const char* k : {"mpjre_deg", "mpjpe_cm", "mpjve_cm", "root_translation_error_cm"})
    EXPECT_EQ(r["overall"][k], 0.0) << k;
  // jitter is a property of the motion itself, not an error
  EXPECT_GT(r["overall"]["jitter_m_s3"].get<double>(), 0.0);
  for (const auto& p : r["overall"]["cumulative_error_curve"]) EXPECT_EQ(p["error_cm"], 0.0);
}

TEST_F(Commands, EvalCheckpointPerCombo) {
  const ModelBundle b = ModelBundle::create(BundleSpec{8, 1, true}, 3);
  EvalOptions opt;
  opt.combos = {*find_combo("head"), *find_combo("rpocket+lwrist+head")};
  opt.ablate_translation = true;
  const std::vector<MotionSequence> clips{clip_};
  const json r = cmd_eval_sequences(&b, clips, rig_, small_config(), opt);
  EXPECT_EQ(r["combos"].size(), 2u);
  EXPECT_TRUE(r["combos"].contains("head"));
  EXPECT_TRUE(r["refined"].get<bool>());
  EXPECT_EQ(r["overall"]["frames"], 240);
  EXPECT_TRUE(r["ablation"].contains("velocity_loss_change"));
  EXPECT_EQ(code_of([&] { cmd_eval_sequences(nullptr, clips, rig_, small_config(), {}); }),
            static_cast<int>(ErrorCode::kUsage));
}

TEST_F(Commands, DimMismatchDetected) {
  ModelBundle b = ModelBundle::create(BundleSpec{8, 1, false}, 1);
  EXPECT_NO_THROW(check_bundle_dims(b));
  nn::SeqModelSpec wrong = head_spec(Head::kJoint, b.spec);
  wrong.input_dim += 3;
  b.heads[static_cast<int>(Head::kJoint)] = nn::SeqModel::initialized(wrong, 1);
  EXPECT_EQ(code_of([&] { check_bundle_dims(b); }), static_cast<int>(ErrorCode::kDimMismatch));
}

TEST_F(Commands, BenchReportsTiming) {
  const ModelBundle zero = ModelBundle::create(BundleSpec{8, 0, false}, 1);
  const json r = cmd_bench(zero, rig_, small_config(), BenchOptions{200, 10});
  for (const char* k : {"frames", "mean_ms", "p50_ms", "p99_ms", "max_ms", "budget_ms", "within_budget",
                        "throughput_fps", "headroom", "hidden", "layers", "window", "combo", "refine"})
    EXPECT_TRUE(r.contains(k)) << k;
  EXPECT_EQ(r["frames"], 200);
  EXPECT_NEAR(r["budget_ms"].get<double>(), 1000.0 / 60.0, 1e-9);
  EXPECT_LT(r["mean_ms"].get<double>(), 1.0);
  EXPECT_LE(r["p50_ms"].get<double>(), r["p99_ms"].get<double>());
  EXPECT_LE(r["p99_ms"].get<double>(), r["max_ms"].get<double>());
}

TEST_F(Commands, RigInfo) {
  const json r = cmd_rig_info(rig_);
  EXPECT_EQ(r["joints"].size(), 24u);
  EXPECT_EQ(r["joints"][0]["parent"], -1);
  EXPECT_EQ(r["joints"][15]["parent"], 12);
  EXPECT_EQ(r["sites"]["lwrist"]["joint"], 20);
  EXPECT_EQ(r["vertices"], 78);
  EXPECT_EQ(r["combos"].size(), 24u);
  EXPECT_GT(r["rest_height"].get<double>(), 1.0);
}

TEST_F(Commands, ImportWritesMotion) {
  const std::string manifest = path("clip.json");
  std::ofstream(manifest) << export_motion(clip_).dump();
  const std::vector<std::string> files{manifest};
  const json r = cmd_import(files, path("out"));
  ASSERT_EQ(r["imported"].size(), 1u);
  const MotionSequence back = load_motion(r["imported"][0]["motion"]);
  ASSERT_EQ(back.size(), clip_.size());
  // motion files hold float32
  EXPECT_LT((back.frames[77].local_rot[4] - clip_.frames[77].local_rot[4]).cwiseAbs().maxCoeff(), 1e-6);
  std::ofstream(manifest) << R"({"version": 1})";
  EXPECT_EQ(code_of([&] { cmd_import(files, path("out")); }), static_cast<int>(ErrorCode::kManifestInvalid));
}
