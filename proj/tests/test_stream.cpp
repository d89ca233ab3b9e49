#include <gtest/gtest.h>

#include "mobileposer/motion_gen.hpp"
#include "mobileposer/stream.hpp"
#include "stream_util.hpp"

using namespace mobileposer;
using nlohmann::json;

namespace {

struct Fixture {
  Rig rig = builtin_toy_rig();
  ModelBundle bundle = ModelBundle::create(BundleSpec{8, 1, false}, 5);
  RunConfig config;
  DeviceCombo combo;

  Fixture() {
    config.combo = "rpocket+lwrist+head";
    combo = config.device_combo();
  }
};

std::vector<std::string> feed(StreamSession& s, const std::vector<std::string>& lines, bool* closed = nullptr) {
  std::vector<std::string> out;
  for (const auto& l : lines) {
    const auto r = s.handle(l);
    out.insert(out.end(), r.lines.begin(), r.lines.end());
    if (r.close) {
      if (closed) *closed = true;
      return out;
    }
  }
  return out;
}

std::vector<json> of_type(const std::vector<std::string>& lines, const std::string& type) {
  std::vector<json> out;
  for (const auto& l : lines) {
    const json j = json::parse(l);
    if (j["type"] == type) out.push_back(j);
  }
  return out;
}

ClipChannels walk_channels(const Rig& rig, int frames) {
  WalkParams wp;
  wp.frames = frames;
  wp.turn_rate = 0.4;
  return synthesize_channels(rig, procedural_walk(wp));
}

}  // namespace

TEST(StreamSession, ImuBeforeCalibrationIsReportedNotFatal) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  RawReading r;
  const auto reply = s.handle(mptest::imu_record(0, BodyLocation::kHead, r));
  EXPECT_FALSE(reply.close);
  ASSERT_EQ(reply.lines.size(), 1u);
  const json e = json::parse(reply.lines[0]);
  EXPECT_EQ(e["type"], "err");
  EXPECT_EQ(e["code"], "uncalibrated");
  EXPECT_FALSE(s.calibrated());
}

TEST(StreamSession, ProtocolViolationsClose) {
  Fixture f;
  for (const std::string bad : {"not json", R"({"no_type":1})", R"({"type":"dance"})", R"({"type":"calib_end"})",
                                R"({"type":"combo","active":["rpocket","lpocket","head"]})",
                                R"({"type":"imu","t":1.5,"loc":"head","acc":[0,0,0],"rot":[1,0,0,0,1,0,0,0,1]})",
                                R"({"type":"imu","t":1,"loc":"knee","acc":[0,0,0],"rot":[1,0,0,0,1,0,0,0,1]})",
                                R"({"type":"imu","t":1,"loc":"head","acc":[0,0],"rot":[1,0,0,0,1,0,0,0,1]})"}) {
    StreamSession s(f.bundle, f.rig, f.config);
    const auto reply = s.handle(bad);
    EXPECT_TRUE(reply.close) << bad;
    ASSERT_EQ(reply.lines.size(), 1u) << bad;
    EXPECT_EQ(json::parse(reply.lines[0])["code"], "protocol") << bad;
  }
}

TEST(StreamSession, CalibrateThenStream) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  const auto ack = of_type(feed(s, mptest::tpose_lines(f.combo, 60)), "calibrated");
  ASSERT_EQ(ack.size(), 1u);
  EXPECT_EQ(ack[0]["frames"], 60);
  EXPECT_TRUE(s.calibrated());

  const ClipChannels ch = walk_channels(f.rig, 10);
  const auto poses = of_type(feed(s, mptest::clip_lines(mptest::raw_clip(ch, f.combo), 60)), "pose");
  ASSERT_EQ(poses.size(), 10u);
  EXPECT_EQ(poses[3]["t"], mptest::frame_us(63));
  EXPECT_EQ(poses[0]["joints"].size(), 72u);
  EXPECT_EQ(poses[0]["rots"].size(), 162u);
  EXPECT_EQ(poses[0]["trans"].size(), 3u);
  EXPECT_EQ(poses[0]["contacts"].size(), 2u);
}

TEST(StreamSession, ShortCalibrationReportsTooShort) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  bool closed = false;
  const auto lines = feed(s, mptest::tpose_lines(f.combo, 20), &closed);
  EXPECT_FALSE(closed);
  const auto errs = of_type(lines, "err");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0]["code"], "too_short");
  EXPECT_FALSE(s.calibrated());
}

TEST(StreamSession, LowRateDeviceIsHeld) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  feed(s, mptest::tpose_lines(f.combo, 60));
  const ClipChannels ch = walk_channels(f.rig, 6);
  const auto raw = mptest::raw_clip(ch, f.combo);
  std::vector<std::string> lines;
  for (std::size_t t = 0; t < raw.size(); ++t)
    for (const auto& [loc, r] : raw[t])
      if (loc != BodyLocation::kHead || t % 2 == 0) lines.push_back(mptest::imu_record(mptest::frame_us(60 + t), loc, r));
  auto out = feed(s, lines);
  const auto flushed = s.flush();
  out.insert(out.end(), flushed.lines.begin(), flushed.lines.end());
  EXPECT_EQ(of_type(out, "pose").size(), 6u);
  EXPECT_TRUE(of_type(out, "err").empty());
}

TEST(StreamSession, TimestampRegressionCloses) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  feed(s, mptest::tpose_lines(f.combo, 60));
  RawReading r;
  r.accel = gravity_reaction();
  EXPECT_FALSE(s.handle(mptest::imu_record(2000000, BodyLocation::kHead, r)).close);
  EXPECT_TRUE(s.handle(mptest::imu_record(1999999, BodyLocation::kHead, r)).close);
}

TEST(StreamSession, ComboOutsideCalibrationNeedsRecalibration) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  feed(s, mptest::tpose_lines(f.combo, 60));
  EXPECT_FALSE(s.handle(R"({"type":"combo","active":["lwrist","head"]})").close);
  EXPECT_TRUE(s.calibrated());
  EXPECT_EQ(s.combo().id(), "lwrist+head");
  EXPECT_FALSE(s.handle(R"({"type":"combo","active":["rwrist"]})").close);
  EXPECT_FALSE(s.calibrated());
}

TEST(StreamSession, MatchesOfflinePipeline) {
  Fixture f;
  StreamSession s(f.bundle, f.rig, f.config);
  feed(s, mptest::tpose_lines(f.combo, 60));
  const ClipChannels ch = walk_channels(f.rig, 90);
  const auto poses = of_type(feed(s, mptest::clip_lines(mptest::raw_clip(ch, f.combo), 60)), "pose");
  const auto want = mptest::offline_pose_records(f.bundle, f.rig, ch, f.combo, f.config.estimator_config(),
                                                 f.config.refiner, f.config.fps);
  ASSERT_EQ(poses.size(), want.size());
  double worst = 0.0;
  for (std::size_t t = 0; t < poses.size(); ++t) worst = std::max(worst, mptest::record_diff(poses[t], want[t]));
  EXPECT_LT(worst, 1e-6);
}

TEST(StreamServer, ConcurrentClientsAreIndependent) {
  Fixture f;
  auto bundle = std::make_shared<const ModelBundle>(f.bundle);
  auto rig = std::make_shared<const Rig>(f.rig);
  StreamServer server(bundle, rig, f.config, "127.0.0.1", 0);
  server.start();
  ASSERT_GT(server.port(), 0);

  const ClipChannels ch = walk_channels(f.rig, 40);
  auto calibrated = mptest::tpose_lines(f.combo, 60);
  const auto clip = mptest::clip_lines(mptest::raw_clip(ch, f.combo), 60);
  calibrated.insert(calibrated.end(), clip.begin(), clip.end());

  mptest::LineClient a(server.port());
  mptest::LineClient b(server.port());
  ASSERT_TRUE(a.connected());
  ASSERT_TRUE(b.connected());
  // b never calibrates: its data is refused without affecting a
  std::vector<std::string> b_out;
  std::thread tb([&] { b_out = b.exchange(clip); });
  const auto a_out = a.exchange(calibrated);
  tb.join();

  const auto want = mptest::offline_pose_records(f.bundle, f.rig, ch, f.combo, f.config.estimator_config(),
                                                 f.config.refiner, f.config.fps);
  const auto a_poses = of_type(a_out, "pose");
  ASSERT_EQ(a_poses.size(), want.size());
  for (std::size_t t = 0; t < want.size(); ++t) EXPECT_LT(mptest::record_diff(a_poses[t], want[t]), 1e-6);
  EXPECT_TRUE(of_type(b_out, "pose").empty());
  EXPECT_EQ(of_type(b_out, "err").size(), clip.size());
  server.stop();
  EXPECT_EQ(server.connections(), 0u);
}

TEST(StreamServer, ProtocolErrorDropsConnection) {
  Fixture f;
  StreamServer server(std::make_shared<const ModelBundle>(f.bundle), std::make_shared<const Rig>(f.rig), f.config);
  server.start();
  mptest::LineClient c(server.port());
  c.send_lines({"garbage"});
  const auto out = c.read_all();  // returns once the server closes
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(json::parse(out[0])["code"], "protocol");
  server.stop();
}
