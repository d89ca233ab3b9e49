#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mobileposer/config.hpp"
#include "mobileposer/estimator.hpp"
#include "mobileposer/refine.hpp"

namespace mobileposer {

// Line protocol, one JSON object per line.
//
// Inbound:
//   {"type":"imu","t":<us>,"loc":"lwrist","acc":[3],"rot":[9]}
//   {"type":"combo","active":["rpocket","lwrist"]}
//   {"type":"calib_begin"}  {"type":"calib_end"}
// Outbound:
//   {"type":"pose","t":..,"joints":[72],"rots":[162],"trans":[3],"contacts":[2]}
//   {"type":"calibrated","frames":n}
//   {"type":"err","code":"...","msg":"..."}
//
// Records sharing a timestamp form one frame. A frame is processed as soon as
// every active location has reported for it, or when a later timestamp
// arrives; locations that skipped the frame reuse their last reading
// (zero-order hold), so lower-rate devices need no client-side upsampling.

class StreamSession {
 public:
  StreamSession(const ModelBundle& bundle, const Rig& rig, const RunConfig& config);

  struct Reply {
    std::vector<std::string> lines;
    bool close = false;  // set on protocol violations
  };

  Reply handle(std::string_view line);
  /// Processes a frame still waiting for devices (end of input).
  Reply flush();

  bool calibrated() const { return state_ == State::kReady; }
  const DeviceCombo& combo() const { return combo_; }
  std::int64_t poses_emitted() const { return poses_; }

 private:
  enum class State { kUncalibrated, kCalibrating, kReady };

  void on_imu(const nlohmann::json& rec, Reply& reply);
  void on_combo(const nlohmann::json& rec, Reply& reply);
  void on_calib_end(Reply& reply);
  void complete_frame(Reply& reply);
  void emit_pose(std::int64_t t, const RawReadingMap& frame, Reply& reply);

  const ModelBundle* bundle_;
  const Rig* rig_;
  RunConfig config_;
  DeviceCombo combo_;
  Estimator estimator_;
  Refiner refiner_;
  State state_ = State::kUncalibrated;
  std::uint8_t calibrated_mask_ = 0;

  std::optional<std::int64_t> last_t_;
  std::optional<std::int64_t> pending_t_;
  std::optional<std::int64_t> emitted_t_;
  RawReadingMap pending_;
  RawReadingMap held_;
  std::vector<RawReadingMap> calib_frames_;
  std::int64_t poses_ = 0;
};

std::string error_record(std::string_view code, std::string_view msg);

/// TCP front end: one acceptor thread and one worker per connection, each
/// owning its StreamSession. The bundle and rig are shared read-only.
class StreamServer {
 public:
  StreamServer(std::shared_ptr<const ModelBundle> bundle, std::shared_ptr<const Rig> rig, RunConfig config,
               std::string host = "127.0.0.1", int port = 0);
  ~StreamServer();
  StreamServer(const StreamServer&) = delete;
  StreamServer& operator=(const StreamServer&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port; see port().
  void start();
  int port() const { return port_; }
  /// Closes the listener and every connection, then joins all threads.
  void stop();
  std::size_t connections() const;

 private:
  struct Connection {
    int fd = -1;
    std::thread worker;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Connection& conn);
  void reap(bool all);

  std::shared_ptr<const ModelBundle> bundle_;
  std::shared_ptr<const Rig> rig_;
  RunConfig config_;
  std::string host_;
  int port_;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::list<Connection> conns_;
};

}  // namespace mobileposer
