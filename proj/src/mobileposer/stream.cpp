#include "mobileposer/stream.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "mobileposer/error.hpp"

namespace mobileposer {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxLine = 1 << 20;

struct ProtocolError {
  std::string msg;
};

std::array<double, 3> vec3_field(const json& rec, const char* key) {
  if (!rec.contains(key) || !rec[key].is_array() || rec[key].size() != 3)
    throw ProtocolError{std::string("imu record needs '") + key + "' with 3 numbers"};
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    if (!rec[key][i].is_number()) throw ProtocolError{std::string("'") + key + "' holds a non-number"};
    out[i] = rec[key][i].get<double>();
  }
  return out;
}

RotMat rot_field(const json& rec) {
  if (!rec.contains("rot") || !rec["rot"].is_array() || rec["rot"].size() != 9)
    throw ProtocolError{"imu record needs 'rot' with 9 numbers"};
  RotMat r;
  for (int i = 0; i < 9; ++i) {
    if (!rec["rot"][i].is_number()) throw ProtocolError{"'rot' holds a non-number"};
    r(i / 3, i % 3) = rec["rot"][i].get<double>();
  }
  return r;
}

}  // namespace

std::string error_record(std::string_view code, std::string_view msg) {
  return json{{"type", "err"}, {"code", code}, {"msg", msg}}.dump();
}

// ---- session ----------------------------------------------------------------

StreamSession::StreamSession(const ModelBundle& bundle, const Rig& rig, const RunConfig& config)
    : bundle_(&bundle),
      rig_(&rig),
      config_(config),
      combo_(config.device_combo()),
      estimator_(bundle, rig, combo_, config.estimator_config()),
      refiner_(rig, config.refiner, config.fps) {}

StreamSession::Reply StreamSession::handle(std::string_view line) {
  Reply reply;
  try {
    if (line.size() > kMaxLine) throw ProtocolError{"record too long"};
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) throw ProtocolError{"record is not a JSON object"};
    if (!rec.contains("type") || !rec["type"].is_string()) throw ProtocolError{"record has no 'type'"};
    const std::string type = rec["type"];
    if (type == "imu") {
      on_imu(rec, reply);
    } else if (type == "combo") {
      on_combo(rec, reply);
    } else if (type == "calib_begin") {
      if (state_ == State::kCalibrating) throw ProtocolError{"calib_begin while already calibrating"};
      state_ = State::kCalibrating;
      calib_frames_.clear();
      pending_.clear();
      pending_t_.reset();
      held_.clear();
    } else if (type == "calib_end") {
      if (state_ != State::kCalibrating) throw ProtocolError{"calib_end without calib_begin"};
      on_calib_end(reply);
    } else {
      throw ProtocolError{"unknown record type '" + type + "'"};
    }
  } catch (const ProtocolError& e) {
    reply.lines.push_back(error_record(error_code_name(ErrorCode::kProtocol), e.msg));
    reply.close = true;
  }
  return reply;
}

StreamSession::Reply StreamSession::flush() {
  Reply reply;
  if (pending_t_) complete_frame(reply);
  return reply;
}

void StreamSession::on_imu(const json& rec, Reply& reply) {
  if (!rec.contains("t") || !rec["t"].is_number_integer()) throw ProtocolError{"imu record needs an integer 't'"};
  if (!rec.contains("loc") || !rec["loc"].is_string()) throw ProtocolError{"imu record needs 'loc'"};
  const auto loc = parse_location(rec["loc"].get<std::string>());
  if (!loc) throw ProtocolError{"unknown location '" + rec["loc"].get<std::string>() + "'"};
  const auto acc = vec3_field(rec, "acc");
  const RotMat rot = rot_field(rec);
  const std::int64_t t = rec["t"].get<std::int64_t>();

  if (state_ == State::kUncalibrated) {
    reply.lines.push_back(error_record(error_code_name(ErrorCode::kUncalibrated), "imu data before calibration"));
    return;
  }
  if (last_t_ && t < *last_t_) throw ProtocolError{"timestamp went backwards"};
  if (!combo_.active(*loc)) throw ProtocolError{"location '" + std::string(location_id(*loc)) + "' is not in the active combo"};
  last_t_ = t;

  RawReading r;
  r.accel = Vec3(acc[0], acc[1], acc[2]);
  r.orient = rot;

  if (pending_t_ && t > *pending_t_) complete_frame(reply);
  if (!pending_t_ && emitted_t_ == t) {
    // late record for a frame already processed: only refresh the hold
    held_[*loc] = r;
    return;
  }
  pending_t_ = t;
  pending_[*loc] = r;
  held_[*loc] = r;
  bool full = true;
  for (BodyLocation l : combo_.locations()) full = full && pending_.count(l) > 0;
  if (full) complete_frame(reply);
}

void StreamSession::complete_frame(Reply& reply) {
  const std::int64_t t = *pending_t_;
  pending_t_.reset();
  pending_.clear();
  emitted_t_ = t;
  RawReadingMap frame;
  for (BodyLocation l : combo_.locations()) {
    auto it = held_.find(l);
    if (it == held_.end()) {
      reply.lines.push_back(error_record(error_code_name(ErrorCode::kMissingReading),
                                         "no reading yet from '" + std::string(location_id(l)) + "'; frame dropped"));
      return;
    }
    frame[l] = it->second;
  }
  if (state_ == State::kCalibrating)
    calib_frames_.push_back(std::move(frame));
  else
    emit_pose(t, frame, reply);
}

void StreamSession::emit_pose(std::int64_t t, const RawReadingMap& frame, Reply& reply) {
  const PoseOutput out = estimator_.step(frame);
  Pose pose = out.full_pose;
  Vec3 trans = out.translation;
  if (config_.refine) {
    const auto refined = refiner_.step(out);
    pose = refined.pose;
    trans = refined.translation;
  }
  std::vector<double> joints(out.joints_rel.size() * 3);
  for (std::size_t j = 0; j < out.joints_rel.size(); ++j)
    for (int i = 0; i < 3; ++i) joints[3 * j + static_cast<std::size_t>(i)] = out.joints_rel[j][i];
  std::vector<double> rots;
  rots.reserve(kPredictedJointCount * 9);
  for (int j : kPredictedJoints)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rots.push_back(pose.local_rot[static_cast<std::size_t>(j)](r, c));
  reply.lines.push_back(json{{"type", "pose"},
                             {"t", t},
                             {"joints", joints},
                             {"rots", rots},
                             {"trans", {trans.x(), trans.y(), trans.z()}},
                             {"contacts", {out.contacts[0], out.contacts[1]}}}
                            .dump());
  ++poses_;
}

void StreamSession::on_combo(const json& rec, Reply& reply) {
  (void)reply;
  if (state_ == State::kCalibrating) throw ProtocolError{"combo change during calibration"};
  if (!rec.contains("active") || !rec["active"].is_array() || rec["active"].empty())
    throw ProtocolError{"combo record needs a non-empty 'active' list"};
  std::uint8_t mask = 0;
  for (const json& id : rec["active"]) {
    if (!id.is_string()) throw ProtocolError{"'active' holds a non-string"};
    const auto loc = parse_location(id.get<std::string>());
    if (!loc) throw ProtocolError{"unknown location '" + id.get<std::string>() + "'"};
    mask |= static_cast<std::uint8_t>(1u << static_cast<int>(*loc));
  }
  const auto& roster = enumerate_combos();
  const auto it = std::find_if(roster.begin(), roster.end(), [&](const DeviceCombo& c) { return c.mask == mask; });
  if (it == roster.end()) throw ProtocolError{"'" + combo_from_mask(mask).id() + "' is not a supported device combo"};
  combo_ = *it;
  estimator_.set_combo(combo_);
  refiner_.reset();
  pending_.clear();
  pending_t_.reset();
  if (state_ == State::kReady && (mask & ~calibrated_mask_) != 0) state_ = State::kUncalibrated;
}

void StreamSession::on_calib_end(Reply& reply) {
  if (pending_t_) complete_frame(reply);
  CalibrationOptions opts;
  opts.fps = config_.fps;
  try {
    const CalibrationProfile profile = calibrate_tpose(calib_frames_, combo_, *rig_, opts);
    estimator_.set_calibration(profile);
    estimator_.reset();
    refiner_.reset();
    held_.clear();
    calibrated_mask_ = combo_.mask;
    state_ = State::kReady;
    reply.lines.push_back(json{{"type", "calibrated"}, {"frames", calib_frames_.size()}}.dump());
  } catch (const Error& e) {
    state_ = State::kUncalibrated;
    reply.lines.push_back(error_record(error_code_name(e.code()), e.what()));
  }
  calib_frames_.clear();
}

// ---- server -----------------------------------------------------------------

StreamServer::StreamServer(std::shared_ptr<const ModelBundle> bundle, std::shared_ptr<const Rig> rig, RunConfig config,
                           std::string host, int port)
    : bundle_(std::move(bundle)), rig_(std::move(rig)), config_(std::move(config)), host_(std::move(host)), port_(port) {
  config_.validate();
}

StreamServer::~StreamServer() { stop(); }

void StreamServer::start() {
  if (listen_fd_ >= 0) fail(ErrorCode::kUsage, "server already started");
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port_);
  if (const int rc = getaddrinfo(host_.c_str(), service.c_str(), &hints, &res); rc != 0)
    fail(ErrorCode::kUsage, "cannot resolve bind address " + host_ + ": " + gai_strerror(rc));
  int fd = -1;
  std::string why;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) break;
    why = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) fail(ErrorCode::kIo, "cannot listen on " + host_ + ":" + service + ": " + why);

  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  if (::pipe2(wake_, O_CLOEXEC) != 0) {
    ::close(fd);
    fail(ErrorCode::kIo, "pipe failed");
  }
  listen_fd_ = fd;
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void StreamServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  const char byte = 1;
  [[maybe_unused]] const auto n = ::write(wake_[1], &byte, 1);
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) ::shutdown(c.fd, SHUT_RDWR);
  }
  reap(true);
  ::close(listen_fd_);
  ::close(wake_[0]);
  ::close(wake_[1]);
  listen_fd_ = -1;
  wake_[0] = wake_[1] = -1;
}

std::size_t StreamServer::connections() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(conns_.begin(), conns_.end(), [](const Connection& c) { return !c.done.load(); }));
}

void StreamServer::reap(bool all) {
  std::list<Connection> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      auto next = std::next(it);
      if (all || it->done) finished.splice(finished.end(), conns_, it);
      it = next;
    }
  }
  for (auto& c : finished) {
    if (c.worker.joinable()) c.worker.join();
    ::close(c.fd);
  }
}

void StreamServer::accept_loop() {
  while (!stopping_) {
    pollfd fds[2] = {{listen_fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
    if (::poll(fds, 2, 1000) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    reap(false);
    if (fds[1].revents) break;
    if (!(fds[0].revents & POLLIN)) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    Connection& c = conns_.emplace_back();
    c.fd = fd;
    c.worker = std::thread([this, &c] { serve(c); });
  }
}

void StreamServer::serve(Connection& conn) {
  auto send_all = [&](const std::string& text) {
    std::size_t off = 0;
    while (off < text.size()) {
      const ssize_t n = ::send(conn.fd, text.data() + off, text.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  };
  auto deliver = [&](const StreamSession::Reply& r) {
    std::string out;
    for (const auto& l : r.lines) out += l + '\n';
    return out.empty() || send_all(out);
  };

  try {
    StreamSession session(*bundle_, *rig_, config_);
    std::string buf;
    char chunk[8192];
    bool open = true;
    while (open && !stopping_) {
      const ssize_t n = ::recv(conn.fd, chunk, sizeof(chunk), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (std::size_t nl; open && (nl = buf.find('\n', start)) != std::string::npos; start = nl + 1) {
        std::string_view line(buf.data() + start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto reply = session.handle(line);
        open = deliver(reply) && !reply.close;
      }
      buf.erase(0, start);
      if (buf.size() > kMaxLine) {
        deliver({{error_record(error_code_name(ErrorCode::kProtocol), "record too long")}, true});
        open = false;
      }
    }
    if (open && !stopping_) deliver(session.flush());
  } catch (const std::exception& e) {
    send_all(error_record(error_code_name(ErrorCode::kRuntime), e.what()) + "\n");
  }
  ::shutdown(conn.fd, SHUT_RDWR);
  conn.done = true;
}

}  // namespace mobileposer
