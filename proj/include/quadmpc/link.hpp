#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "quadmpc/error.hpp"
#include "quadmpc/flight_log.hpp"
#include "quadmpc/sim.hpp"
#include "quadmpc/ssmpc.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::link {

inline constexpr std::size_t kPacketSize = 48;
using Bytes = std::array<std::uint8_t, kPacketSize>;

struct PosePacket {
  std::uint64_t seq = 0;
  double t = 0.0;
  Vec3 pos = Vec3::Zero();
  double yaw = 0.0;
};

/// seq 0 is reserved for the hello that opens a session.
struct CommandPacket {
  std::uint64_t seq = 0;
  double t = 0.0;  // plant time at which the command takes effect
  Vec4 u = Vec4::Zero();
};

namespace detail {

inline void put_u64(Bytes& b, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

inline void put_f64(Bytes& b, std::size_t off, double v) { put_u64(b, off, std::bit_cast<std::uint64_t>(v)); }

inline double get_f64(std::span<const std::uint8_t> b, std::size_t off) {
  const double v = std::bit_cast<double>(get_u64(b, off));
  require(std::isfinite(v), "decode: non-finite field", ErrorCategory::Network);
  return v;
}

inline void check_length(std::span<const std::uint8_t> b) {
  require(b.size() == kPacketSize,
          "decode: expected 48 bytes, got " + std::to_string(b.size()), ErrorCategory::Network);
}

}  // namespace detail

inline Bytes encode(const PosePacket& p) {
  require(std::isfinite(p.t) && p.pos.allFinite() && std::isfinite(p.yaw), "encode: non-finite pose",
          ErrorCategory::Network);
  Bytes b{};
  detail::put_u64(b, 0, p.seq);
  detail::put_f64(b, 8, p.t);
  for (int i = 0; i < 3; ++i) detail::put_f64(b, 16 + 8 * static_cast<std::size_t>(i), p.pos[i]);
  detail::put_f64(b, 40, p.yaw);
  return b;
}

inline Bytes encode(const CommandPacket& p) {
  require(std::isfinite(p.t) && p.u.allFinite(), "encode: non-finite command", ErrorCategory::Network);
  Bytes b{};
  detail::put_u64(b, 0, p.seq);
  detail::put_f64(b, 8, p.t);
  for (int i = 0; i < 4; ++i) detail::put_f64(b, 16 + 8 * static_cast<std::size_t>(i), p.u[i]);
  return b;
}

inline PosePacket decode_pose(std::span<const std::uint8_t> b) {
  detail::check_length(b);
  PosePacket p;
  p.seq = detail::get_u64(b, 0);
  p.t = detail::get_f64(b, 8);
  for (int i = 0; i < 3; ++i) p.pos[i] = detail::get_f64(b, 16 + 8 * static_cast<std::size_t>(i));
  p.yaw = detail::get_f64(b, 40);
  return p;
}

inline CommandPacket decode_command(std::span<const std::uint8_t> b) {
  detail::check_length(b);
  CommandPacket p;
  p.seq = detail::get_u64(b, 0);
  p.t = detail::get_f64(b, 8);
  for (int i = 0; i < 4; ++i) p.u[i] = detail::get_f64(b, 16 + 8 * static_cast<std::size_t>(i));
  return p;
}

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  bool operator==(const Endpoint&) const = default;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port" (IPv4 dotted quad).
inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  require(colon != std::string::npos && colon > 0, "endpoint '" + s + "' must be host:port",
          ErrorCategory::InvalidConfig);
  Endpoint e;
  e.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  std::size_t used = 0;
  long v = -1;
  try {
    v = std::stol(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == port.size() && v >= 1 && v <= 65535, "endpoint '" + s + "': bad port",
          ErrorCategory::InvalidConfig);
  e.port = static_cast<std::uint16_t>(v);
  in_addr probe{};
  require(::inet_pton(AF_INET, e.host.c_str(), &probe) == 1, "endpoint '" + s + "': bad IPv4 address",
          ErrorCategory::InvalidConfig);
  return e;
}

inline sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(e.port);
  require(::inet_pton(AF_INET, e.host.c_str(), &a.sin_addr) == 1, "bad IPv4 address " + e.host,
          ErrorCategory::Network);
  return a;
}

/// Bound IPv4 UDP socket.
class UdpSocket {
 public:
  explicit UdpSocket(const Endpoint& bind_to) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) fail(ErrorCategory::Network, std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const int buf = 1 << 20;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
    const sockaddr_in a = to_sockaddr(bind_to);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
      const std::string msg = std::string("bind ") + bind_to.str() + ": " + std::strerror(errno);
      ::close(fd_);
      fail(ErrorCategory::Network, msg);
    }
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }

  void send_to(const Bytes& b, const Endpoint& peer) const { send_raw(b, peer); }

  void send_raw(std::span<const std::uint8_t> b, const Endpoint& peer) const {
    const sockaddr_in a = to_sockaddr(peer);
    const auto n = ::sendto(fd_, b.data(), b.size(), 0, reinterpret_cast<const sockaddr*>(&a), sizeof a);
    if (n != static_cast<ssize_t>(b.size()))
      fail(ErrorCategory::Network, std::string("sendto ") + peer.str() + ": " + std::strerror(errno));
  }

  /// Waits up to `timeout` for one datagram. Returns its payload, which may
  /// have any length.
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0) {
      if (errno == EINTR) return std::nullopt;
      fail(ErrorCategory::Network, std::string("poll: ") + std::strerror(errno));
    }
    if (r == 0) return std::nullopt;
    std::vector<std::uint8_t> buf(512);
    const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0) fail(ErrorCategory::Network, std::string("recv: ") + std::strerror(errno));
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

 private:
  int fd_ = -1;
};

struct LatencyStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;

  void add(double v) {
    ++count;
    const double d = v - mean;
    mean += d / static_cast<double>(count);
    m2_ += d * (v - mean);
    stddev = count > 1 ? std::sqrt(m2_ / static_cast<double>(count)) : 0.0;
    max = std::max(max, v);
  }

 private:
  double m2_ = 0.0;
};

struct LinkOptions {
  Endpoint plant{"127.0.0.1", 9000};
  Endpoint controller{"127.0.0.1", 9001};
  // Wall seconds per simulated second. 0 runs in lockstep: the plant waits at
  // each control instant for the command due then, so the run reproduces the
  // offline simulation exactly.
  double time_scale = 0.0;
  double hello_timeout = 30.0;   // [s] plant waits this long for the controller
  double packet_timeout = 5.0;   // [s] lockstep wait and controller pose wait
};

inline void validate(const LinkOptions& o) {
  require(o.time_scale >= 0 && std::isfinite(o.time_scale), "link: time_scale must be >= 0",
          ErrorCategory::InvalidConfig);
  require(o.hello_timeout > 0 && o.packet_timeout > 0, "link: timeouts must be positive",
          ErrorCategory::InvalidConfig);
}

struct PlantServerResult {
  FlightLog log;                  // measured pose and applied input per sensor sample
  std::vector<sim::PlantState> truth;
  std::size_t poses_sent = 0;
  std::size_t commands_received = 0;
  std::size_t commands_applied = 0;
  std::size_t stale_dropped = 0;
  std::size_t malformed = 0;
  std::size_t missed_deadlines = 0;  // lockstep waits that timed out
};

namespace detail {

inline bool same_instant(double a, double b, double dt) { return std::abs(a - b) <= 1e-6 * dt; }

/// Latest-value mailbox filled by a receive thread.
class CommandInbox {
 public:
  void push(const CommandPacket& c) {
    {
      std::lock_guard lk(m_);
      pending_.push_back(c);
    }
    cv_.notify_all();
  }

  /// Removes every command due at or before `t` and returns the newest one.
  std::optional<CommandPacket> take_due(double t, double dt) {
    std::lock_guard lk(m_);
    return take_due_locked(t, dt);
  }

  /// Blocks until a command due exactly at `t` has arrived or the timeout
  /// passes, then behaves like take_due.
  std::pair<std::optional<CommandPacket>, bool> wait_for(double t, double dt, std::chrono::duration<double> timeout) {
    std::unique_lock lk(m_);
    const bool got = cv_.wait_for(lk, timeout, [&] {
      for (const auto& c : pending_)
        if (same_instant(c.t, t, dt)) return true;
      return false;
    });
    return {take_due_locked(t, dt), got};
  }

 private:
  std::optional<CommandPacket> take_due_locked(double t, double dt) {
    std::optional<CommandPacket> best;
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (it->t <= t + 1e-6 * dt) {
        if (!best || it->seq > best->seq) best = *it;
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
    return best;
  }

  std::mutex m_;
  std::condition_variable cv_;
  std::deque<CommandPacket> pending_;
};

}  // namespace detail

/// Plant side of the networked loop. Waits for the controller hello, then
/// publishes one PosePacket per sensor sample for `duration` simulated
/// seconds. Commands are held between control instants and zero until the
/// first one is due.
inline PlantServerResult serve_plant(const sim::SimConfig& cfg, double duration, const LinkOptions& opt) {
  sim::validate(cfg);
  validate(opt);
  require(duration >= 0 && std::isfinite(duration), "serve_plant: duration must be >= 0",
          ErrorCategory::InvalidConfig);
  const int ratio = sim::substeps(cfg);
  const double control_dt = cfg.sensor_dt * ratio;
  const sim::Plant plant(cfg.plant_model, cfg.sensor_dt);
  std::mt19937_64 rng(cfg.seed);
  const auto n = static_cast<std::size_t>(std::llround(duration / cfg.sensor_dt));

  UdpSocket sock(opt.plant);
  PlantServerResult res;
  res.log.dt = cfg.sensor_dt;
  res.log.bounds = cfg.bounds;

  // Hello.
  const auto hello_deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(opt.hello_timeout);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= hello_deadline) fail(ErrorCategory::Network, "serve_plant: no controller hello before timeout");
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(hello_deadline - now);
    const auto pkt = sock.receive(std::min(left, std::chrono::milliseconds(100)));
    if (!pkt) continue;
    if (pkt->size() != kPacketSize) {
      ++res.malformed;
      continue;
    }
    try {
      if (decode_command(*pkt).seq == 0) break;
    } catch (const Error&) {
      ++res.malformed;
    }
  }

  detail::CommandInbox inbox;
  std::atomic<bool> stop{false};
  std::atomic<std::size_t> received{0}, stale{0}, malformed{0};
  std::thread rx([&] {
    std::uint64_t last_seq = 0;
    while (!stop.load()) {
      const auto pkt = sock.receive(std::chrono::milliseconds(20));
      if (!pkt) continue;
      CommandPacket c;
      try {
        c = decode_command(*pkt);
      } catch (const Error&) {
        ++malformed;
        continue;
      }
      if (c.seq == 0) continue;  // repeated hello
      if (c.seq <= last_seq) {
        ++stale;
        continue;
      }
      last_seq = c.seq;
      ++received;
      inbox.push(c);
    }
  });

  struct Joiner {
    std::atomic<bool>& stop;
    std::thread& th;
    ~Joiner() {
      stop.store(true);
      if (th.joinable()) th.join();
    }
  } joiner{stop, rx};

  sim::PlantState state;
  for (Axis a : kAxes) state.x[position_index(a)] = cfg.initial_position[index(a)];
  Vec4 applied = Vec4::Zero();
  const auto start = std::chrono::steady_clock::now();
  const auto wait = std::chrono::duration<double>(opt.packet_timeout);

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.sensor_dt;
    state.t = t;
    if (opt.time_scale > 0)
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(t * opt.time_scale)));
    const auto meas = sim::measure(state, cfg.noise_sigma, rng);
    sock.send_to(encode(PosePacket{k + 1, t, meas.pos, meas.yaw}), opt.controller);
    ++res.poses_sent;

    if (k % static_cast<std::size_t>(ratio) == 0) {
      const auto c_index = static_cast<long long>(k / static_cast<std::size_t>(ratio));
      std::optional<CommandPacket> cmd;
      if (opt.time_scale == 0 && c_index >= cfg.delay_steps) {
        auto [c, got] = inbox.wait_for(t, control_dt, wait);
        if (!got) ++res.missed_deadlines;
        cmd = c;
      } else {
        cmd = inbox.take_due(t, control_dt);
      }
      if (cmd) {
        applied = ident::saturate(cmd->u, cfg.bounds);
        ++res.commands_applied;
      }
    }

    FlightSample row;
    row.t = t;
    row.pos = meas.pos;
    row.u = applied.head<3>();
    row.u_yaw = applied[3];
    res.log.rows.push_back(row);
    res.truth.push_back(state);
    state = plant.step(state, applied);
  }
  res.commands_received = received.load();
  res.stale_dropped = stale.load();
  res.malformed += malformed.load();
  return res;
}

struct FlyResult {
  FlightLog log;  // received poses with the reference and the command in effect
  std::vector<sim::MpcStepRecord> steps;
  LatencyStats compute;       // [s] pose arrival to command sent
  LatencyStats round_trip;    // [s] command sent to first pose taken under it
  std::size_t poses_received = 0;
  std::size_t stale_dropped = 0;
  std::size_t malformed = 0;
  std::size_t commands_sent = 0;
  bool aborted = false;
  std::string error;
};

/// Controller side. Sends hellos until the first pose arrives, then runs
/// mpc_step on each pose taken at a control instant and sends the command
/// stamped with the instant `delay_steps` periods later. Velocities come from
/// consecutive poses.
inline FlyResult fly(const mpc::MpcSetup& setup, const sim::Scenario& scenario, const sim::SimConfig& cfg,
                     const LinkOptions& opt, const ident::PdGains& yaw_gains = {}) {
  sim::validate(cfg);
  sim::validate(scenario);
  validate(opt);
  const int ratio = sim::substeps(cfg);
  require(std::abs(setup.model.Ts - cfg.control_dt) <= 1e-9 * cfg.control_dt,
          "fly: control_dt must equal the MPC sampling period", ErrorCategory::InvalidConfig);
  const auto n = static_cast<std::size_t>(std::llround(scenario.duration / cfg.sensor_dt));
  const double ts = setup.model.Ts;

  UdpSocket sock(opt.controller);
  FlyResult res;
  res.log.dt = cfg.sensor_dt;
  res.log.bounds = cfg.bounds;
  if (n == 0) return res;

  using clock = std::chrono::steady_clock;
  const auto hello_deadline = clock::now() + std::chrono::duration<double>(opt.hello_timeout);
  const auto pose_wait = std::chrono::duration<double>(opt.packet_timeout);

  std::uint64_t last_seq = 0;
  std::uint64_t cmd_seq = 0;
  bool started = false;
  PosePacket prev{};
  bool have_prev = false;
  mpc::WarmState warm;
  struct InFlight {
    double t;
    Vec4 u;
    clock::time_point sent;
  };
  std::deque<InFlight> sent;
  Vec4 in_effect = Vec4::Zero();
  auto last_rx = clock::now();

  while (last_seq < n) {
    if (!started) {
      if (clock::now() >= hello_deadline) fail(ErrorCategory::Network, "fly: plant did not respond to hello");
      sock.send_to(encode(CommandPacket{0, 0.0, Vec4::Zero()}), opt.plant);
    }
    const auto pkt = sock.receive(std::chrono::milliseconds(started ? 50 : 100));
    const auto now = clock::now();
    if (!pkt) {
      if (started && now - last_rx > pose_wait) fail(ErrorCategory::Network, "fly: pose stream stalled");
      continue;
    }
    PosePacket p;
    try {
      p = decode_pose(*pkt);
    } catch (const Error&) {
      ++res.malformed;
      continue;
    }
    if (p.seq <= last_seq) {
      ++res.stale_dropped;
      continue;
    }
    started = true;
    last_seq = p.seq;
    last_rx = now;
    ++res.poses_received;

    // Commands due at or before this pose are now in effect on the plant.
    while (!sent.empty() && sent.front().t <= p.t + 1e-6 * ts) {
      in_effect = ident::saturate(sent.front().u, cfg.bounds);
      res.round_trip.add(std::chrono::duration<double>(now - sent.front().sent).count());
      sent.pop_front();
    }

    ident::Pose pose;
    pose.pos = p.pos;
    pose.yaw = p.yaw;
    if (have_prev && p.t > prev.t) {
      const double dt = p.t - prev.t;
      pose.vel = (p.pos - prev.pos) / dt;
      pose.yaw_rate = (p.yaw - prev.yaw) / dt;
    }
    prev = p;
    have_prev = true;

    const double t_ref = std::min(p.t, scenario.duration);
    const auto ref = sim::reference_at(scenario, t_ref);
    const auto k = static_cast<std::size_t>(std::llround(p.t / cfg.sensor_dt));
    if (k % static_cast<std::size_t>(ratio) == 0) {
      State x_now;
      for (Axis a : kAxes) {
        x_now[position_index(a)] = pose.pos[index(a)];
        x_now[velocity_index(a)] = pose.vel[index(a)];
      }
      sim::MpcStepRecord rec;
      rec.t = p.t;
      rec.r = ref.r;
      rec.x_meas = x_now;
      try {
        const auto step = mpc::mpc_step(setup, x_now, ref.r, &warm);
        rec.u_cmd = step.u_apply;
        rec.theta = step.theta;
        rec.objective = step.diag.objective;
        rec.iterations = step.diag.iterations;
        rec.solve_seconds = step.diag.solve_seconds;
        rec.kkt_worst = step.diag.kkt.worst();
        rec.status = step.diag.status;
      } catch (const Error& e) {
        res.aborted = true;
        res.error = e.what();
        return res;
      }
      res.steps.push_back(rec);
      CommandPacket c;
      c.seq = ++cmd_seq;
      c.t = p.t + cfg.delay_steps * ts;
      c.u.head<3>() = rec.u_cmd;
      c.u[3] = -yaw_gains.kp_yaw * pose.yaw - yaw_gains.kd_yaw * pose.yaw_rate;
      const auto t_send = clock::now();
      sock.send_to(encode(c), opt.plant);
      ++res.commands_sent;
      res.compute.add(std::chrono::duration<double>(t_send - now).count());
      if (cfg.delay_steps == 0) {
        in_effect = ident::saturate(c.u, cfg.bounds);
      } else {
        sent.push_back({c.t, c.u, t_send});
      }
    }

    FlightSample row;
    row.t = p.t;
    row.ref = ref.r;
    row.pos = p.pos;
    row.u = in_effect.head<3>();
    row.u_yaw = in_effect[3];
    res.log.rows.push_back(row);
  }
  return res;
}

}  // namespace quadmpc::link
