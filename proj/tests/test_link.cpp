#include <gtest/gtest.h>

#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include "quadmpc/link.hpp"

using namespace quadmpc;
using namespace quadmpc::link;

namespace {

std::string hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto v : b) {
    s += digits[v >> 4];
    s += digits[v & 0xf];
  }
  return s;
}

LinkOptions loopback(std::uint16_t plant_port, std::uint16_t controller_port) {
  LinkOptions o;
  o.plant = {"127.0.0.1", plant_port};
  o.controller = {"127.0.0.1", controller_port};
  o.hello_timeout = 20.0;
  o.packet_timeout = 10.0;
  return o;
}

const mpc::MpcSetup& setup() {
  static const auto s =
      mpc::synthesize(model::zoh_discretize(model::bebop2_model(), 0.2), mpc::bebop2_weights(), InputBounds{});
  return s;
}

}  // namespace

TEST(Codec, GoldenPoseBytes) {
  const auto b = encode(PosePacket{1, 0.2, Vec3(1, 1, 1.5), 0.0});
  EXPECT_EQ(hex(b),
            "01000000000000009a9999999999c93f000000000000f03f000000000000f03f000000000000f83f0000000000000000");
}

TEST(Codec, GoldenCommandBytes) {
  // seq 258, t = -2, u = (0.5, -0.25, 1, 0)
  const auto b = encode(CommandPacket{258, -2.0, Vec4(0.5, -0.25, 1.0, 0.0)});
  EXPECT_EQ(hex(b),
            "0201000000000000"
            "00000000000000c0"
            "000000000000e03f"
            "000000000000d0bf"
            "000000000000f03f"
            "0000000000000000");
}

TEST(Codec, RoundTripIsBitExact) {
  const PosePacket p{0xfedcba9876543210ull, 123.456789, Vec3(-1e-300, 3.14159, 2.5e10), -0.0};
  const auto q = decode_pose(encode(p));
  EXPECT_EQ(q.seq, p.seq);
  EXPECT_EQ(q.t, p.t);
  EXPECT_EQ(q.pos, p.pos);
  EXPECT_TRUE(std::signbit(q.yaw));
  const CommandPacket c{7, 0.4, Vec4(0.1, -0.2, 0.3, -0.4)};
  const auto d = decode_command(encode(c));
  EXPECT_EQ(d.seq, 7u);
  EXPECT_EQ(d.u, c.u);
  // All-zero bytes decode to an all-zero packet.
  Bytes zero{};
  const auto z = decode_pose(zero);
  EXPECT_EQ(z.seq, 0u);
  EXPECT_EQ(z.pos, Vec3::Zero());
}

TEST(Codec, RejectsBadLengthAndNonFinite) {
  const auto b = encode(PosePacket{1, 0.0, Vec3::Zero(), 0.0});
  const std::vector<std::uint8_t> short_pkt(b.begin(), b.end() - 1);
  std::vector<std::uint8_t> long_pkt(b.begin(), b.end());
  long_pkt.push_back(0);
  for (const auto& pkt : {short_pkt, long_pkt}) {
    try {
      decode_pose(pkt);
      FAIL() << "length " << pkt.size() << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.category(), ErrorCategory::Network);
    }
    EXPECT_THROW(decode_command(pkt), Error);
  }
  Bytes nan_pkt = b;
  const auto nan_bits = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < 8; ++i) nan_pkt[24 + i] = static_cast<std::uint8_t>(nan_bits >> (8 * i));
  EXPECT_THROW(decode_pose(nan_pkt), Error);
  EXPECT_THROW(encode(PosePacket{1, std::numeric_limits<double>::infinity(), Vec3::Zero(), 0.0}), Error);
  EXPECT_THROW(encode(CommandPacket{1, 0.0, Vec4(0, std::nan(""), 0, 0)}), Error);
}

TEST(Endpoint, Parsing) {
  const auto e = parse_endpoint("192.168.1.20:9000");
  EXPECT_EQ(e.host, "192.168.1.20");
  EXPECT_EQ(e.port, 9000);
  EXPECT_EQ(e.str(), "192.168.1.20:9000");
  for (const char* bad : {"", "localhost", "1.2.3.4:", ":9000", "1.2.3.4:70000", "1.2.3.4:abc", "1.2.3.4:0"})
    EXPECT_THROW(parse_endpoint(bad), Error) << bad;
}

TEST(CommandInbox, NewestDueCommandWins) {
  link::detail::CommandInbox box;
  box.push({1, 0.2, Vec4::Constant(1)});
  box.push({2, 0.4, Vec4::Constant(2)});
  box.push({3, 0.2, Vec4::Constant(3)});
  EXPECT_FALSE(box.take_due(0.0, 0.2).has_value());
  const auto c = box.take_due(0.2, 0.2);
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->seq, 3u);
  EXPECT_FALSE(box.take_due(0.2, 0.2).has_value());
  const auto [late, got] = box.wait_for(0.4, 0.2, std::chrono::milliseconds(10));
  EXPECT_TRUE(got);
  EXPECT_EQ(late->seq, 2u);
  const auto [none, timed_out] = box.wait_for(0.6, 0.2, std::chrono::milliseconds(10));
  EXPECT_FALSE(timed_out);
  EXPECT_FALSE(none.has_value());
}

TEST(Loopback, NetworkedRunMatchesOfflineSimulation) {
  const auto opt = loopback(47411, 47412);
  sim::SimConfig cfg;
  const auto scenario = sim::waypoint_scenario({{0.0, Vec3(1, 1, 1.5)}}, 20.0);
  auto plant = std::async(std::launch::async, [&] { return serve_plant(cfg, scenario.duration, opt); });
  const auto flown = fly(setup(), scenario, cfg, opt);
  const auto served = plant.get();
  ASSERT_FALSE(flown.aborted) << flown.error;

  const auto offline = sim::run_closed_loop(cfg, scenario, sim::MpcController{&setup()});
  ASSERT_EQ(served.log.size(), offline.log.size());
  ASSERT_EQ(flown.log.size(), offline.log.size());
  double worst_truth = 0, worst_input = 0;
  for (std::size_t k = 0; k < offline.log.size(); ++k) {
    worst_truth = std::max(worst_truth, (served.truth[k].x - offline.truth[k].x).cwiseAbs().maxCoeff());
    worst_input = std::max(worst_input, (served.log.rows[k].u - offline.log.rows[k].u).cwiseAbs().maxCoeff());
    EXPECT_EQ(flown.log.rows[k].pos, served.log.rows[k].pos);
    EXPECT_EQ(flown.log.rows[k].u, served.log.rows[k].u);
  }
  EXPECT_LE(worst_truth, 0.05);
  // Lockstep makes the two runs the same computation, up to rounding.
  EXPECT_LE(worst_truth, 1e-9);
  EXPECT_LE(worst_input, 1e-9);
  EXPECT_EQ(served.poses_sent, offline.log.size());
  EXPECT_EQ(flown.commands_sent, offline.steps.size());
  // The last command is due after the run ends and may arrive too late to count.
  EXPECT_EQ(served.commands_applied, flown.commands_sent - static_cast<std::size_t>(cfg.delay_steps));
  EXPECT_GE(served.commands_received, served.commands_applied);
  EXPECT_EQ(served.missed_deadlines, 0u);
  EXPECT_EQ(served.stale_dropped + served.malformed + flown.stale_dropped + flown.malformed, 0u);
  EXPECT_EQ(flown.compute.count, flown.commands_sent);
}

TEST(Loopback, StaleAndMalformedCommandsAreDropped) {
  const auto opt = loopback(47421, 47422);
  sim::SimConfig cfg;
  cfg.noise_sigma = 0.0;
  auto plant = std::async(std::launch::async, [&] { return serve_plant(cfg, 0.4, opt); });

  UdpSocket ctl(opt.controller);
  const Vec4 u(0.1, -0.05, 0.2, 0.0);
  bool sent = false;
  for (int tries = 0; tries < 400;) {
    if (!sent) ctl.send_to(encode(CommandPacket{0, 0.0, Vec4::Zero()}), opt.plant);
    const auto pkt = ctl.receive(std::chrono::milliseconds(50));
    if (!pkt) {
      ++tries;
      continue;
    }
    const auto p = decode_pose(*pkt);
    if (p.seq == 1 && !sent) {
      ctl.send_to(encode(CommandPacket{5, 0.2, u}), opt.plant);
      ctl.send_to(encode(CommandPacket{3, 0.2, Vec4::Constant(0.3)}), opt.plant);  // older
      ctl.send_to(encode(CommandPacket{5, 0.2, Vec4::Constant(0.3)}), opt.plant);  // duplicate
      const std::array<std::uint8_t, 10> junk{};
      ctl.send_raw(junk, opt.plant);
      sent = true;
    }
    if (p.seq == 48) break;
  }
  const auto r = plant.get();
  EXPECT_EQ(r.stale_dropped, 2u);
  EXPECT_EQ(r.malformed, 1u);
  EXPECT_EQ(r.commands_received, 1u);
  EXPECT_EQ(r.commands_applied, 1u);
  EXPECT_EQ(r.missed_deadlines, 0u);
  ASSERT_EQ(r.log.size(), 48u);
  for (std::size_t k = 0; k < 24; ++k) EXPECT_EQ(r.log.rows[k].u, Vec3::Zero());
  // x exceeds its bound and arrives saturated.
  const Vec3 applied(cfg.bounds.u_max.x(), u.y(), u.z());
  ASSERT_GT(u.x(), cfg.bounds.u_max.x());
  for (std::size_t k = 24; k < 48; ++k) EXPECT_EQ(r.log.rows[k].u, applied);
}

TEST(Loopback, HelloTimeoutIsANetworkError) {
  auto opt = loopback(47431, 47432);
  opt.hello_timeout = 0.2;
  try {
    serve_plant(sim::SimConfig{}, 1.0, opt);
    FAIL() << "no timeout";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Network);
  }
}
