#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "quadmpc/axis_model.hpp"
#include "quadmpc/error.hpp"
#include "quadmpc/flight_log.hpp"
#include "quadmpc/ident.hpp"
#include "quadmpc/ssmpc.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::sim {

struct PlantState {
  State x = State::Zero();
  double yaw = 0.0;  // kinematic: yaw' = u_yaw
  double t = 0.0;
};

/// Exact ZOH propagation of the continuous plant, one axis at a time.
inline PlantState plant_step(const model::ContinuousModel& plant, const PlantState& s, const Vec4& u, double dt) {
  PlantState out = s;
  for (Axis a : kAxes) {
    const auto blk = model::discretize_axis(plant[a].alpha, plant[a].beta, dt);
    const int p = position_index(a), v = velocity_index(a);
    const double ua = u[index(a)];
    out.x[p] = s.x[p] + blk.a12 * s.x[v] + blk.b1 * ua;
    out.x[v] = blk.a22 * s.x[v] + blk.b2 * ua;
  }
  out.yaw = s.yaw + dt * u[3];
  out.t = s.t + dt;
  return out;
}

/// Same propagation with the per-axis blocks discretized once.
class Plant {
 public:
  Plant(const model::ContinuousModel& m, double dt) : dt_(dt) {
    model::validate(m);
    for (Axis a : kAxes) blocks_[index(a)] = model::discretize_axis(m[a].alpha, m[a].beta, dt);
  }

  PlantState step(const PlantState& s, const Vec4& u) const {
    PlantState out = s;
    for (Axis a : kAxes) {
      const auto& blk = blocks_[index(a)];
      const int p = position_index(a), v = velocity_index(a);
      out.x[p] = s.x[p] + blk.a12 * s.x[v] + blk.b1 * u[index(a)];
      out.x[v] = blk.a22 * s.x[v] + blk.b2 * u[index(a)];
    }
    out.yaw = s.yaw + dt_ * u[3];
    out.t = s.t + dt_;
    return out;
  }

  double dt() const { return dt_; }

 private:
  double dt_;
  std::array<model::AxisBlock, 3> blocks_{};
};

struct MeasuredPose {
  Vec3 pos = Vec3::Zero();
  double yaw = 0.0;
  double t = 0.0;
};

/// Adds i.i.d. Gaussian noise to the positions (yaw is returned exactly).
template <class Rng>
MeasuredPose measure(const PlantState& s, double noise_sigma, Rng& rng) {
  require(noise_sigma >= 0, "measure: noise_sigma must be non-negative");
  MeasuredPose m;
  m.t = s.t;
  m.yaw = s.yaw;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Axis a : kAxes) {
    const double n = noise_sigma > 0 ? noise_sigma * gauss(rng) : 0.0;
    m.pos[index(a)] = s.x[position_index(a)] + n;
  }
  return m;
}

struct SimConfig {
  model::ContinuousModel plant_model = model::bebop2_model();
  double control_dt = 0.2;
  double sensor_dt = 1.0 / 120.0;
  double noise_sigma = 2e-5;
  int delay_steps = 1;
  InputBounds bounds{};
  std::uint64_t seed = 1;
  bool full_state_feedback = false;
  Vec3 initial_position = Vec3::Zero();
};

/// Scales every alpha and beta by (1 + pct/100) for plant/controller mismatch studies.
inline model::ContinuousModel perturbed(const model::ContinuousModel& m, double pct) {
  require(std::isfinite(pct) && pct > -100.0, "perturbed: percentage must exceed -100", ErrorCategory::InvalidConfig);
  model::ContinuousModel out = m;
  for (auto& ax : out.axes) {
    ax.alpha *= 1.0 + pct / 100.0;
    ax.beta *= 1.0 + pct / 100.0;
  }
  return out;
}

/// Identification flights: 120 Hz PD loop, no delay.
inline SimConfig identification_config() {
  SimConfig c;
  c.control_dt = c.sensor_dt;
  c.delay_steps = 0;
  return c;
}

inline int substeps(const SimConfig& c) {
  require(c.sensor_dt > 0 && c.control_dt > 0, "sim: rates must be positive", ErrorCategory::InvalidConfig);
  require(c.sensor_dt <= c.control_dt * (1 + 1e-12), "sim: sensor_dt must not exceed control_dt",
          ErrorCategory::InvalidConfig);
  const double ratio = c.control_dt / c.sensor_dt;
  const auto k = std::llround(ratio);
  require(std::abs(ratio - static_cast<double>(k)) <= 1e-9 * ratio,
          "sim: control_dt must be an integer multiple of sensor_dt", ErrorCategory::InvalidConfig);
  return static_cast<int>(k);
}

inline void validate(const SimConfig& c) {
  model::validate(c.plant_model);
  (void)substeps(c);
  require(c.noise_sigma >= 0 && std::isfinite(c.noise_sigma), "sim: noise_sigma must be >= 0",
          ErrorCategory::InvalidConfig);
  require(c.delay_steps >= 0, "sim: delay_steps must be >= 0", ErrorCategory::InvalidConfig);
  require(valid(c.bounds), "sim: input bounds must be positive", ErrorCategory::InvalidConfig);
  require(c.initial_position.allFinite(), "sim: initial position must be finite", ErrorCategory::InvalidConfig);
}

struct Waypoint {
  double t_switch = 0.0;
  Vec3 r = Vec3::Zero();
};

struct PiecewiseWaypoints {
  std::vector<Waypoint> points;
};

struct Lemniscate {
  double a = 1.0;        // [m]
  double period = 30.0;  // [s]
  double z_ref = 1.5;    // [m]
};

struct Excitation {
  ident::ExcitationSpec spec;
};

struct Scenario {
  std::variant<PiecewiseWaypoints, Lemniscate, Excitation> kind;
  double duration = 60.0;
};

inline void validate(const Scenario& s) {
  require(s.duration >= 0 && std::isfinite(s.duration), "scenario: duration must be non-negative",
          ErrorCategory::InvalidConfig);
  if (const auto* w = std::get_if<PiecewiseWaypoints>(&s.kind)) {
    require(!w->points.empty(), "scenario: need at least one waypoint", ErrorCategory::InvalidConfig);
    require(w->points.front().t_switch <= 0.0, "scenario: first waypoint must start at t=0",
            ErrorCategory::InvalidConfig);
    for (std::size_t i = 1; i < w->points.size(); ++i)
      require(w->points[i].t_switch > w->points[i - 1].t_switch, "scenario: switch times must increase",
              ErrorCategory::InvalidConfig);
  } else if (const auto* l = std::get_if<Lemniscate>(&s.kind)) {
    require(l->a > 0 && l->period > 0, "scenario: lemniscate size and period must be positive",
            ErrorCategory::InvalidConfig);
  } else {
    ident::validate(std::get<Excitation>(s.kind).spec);
  }
}

inline Scenario waypoint_scenario(std::vector<Waypoint> pts, double duration) {
  return Scenario{PiecewiseWaypoints{std::move(pts)}, duration};
}

inline Scenario excitation_scenario(const ident::ExcitationSpec& spec) {
  return Scenario{Excitation{spec}, spec.duration};
}

struct ReferenceSample {
  Vec3 r = Vec3::Zero();
  Vec3 rdot = Vec3::Zero();
};

inline ReferenceSample reference_at(const Scenario& s, double t) {
  require(t >= 0 && t <= s.duration * (1 + 1e-12) + 1e-12, "reference_at: t outside [0, duration]");
  ReferenceSample out;
  if (const auto* w = std::get_if<PiecewiseWaypoints>(&s.kind)) {
    // Right-continuous: the waypoint switching at t applies at t.
    out.r = w->points.front().r;
    for (const auto& p : w->points)
      if (p.t_switch <= t) out.r = p.r;
  } else if (const auto* l = std::get_if<Lemniscate>(&s.kind)) {
    const double w0 = 2.0 * std::numbers::pi / l->period;
    const double phi = w0 * t;
    const double sp = std::sin(phi), cp = std::cos(phi);
    const double den = 1.0 + sp * sp;
    out.r = Vec3(l->a * cp / den, l->a * sp * cp / den, l->z_ref);
    // d/dphi of the two planar coordinates, times dphi/dt.
    const double dden = 2.0 * sp * cp;
    const double dx = l->a * (-sp * den - cp * dden) / (den * den);
    const double dy = l->a * ((cp * cp - sp * sp) * den - sp * cp * dden) / (den * den);
    out.rdot = Vec3(dx * w0, dy * w0, 0.0);
  } else {
    const auto& spec = std::get<Excitation>(s.kind).spec;
    const auto rp = ident::excitation_reference(spec, t);
    out.r[index(spec.axis)] = rp.pos;
    out.rdot[index(spec.axis)] = rp.vel;
  }
  return out;
}

/// PD loop. The x/y/z outputs of pd_control are multiplied by
/// `actuation_sign` before actuation; with negative input gains the sign must
/// be -1 for the loop to be stable.
struct PdController {
  ident::PdGains gains{};
  Vec3 actuation_sign{-1.0, -1.0, -1.0};
};

struct MpcController {
  const mpc::MpcSetup* setup = nullptr;
  ident::PdGains yaw_gains{};  // only kp_yaw / kd_yaw are used
};

using Controller = std::variant<PdController, MpcController>;

/// One record per control instant of an MPC run.
struct MpcStepRecord {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  State x_meas = State::Zero();
  Vec3 u_cmd = Vec3::Zero();  // QP output before delay and saturation
  Vec3 theta = Vec3::Zero();
  double objective = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  double kkt_worst = 0.0;
  qp::Status status = qp::Status::Optimal;
};

struct RunResult {
  FlightLog log;
  std::vector<MpcStepRecord> steps;
  std::vector<PlantState> truth;  // true state at each logged sample
  bool aborted = false;
  std::string error;
  ErrorCategory error_category = ErrorCategory::Infeasible;
};

/// Runs the sampled closed loop. Each sensor sample: measure, and at control
/// instants compute a command, push it through a delay line of `delay_steps`
/// control periods (initially zeros), and apply the popped command after
/// saturation. Every sensor sample is logged with the input applied over the
/// following sensor interval.
inline RunResult run_closed_loop(const SimConfig& cfg, const Scenario& scenario, const Controller& controller) {
  validate(cfg);
  validate(scenario);
  const int ratio = substeps(cfg);
  if (const auto* mc = std::get_if<MpcController>(&controller)) {
    require(mc->setup != nullptr, "run_closed_loop: missing MPC setup");
    require(std::abs(mc->setup->model.Ts - cfg.control_dt) <= 1e-9 * cfg.control_dt,
            "run_closed_loop: control_dt must equal the MPC sampling period", ErrorCategory::InvalidConfig);
  }

  const Plant plant(cfg.plant_model, cfg.sensor_dt);
  std::mt19937_64 rng(cfg.seed);
  const auto n = static_cast<std::size_t>(std::llround(scenario.duration / cfg.sensor_dt));

  RunResult res;
  res.log.dt = cfg.sensor_dt;
  res.log.bounds = cfg.bounds;
  res.log.rows.reserve(n);
  res.truth.reserve(n);

  PlantState state;
  for (Axis a : kAxes) state.x[position_index(a)] = cfg.initial_position[index(a)];

  std::deque<Vec4> delay_line(static_cast<std::size_t>(cfg.delay_steps), Vec4::Zero());
  Vec4 applied = Vec4::Zero();
  MeasuredPose prev_meas;
  bool have_prev = false;
  mpc::WarmState warm;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.sensor_dt;
    state.t = t;
    const MeasuredPose meas = measure(state, cfg.noise_sigma, rng);
    ident::Pose pose;
    pose.pos = meas.pos;
    pose.yaw = meas.yaw;
    if (cfg.full_state_feedback) {
      for (Axis a : kAxes) pose.vel[index(a)] = state.x[velocity_index(a)];
      pose.yaw_rate = applied[3];
    } else if (have_prev) {
      pose.vel = (meas.pos - prev_meas.pos) / cfg.sensor_dt;
      pose.yaw_rate = (meas.yaw - prev_meas.yaw) / cfg.sensor_dt;
    }
    prev_meas = meas;
    have_prev = true;

    const ReferenceSample ref = reference_at(scenario, t);

    if (k % static_cast<std::size_t>(ratio) == 0) {
      Vec4 cmd = Vec4::Zero();
      if (const auto* pd = std::get_if<PdController>(&controller)) {
        ident::Pose desired;
        desired.pos = ref.r;
        desired.vel = ref.rdot;
        cmd = ident::pd_control(pd->gains, pose, desired);
        cmd.head<3>() = cmd.head<3>().cwiseProduct(pd->actuation_sign);
      } else {
        const auto& mc = std::get<MpcController>(controller);
        State x_now;
        for (Axis a : kAxes) {
          x_now[position_index(a)] = pose.pos[index(a)];
          x_now[velocity_index(a)] = pose.vel[index(a)];
        }
        MpcStepRecord rec;
        rec.t = t;
        rec.r = ref.r;
        rec.x_meas = x_now;
        try {
          const auto step = mpc::mpc_step(*mc.setup, x_now, ref.r, &warm);
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
          res.error_category = e.category();
          return res;
        }
        res.steps.push_back(rec);
        cmd.head<3>() = rec.u_cmd;
        cmd[3] = -mc.yaw_gains.kp_yaw * pose.yaw - mc.yaw_gains.kd_yaw * pose.yaw_rate;
      }
      delay_line.push_back(cmd);
      applied = ident::saturate(delay_line.front(), cfg.bounds);
      delay_line.pop_front();
    }

    FlightSample row;
    row.t = t;
    row.ref = ref.r;
    row.pos = meas.pos;
    row.u = applied.head<3>();
    row.u_yaw = applied[3];
    res.log.rows.push_back(row);
    res.truth.push_back(state);

    state = plant.step(state, applied);
  }
  return res;
}

/// Per-run figures reported alongside the log.
struct RunSummary {
  std::size_t samples = 0;
  std::size_t control_steps = 0;
  Vec3 final_error = Vec3::Zero();     // last sample, |pos - ref|
  double window_error = 0.0;           // max inf-norm position error over the final window
  double rms_lateral_error = 0.0;      // RMS of the x/y position error over the whole run
  Vec3 max_abs_input = Vec3::Zero();   // applied
  double max_bound_excess = 0.0;       // QP output beyond bounds, before saturation
  double solve_mean = 0.0;
  double solve_std = 0.0;
  double solve_max = 0.0;
  int max_iterations = 0;
  double max_kkt = 0.0;
  bool all_optimal = true;
};

inline RunSummary summarize(const RunResult& r, const InputBounds& bounds, double window_seconds = 5.0) {
  RunSummary s;
  const auto& rows = r.log.rows;
  s.samples = rows.size();
  s.control_steps = r.steps.size();
  if (!rows.empty()) {
    s.final_error = (rows.back().pos - rows.back().ref).cwiseAbs();
    const double t_end = rows.back().t;
    double lat = 0.0;
    for (const auto& row : rows) {
      const Vec3 e = row.pos - row.ref;
      lat += e.head<2>().squaredNorm();
      s.max_abs_input = s.max_abs_input.cwiseMax(row.u.cwiseAbs());
      if (row.t >= t_end - window_seconds + 1e-9) s.window_error = std::max(s.window_error, e.cwiseAbs().maxCoeff());
    }
    s.rms_lateral_error = std::sqrt(lat / static_cast<double>(rows.size()));
  }
  double sum = 0.0, sum2 = 0.0;
  for (const auto& st : r.steps) {
    sum += st.solve_seconds;
    sum2 += st.solve_seconds * st.solve_seconds;
    s.solve_max = std::max(s.solve_max, st.solve_seconds);
    s.max_iterations = std::max(s.max_iterations, st.iterations);
    s.max_kkt = std::max(s.max_kkt, st.kkt_worst);
    s.max_bound_excess = std::max(s.max_bound_excess, (st.u_cmd.cwiseAbs() - bounds.u_max).maxCoeff());
    if (st.status != qp::Status::Optimal) s.all_optimal = false;
  }
  if (!r.steps.empty()) {
    const double k = static_cast<double>(r.steps.size());
    s.solve_mean = sum / k;
    s.solve_std = std::sqrt(std::max(0.0, sum2 / k - s.solve_mean * s.solve_mean));
  }
  if (r.aborted) s.all_optimal = false;
  return s;
}

}  // namespace quadmpc::sim
