#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmpc/axis_model.hpp"
#include "quadmpc/error.hpp"
#include "quadmpc/ident.hpp"
#include "quadmpc/link.hpp"
#include "quadmpc/sim.hpp"
#include "quadmpc/ssmpc.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::config {

using Json = nlohmann::ordered_json;

struct LemniscateRun {
  sim::Lemniscate curve{};
  double duration = 60.0;
};

struct WaypointRun {
  std::vector<sim::Waypoint> points{{0.0, Vec3(1.0, 1.0, 1.5)}};
  double duration = 60.0;
};

/// Everything a CLI run needs. Defaults reproduce the Bebop 2 setup.
struct Config {
  model::ContinuousModel plant = model::bebop2_model();
  double mismatch_pct = 0.0;  // plant perturbation relative to the controller model
  ident::PdGains pd{};
  Vec3 actuation_sign{-1.0, -1.0, -1.0};
  ident::ExcitationSpec excitation{};
  mpc::MpcWeights weights = mpc::bebop2_weights();
  double Ts = 0.2;
  int omega_cap = 200;
  bool use_terminal_set = true;
  InputBounds bounds{};
  double sensor_rate_hz = 120.0;
  double noise_sigma = 2e-5;
  int delay_steps = 1;
  std::uint64_t seed = 1;
  bool full_state_feedback = false;
  qp::Settings qp{};
  LemniscateRun lemniscate{};
  WaypointRun waypoints{};
  link::LinkOptions link{};
};

/// MPC-run simulator settings: control at Ts, plant perturbed by mismatch_pct.
inline sim::SimConfig sim_config(const Config& c) {
  sim::SimConfig s;
  s.plant_model = sim::perturbed(c.plant, c.mismatch_pct);
  s.control_dt = c.Ts;
  s.sensor_dt = 1.0 / c.sensor_rate_hz;
  s.noise_sigma = c.noise_sigma;
  s.delay_steps = c.delay_steps;
  s.bounds = c.bounds;
  s.seed = c.seed;
  s.full_state_feedback = c.full_state_feedback;
  return s;
}

/// Identification-run simulator settings: control at the sensor rate, no delay.
inline sim::SimConfig identification_sim_config(const Config& c) {
  sim::SimConfig s = sim_config(c);
  s.control_dt = s.sensor_dt;
  s.delay_steps = 0;
  return s;
}

inline mpc::SynthesisOptions synthesis_options(const Config& c) {
  mpc::SynthesisOptions o;
  o.omega_cap = c.omega_cap;
  o.qp_settings = c.qp;
  o.use_terminal_set = c.use_terminal_set;
  return o;
}

inline sim::Scenario lemniscate_scenario(const Config& c) {
  return sim::Scenario{c.lemniscate.curve, c.lemniscate.duration};
}

inline sim::Scenario waypoint_scenario(const Config& c) {
  return sim::waypoint_scenario(c.waypoints.points, c.waypoints.duration);
}

/// Checks every field against the invariants of the module that consumes it.
inline void validate(const Config& c) {
  model::validate(c.plant);
  ident::validate(c.pd);
  ident::validate(c.excitation);
  require(c.actuation_sign.cwiseAbs() == Vec3::Ones(), "config: actuation_sign entries must be +1 or -1",
          ErrorCategory::InvalidConfig);
  require(c.Ts > 0 && std::isfinite(c.Ts), "config: mpc.Ts must be positive", ErrorCategory::InvalidConfig);
  require(c.sensor_rate_hz > 0 && std::isfinite(c.sensor_rate_hz), "config: sim.sensor_rate_hz must be positive",
          ErrorCategory::InvalidConfig);
  require(c.omega_cap >= 0, "config: mpc.omega_cap must be >= 0", ErrorCategory::InvalidConfig);
  mpc::validate(c.weights, 6, 3, 3);
  qp::validate(c.qp);
  sim::validate(sim_config(c));
  sim::validate(identification_sim_config(c));
  sim::validate(lemniscate_scenario(c));
  sim::validate(waypoint_scenario(c));
  link::validate(c.link);
}

namespace detail {

[[noreturn]] inline void bad(const std::string& path, const std::string& what) {
  fail(ErrorCategory::InvalidConfig, "config: " + path + ": " + what);
}

/// Walks one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) bad(path_ + "." + k, "unknown key");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  const Json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) bad(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) bad(path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(path(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) bad(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) bad(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, Vec3& out) {
    if (const Json* v = find(key)) out = vec3(*v, path(key));
  }
  void get(const std::string& key, link::Endpoint& out) {
    std::string s;
    if (find(key)) {
      get(key, s);
      out = link::parse_endpoint(s);
    }
  }
  /// Square matrix given either as its diagonal or as a list of rows.
  void get(const std::string& key, MatrixXd& out, Eigen::Index dim) {
    const Json* v = find(key);
    if (!v) return;
    const std::string p = path(key);
    if (!v->is_array() || v->size() != static_cast<std::size_t>(dim))
      bad(p, "expected " + std::to_string(dim) + " diagonal entries or " + std::to_string(dim) + " rows");
    if (v->at(0).is_number()) {
      VectorXd d(dim);
      for (Eigen::Index i = 0; i < dim; ++i) d[i] = number((*v)[static_cast<std::size_t>(i)], p);
      out = d.asDiagonal();
      return;
    }
    out.resize(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const Json& row = (*v)[static_cast<std::size_t>(i)];
      if (!row.is_array() || row.size() != static_cast<std::size_t>(dim)) bad(p, "rows must have length " + std::to_string(dim));
      for (Eigen::Index k = 0; k < dim; ++k) out(i, k) = number(row[static_cast<std::size_t>(k)], p);
    }
  }

  static double number(const Json& v, const std::string& p) {
    if (!v.is_number()) bad(p, "expected a number");
    return v.get<double>();
  }
  static Vec3 vec3(const Json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 3) bad(p, "expected a list of 3 numbers");
    return Vec3(number(v[0], p), number(v[1], p), number(v[2], p));
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json to_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

inline Json to_json(const MatrixXd& m) {
  const bool diagonal = (m - MatrixXd(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (diagonal) {
      out.push_back(m(i, i));
    } else {
      Json row = Json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace detail

inline Config from_json(const Json& root) {
  Config c;
  detail::Section top(root, "$");
  if (const Json* j = top.find("plant")) {
    detail::Section s(*j, "plant");
    Vec3 a(c.plant.axes[0].alpha, c.plant.axes[1].alpha, c.plant.axes[2].alpha);
    Vec3 b(c.plant.axes[0].beta, c.plant.axes[1].beta, c.plant.axes[2].beta);
    s.get("alpha", a);
    s.get("beta", b);
    for (int i = 0; i < 3; ++i) c.plant.axes[static_cast<std::size_t>(i)] = {a[i], b[i]};
    s.get("mismatch_pct", c.mismatch_pct);
  }
  if (const Json* j = top.find("pd")) {
    detail::Section s(*j, "pd");
    s.get("kp", c.pd.kp);
    s.get("kd", c.pd.kd);
    s.get("kp_yaw", c.pd.kp_yaw);
    s.get("kd_yaw", c.pd.kd_yaw);
    s.get("actuation_sign", c.actuation_sign);
  }
  if (const Json* j = top.find("excitation")) {
    detail::Section s(*j, "excitation");
    s.get("duration", c.excitation.duration);
    if (const Json* comps = s.find("components")) {
      if (!comps->is_array()) detail::bad("excitation.components", "expected a list");
      c.excitation.components.clear();
      for (const auto& e : *comps) {
        detail::Section cs(e, "excitation.components[]");
        ident::SineComponent sc;
        cs.get("amplitude", sc.amplitude);
        cs.get("freq_hz", sc.freq);
        c.excitation.components.push_back(sc);
      }
    }
  }
  if (const Json* j = top.find("mpc")) {
    detail::Section s(*j, "mpc");
    s.get("N", c.weights.N);
    s.get("Ts", c.Ts);
    s.get("Qx", c.weights.Qx, 6);
    s.get("Qu", c.weights.Qu, 3);
    s.get("Qr", c.weights.Qr, 3);
    s.get("Qfx", c.weights.Qfx, 6);
    s.get("Qfu", c.weights.Qfu, 3);
    s.get("omega_cap", c.omega_cap);
    s.get("use_terminal_set", c.use_terminal_set);
  }
  if (const Json* j = top.find("bounds")) {
    detail::Section s(*j, "bounds");
    s.get("u_max", c.bounds.u_max);
    s.get("yaw_max", c.bounds.yaw_max);
  }
  if (const Json* j = top.find("sim")) {
    detail::Section s(*j, "sim");
    s.get("sensor_rate_hz", c.sensor_rate_hz);
    s.get("noise_sigma", c.noise_sigma);
    s.get("delay_steps", c.delay_steps);
    s.get("seed", c.seed);
    s.get("full_state_feedback", c.full_state_feedback);
  }
  if (const Json* j = top.find("qp")) {
    detail::Section s(*j, "qp");
    s.get("tol", c.qp.tol);
    s.get("max_iter", c.qp.max_iter);
    s.get("rho", c.qp.rho);
    s.get("sigma", c.qp.sigma);
    s.get("relax", c.qp.relax);
    s.get("adapt_interval", c.qp.adapt_interval);
    s.get("check_interval", c.qp.check_interval);
    s.get("scaling_iter", c.qp.scaling_iter);
    s.get("polish", c.qp.polish);
    s.get("infeasibility_tol", c.qp.infeasibility_tol);
  }
  if (const Json* j = top.find("lemniscate")) {
    detail::Section s(*j, "lemniscate");
    s.get("a", c.lemniscate.curve.a);
    s.get("period", c.lemniscate.curve.period);
    s.get("z_ref", c.lemniscate.curve.z_ref);
    s.get("duration", c.lemniscate.duration);
  }
  if (const Json* j = top.find("waypoints")) {
    detail::Section s(*j, "waypoints");
    s.get("duration", c.waypoints.duration);
    if (const Json* pts = s.find("points")) {
      if (!pts->is_array()) detail::bad("waypoints.points", "expected a list");
      c.waypoints.points.clear();
      for (const auto& e : *pts) {
        detail::Section ps(e, "waypoints.points[]");
        sim::Waypoint w;
        ps.get("t", w.t_switch);
        ps.get("r", w.r);
        c.waypoints.points.push_back(w);
      }
    }
  }
  if (const Json* j = top.find("link")) {
    detail::Section s(*j, "link");
    s.get("plant", c.link.plant);
    s.get("controller", c.link.controller);
    s.get("time_scale", c.link.time_scale);
    s.get("hello_timeout", c.link.hello_timeout);
    s.get("packet_timeout", c.link.packet_timeout);
  }
  validate(c);
  return c;
}

inline Json to_json(const Config& c) {
  using detail::to_json;
  Json j;
  j["plant"] = {{"alpha", to_json(Vec3(c.plant.axes[0].alpha, c.plant.axes[1].alpha, c.plant.axes[2].alpha))},
                {"beta", to_json(Vec3(c.plant.axes[0].beta, c.plant.axes[1].beta, c.plant.axes[2].beta))},
                {"mismatch_pct", c.mismatch_pct}};
  j["pd"] = {{"kp", to_json(c.pd.kp)},
             {"kd", to_json(c.pd.kd)},
             {"kp_yaw", c.pd.kp_yaw},
             {"kd_yaw", c.pd.kd_yaw},
             {"actuation_sign", to_json(c.actuation_sign)}};
  Json comps = Json::array();
  for (const auto& sc : c.excitation.components) comps.push_back({{"amplitude", sc.amplitude}, {"freq_hz", sc.freq}});
  j["excitation"] = {{"components", comps}, {"duration", c.excitation.duration}};
  j["mpc"] = {{"N", c.weights.N},
              {"Ts", c.Ts},
              {"Qx", to_json(c.weights.Qx)},
              {"Qu", to_json(c.weights.Qu)},
              {"Qr", to_json(c.weights.Qr)},
              {"Qfx", to_json(c.weights.Qfx)},
              {"Qfu", to_json(c.weights.Qfu)},
              {"omega_cap", c.omega_cap},
              {"use_terminal_set", c.use_terminal_set}};
  j["bounds"] = {{"u_max", to_json(c.bounds.u_max)}, {"yaw_max", c.bounds.yaw_max}};
  j["sim"] = {{"sensor_rate_hz", c.sensor_rate_hz},
              {"noise_sigma", c.noise_sigma},
              {"delay_steps", c.delay_steps},
              {"seed", c.seed},
              {"full_state_feedback", c.full_state_feedback}};
  j["qp"] = {{"tol", c.qp.tol},
             {"max_iter", c.qp.max_iter},
             {"rho", c.qp.rho},
             {"sigma", c.qp.sigma},
             {"relax", c.qp.relax},
             {"adapt_interval", c.qp.adapt_interval},
             {"check_interval", c.qp.check_interval},
             {"scaling_iter", c.qp.scaling_iter},
             {"polish", c.qp.polish},
             {"infeasibility_tol", c.qp.infeasibility_tol}};
  j["lemniscate"] = {{"a", c.lemniscate.curve.a},
                     {"period", c.lemniscate.curve.period},
                     {"z_ref", c.lemniscate.curve.z_ref},
                     {"duration", c.lemniscate.duration}};
  Json pts = Json::array();
  for (const auto& w : c.waypoints.points) pts.push_back({{"t", w.t_switch}, {"r", to_json(w.r)}});
  j["waypoints"] = {{"points", pts}, {"duration", c.waypoints.duration}};
  j["link"] = {{"plant", c.link.plant.str()},
               {"controller", c.link.controller.str()},
               {"time_scale", c.link.time_scale},
               {"hello_timeout", c.link.hello_timeout},
               {"packet_timeout", c.link.packet_timeout}};
  return j;
}

/// Parses JSON text; // and /* */ comments are allowed.
inline Config parse(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCategory::InvalidConfig, std::string("config: ") + e.what());
  }
  return from_json(j);
}

inline Config load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

inline std::string dump(const Config& c) { return to_json(c).dump(2) + "\n"; }

inline void save(const Config& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::Io, "cannot write config " + path);
  out << dump(c);
  if (!out) fail(ErrorCategory::Io, "write failed for " + path);
}

inline bool equivalent(const Config& a, const Config& b) { return to_json(a) == to_json(b); }

}  // namespace quadmpc::config
