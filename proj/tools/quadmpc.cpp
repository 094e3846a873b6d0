// Command-line front end: identification flights, model fitting, controller
// synthesis, offline simulation and the networked plant/controller pair.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "quadmpc/quadmpc.hpp"

namespace fs = std::filesystem;
using namespace quadmpc;
using config::Json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<double> duration;
};

config::Config load_config(const Common& c) {
  config::Config cfg = c.config_path.empty() ? config::Config{} : config::load(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path out_dir(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) fail(ErrorCategory::Io, "cannot create output directory " + c.out + ": " + ec.message());
  return fs::path(c.out);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) fail(ErrorCategory::Io, "cannot write " + p.string());
  return f;
}

void write_text(const fs::path& p, const std::string& text) {
  auto f = open_out(p);
  f << text;
  if (!f) fail(ErrorCategory::Io, "write failed for " + p.string());
}

FlightLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open flight log " + path);
  return read_csv(in);
}

Json vec_json(const Eigen::Ref<const VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat_json(const MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

Vec3 parse_vec3(const std::string& s, const std::string& what) {
  std::stringstream ss(s);
  std::string cell;
  std::vector<double> v;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == cell.size() && !cell.empty(), what + ": bad number '" + cell + "'");
    v.push_back(x);
  }
  require(v.size() == 3, what + ": expected x,y,z");
  return Vec3(v[0], v[1], v[2]);
}

// "t:x,y,z"
sim::Waypoint parse_waypoint(const std::string& s) {
  const auto colon = s.find(':');
  require(colon != std::string::npos, "--waypoint expects t:x,y,z");
  sim::Waypoint w;
  try {
    w.t_switch = std::stod(s.substr(0, colon));
  } catch (const std::exception&) {
    fail(ErrorCategory::InvalidArgument, "--waypoint: bad switch time in '" + s + "'");
  }
  w.r = parse_vec3(s.substr(colon + 1), "--waypoint");
  return w;
}

// ---------------------------------------------------------------- excite

struct ExciteArgs {
  Common c;
  std::string axes = "xyz";
};

int run_excite(const ExciteArgs& a) {
  const auto cfg = load_config(a.c);
  const auto dir = out_dir(a.c);
  auto sc = config::identification_sim_config(cfg);
  for (char ch : a.axes) {
    Axis axis = Axis::X;
    if (ch == 'x') axis = Axis::X;
    else if (ch == 'y') axis = Axis::Y;
    else if (ch == 'z') axis = Axis::Z;
    else fail(ErrorCategory::InvalidArgument, std::string("--axes: unknown axis '") + ch + "'");
    ident::ExcitationSpec spec = cfg.excitation;
    spec.axis = axis;
    if (a.c.duration) spec.duration = *a.c.duration;
    const auto run = sim::run_closed_loop(sc, sim::excitation_scenario(spec),
                                          sim::PdController{cfg.pd, cfg.actuation_sign});
    FlightLog log = run.log;
    if (log.size() >= 3) derive_columns(log);
    const auto path = dir / (std::string("excite_") + ch + ".csv");
    auto f = open_out(path);
    write_csv(f, log);
    std::cout << "wrote " << path.string() << " (" << log.size() << " samples)\n";
  }
  return 0;
}

// ---------------------------------------------------------------- identify

struct IdentifyArgs {
  Common c;
  std::vector<std::string> logs;
  std::string in_dir;
};

int run_identify(const IdentifyArgs& a) {
  const auto cfg = load_config(a.c);
  std::vector<std::string> paths = a.logs;
  if (paths.empty()) {
    const fs::path in = a.in_dir.empty() ? fs::path(a.c.out) : fs::path(a.in_dir);
    for (const char* ch : {"x", "y", "z"}) paths.push_back((in / (std::string("excite_") + ch + ".csv")).string());
  }
  require(paths.size() == 3, "identify: expected three logs (x, y, z)");
  const std::array<FlightLog, 3> logs{read_log(paths[0]), read_log(paths[1]), read_log(paths[2])};
  const auto res = ident::identify(logs[0], logs[1], logs[2]);
  const auto dir = out_dir(a.c);

  std::cout << "axis  alpha_hat     beta_hat      ref_alpha  ref_beta   err_alpha%  err_beta%  residual_rms  rows\n";
  Json fits = Json::array();
  for (Axis ax : kAxes) {
    const auto& f = res.fits[static_cast<std::size_t>(index(ax))];
    const auto& ref = cfg.plant[ax];
    const double ea = 100.0 * std::abs(f.alpha_hat - ref.alpha) / std::abs(ref.alpha);
    const double eb = 100.0 * std::abs(f.beta_hat - ref.beta) / std::abs(ref.beta);
    std::printf("%c     %-12.6f  %-12.6f  %-9.4f  %-9.4f  %-10.4f  %-9.4f  %-12.4e  %zu\n", axis_name(ax), f.alpha_hat,
                f.beta_hat, ref.alpha, ref.beta, ea, eb, f.residual_rms, f.sample_count);
    fits.push_back({{"axis", std::string(1, axis_name(ax))},
                    {"alpha", f.alpha_hat},
                    {"beta", f.beta_hat},
                    {"residual_rms", f.residual_rms},
                    {"rows", f.sample_count},
                    {"alpha_error_pct", ea},
                    {"beta_error_pct", eb}});

    const auto& log = logs[static_cast<std::size_t>(index(ax))];
    const auto rep = sigproc::linearity_report(log.input(ax), log.position(ax), cfg.excitation.probe_freqs());
    const auto path = dir / (std::string("linearity_") + axis_name(ax) + ".csv");
    auto out = open_out(path);
    sigproc::write_csv(out, rep);
    std::printf("      linearity: in-band output energy %.4f, off-probe input energy %.4f%s\n",
                rep.in_band_energy_fraction, rep.input_off_probe_fraction,
                rep.nonlinear ? "  [flag: input not confined to probe frequencies]" : "");
  }

  // The model file is a config fragment: it can be merged into a config's "plant" section.
  Json model = {{"plant",
                 {{"alpha", {res.model.axes[0].alpha, res.model.axes[1].alpha, res.model.axes[2].alpha}},
                  {"beta", {res.model.axes[0].beta, res.model.axes[1].beta, res.model.axes[2].beta}}}}};
  write_text(dir / "model.json", model.dump(2) + "\n");
  write_text(dir / "fits.json", fits.dump(2) + "\n");
  std::cout << "wrote " << (dir / "model.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- discretize

struct DiscretizeArgs {
  Common c;
  std::optional<double> Ts;
};

int run_discretize(const DiscretizeArgs& a) {
  const auto cfg = load_config(a.c);
  const double Ts = a.Ts.value_or(cfg.Ts);
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = model::zoh_discretize(cfg.plant, Ts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto dir = out_dir(a.c);
  Json j = {{"Ts", Ts}, {"A", mat_json(d.A)}, {"B", mat_json(d.B)}, {"C", mat_json(d.C)}};

  std::cout << std::setprecision(6) << std::fixed;
  std::cout << "A_d =\n" << d.A << "\nB_d =\n" << d.B << "\n";
  if (cfg.plant == model::bebop2_model() && std::abs(Ts - 0.2) < 1e-12) {
    const auto ref = model::bebop2_reference_discretization();
    std::cout << "\ncomparison with the published Bebop 2 matrices (Ts = 0.2 s)\n";
    std::cout << "entry      computed     published    abs_diff\n";
    double worst = 0.0;
    const auto row = [&](const char* name, Eigen::Index i, Eigen::Index k, double mine, double theirs) {
      if (mine == 0.0 && theirs == 0.0) return;
      const double diff = std::abs(mine - theirs);
      worst = std::max(worst, diff);
      std::printf("%s(%ld,%ld)   %+.6f   %+.6f   %.2e\n", name, static_cast<long>(i + 1), static_cast<long>(k + 1),
                  mine, theirs, diff);
    };
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index k = 0; k < 6; ++k) row("A", i, k, d.A(i, k), ref.A(i, k));
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index k = 0; k < 3; ++k) row("B", i, k, d.B(i, k), ref.B(i, k));
    std::printf("max_abs_diff %.3e (%s 1e-3)\n", worst, worst <= 1e-3 ? "within" : "EXCEEDS");
    j["published_max_abs_diff"] = worst;
  }
  write_text(dir / "discrete_model.json", j.dump(2) + "\n");
  std::printf("elapsed %.3e s\n", secs);
  return 0;
}

// ---------------------------------------------------------------- synthesize

struct SynthesizeArgs {
  Common c;
  int samples = 1000;
};

int run_synthesize(const SynthesizeArgs& a) {
  const auto cfg = load_config(a.c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto setup = mpc::synthesize(model::zoh_discretize(cfg.plant, cfg.Ts), cfg.weights, cfg.bounds,
                                     config::synthesis_options(cfg));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& T = setup.terminal;
  const auto inv = mpc::check_terminal_invariance(setup, a.samples, static_cast<unsigned>(cfg.seed));
  const bool ok = T.dare_residual <= 1e-8 && T.closed_loop_radius < 1 && T.set.omega_star <= cfg.omega_cap &&
                  inv.violations == 0;

  const auto dir = out_dir(a.c);
  Json art = {{"Ts", cfg.Ts},
              {"N", cfg.weights.N},
              {"A", mat_json(setup.model.A)},
              {"B", mat_json(setup.model.B)},
              {"C", mat_json(setup.model.C)},
              {"M", mat_json(setup.maps.M)},
              {"L", mat_json(setup.maps.L)},
              {"W", mat_json(setup.maps.W)},
              {"QN", mat_json(T.QN)},
              {"K", mat_json(T.K)},
              {"omega_star", T.set.omega_star},
              {"terminal_set", {{"Hx", mat_json(T.set.Hx)}, {"Htheta", mat_json(T.set.Htheta)}, {"h", vec_json(T.set.hbound)}}}};
  write_text(dir / "setup.json", art.dump(2) + "\n");
  Json cert = {{"dare_residual", T.dare_residual},
               {"closed_loop_spectral_radius", T.closed_loop_radius},
               {"omega_star", T.set.omega_star},
               {"redundancy_lps", T.set.lp_count},
               {"terminal_constraints", T.set.hbound.size()},
               {"invariance_samples", inv.samples},
               {"invariance_violations", inv.violations},
               {"invariance_max_violation", inv.max_violation},
               {"synthesis_seconds", secs},
               {"certified", ok}};
  write_text(dir / "certification.json", cert.dump(2) + "\n");

  std::printf("DARE residual           %.3e\n", T.dare_residual);
  std::printf("spectral radius A+BK    %.6f\n", T.closed_loop_radius);
  std::printf("determinacy index       %d  (%d redundancy LPs, %ld constraints)\n", T.set.omega_star, T.set.lp_count,
              static_cast<long>(T.set.hbound.size()));
  std::printf("invariance test         %d samples, %d violations, max excess %.3e\n", inv.samples, inv.violations,
              inv.max_violation);
  std::printf("synthesis time          %.3e s\n", secs);
  std::printf("certified               %s\n", ok ? "yes" : "no");
  if (!ok) fail(ErrorCategory::InvariantViolation, "terminal ingredients failed certification");
  return 0;
}

// ---------------------------------------------------------------- simulate / track / fly

struct ScenarioArgs {
  std::string kind;
  std::optional<std::string> target;
  std::vector<std::string> waypoints;
  std::optional<std::string> start;
};

struct ResolvedScenario {
  sim::Scenario scenario;
  Vec3 start = Vec3::Zero();
  std::string name;
};

ResolvedScenario resolve(const config::Config& cfg, const Common& c, const ScenarioArgs& s) {
  ResolvedScenario r;
  r.name = s.kind;
  if (s.kind == "lemniscate") {
    r.scenario = config::lemniscate_scenario(cfg);
    if (c.duration) r.scenario.duration = *c.duration;
    r.start = sim::reference_at(r.scenario, 0.0).r;
  } else if (s.kind == "waypoint") {
    auto w = cfg.waypoints;
    if (!s.waypoints.empty()) {
      w.points.clear();
      for (const auto& p : s.waypoints) w.points.push_back(parse_waypoint(p));
    }
    if (s.target) w.points = {{0.0, parse_vec3(*s.target, "--target")}};
    r.scenario = sim::waypoint_scenario(w.points, c.duration.value_or(w.duration));
  } else {
    fail(ErrorCategory::InvalidArgument, "--scenario must be 'waypoint' or 'lemniscate'");
  }
  if (s.start) r.start = parse_vec3(*s.start, "--start");
  return r;
}

Json summary_json(const sim::RunSummary& s, const std::string& name, bool aborted, const std::string& error) {
  return {{"scenario", name},
          {"samples", s.samples},
          {"control_steps", s.control_steps},
          {"final_error", vec_json(s.final_error)},
          {"window_error_inf", s.window_error},
          {"rms_lateral_error", s.rms_lateral_error},
          {"max_abs_input", vec_json(s.max_abs_input)},
          {"max_bound_excess", s.max_bound_excess},
          {"all_optimal", s.all_optimal},
          {"max_kkt_residual", s.max_kkt},
          {"max_iterations", s.max_iterations},
          {"solve_time_mean", s.solve_mean},
          {"solve_time_std", s.solve_std},
          {"solve_time_max", s.solve_max},
          {"aborted", aborted},
          {"error", error}};
}

void write_tracking(const fs::path& dir, const FlightLog& log) {
  {
    auto f = open_out(dir / "tracking.csv");
    f.precision(10);
    f << "t,ref_x,pos_x,err_x,ref_y,pos_y,err_y,ref_z,pos_z,err_z\n";
    for (const auto& r : log.rows) {
      f << r.t;
      for (int i = 0; i < 3; ++i) f << ',' << r.ref[i] << ',' << r.pos[i] << ',' << (r.pos[i] - r.ref[i]);
      f << '\n';
    }
  }
  auto f = open_out(dir / "path3d.csv");
  f.precision(10);
  f << "t,x,y,z,ref_x,ref_y,ref_z\n";
  for (const auto& r : log.rows)
    f << r.t << ',' << r.pos[0] << ',' << r.pos[1] << ',' << r.pos[2] << ',' << r.ref[0] << ',' << r.ref[1] << ','
      << r.ref[2] << '\n';
}

void print_summary(const sim::RunSummary& s) {
  std::printf("samples %zu, control steps %zu\n", s.samples, s.control_steps);
  std::printf("final-window position error (inf-norm)  %.5f m\n", s.window_error);
  std::printf("RMS lateral error                        %.5f m\n", s.rms_lateral_error);
  std::printf("max |u| applied                          %.4f %.4f %.4f\n", s.max_abs_input[0], s.max_abs_input[1],
              s.max_abs_input[2]);
  std::printf("QP status all optimal                    %s (max KKT %.2e, max iterations %d)\n",
              s.all_optimal ? "yes" : "no", s.max_kkt, s.max_iterations);
  std::printf("solve time per step                      %.4f +- %.4f s (max %.4f)\n", s.solve_mean, s.solve_std,
              s.solve_max);
}

struct SimulateArgs {
  Common c;
  ScenarioArgs s;
};

int run_simulate(const SimulateArgs& a) {
  const auto cfg = load_config(a.c);
  const auto rs = resolve(cfg, a.c, a.s);
  const auto setup = mpc::synthesize(model::zoh_discretize(cfg.plant, cfg.Ts), cfg.weights, cfg.bounds,
                                     config::synthesis_options(cfg));
  auto sc = config::sim_config(cfg);
  sc.initial_position = rs.start;
  sim::MpcController ctrl{&setup, cfg.pd};
  const auto run = sim::run_closed_loop(sc, rs.scenario, ctrl);
  const auto s = sim::summarize(run, cfg.bounds);
  const auto dir = out_dir(a.c);
  {
    auto f = open_out(dir / "flight_log.csv");
    write_csv(f, run.log);
  }
  write_tracking(dir, run.log);
  write_text(dir / "summary.json", summary_json(s, rs.name, run.aborted, run.error).dump(2) + "\n");
  print_summary(s);
  if (run.aborted) fail(run.error_category, "run aborted: " + run.error);
  return 0;
}

struct ServeArgs {
  Common c;
  std::optional<std::string> plant, controller;
  std::optional<double> time_scale;
  ScenarioArgs s;
};

link::LinkOptions link_options(const config::Config& cfg, const ServeArgs& a) {
  auto o = cfg.link;
  if (a.plant) o.plant = link::parse_endpoint(*a.plant);
  if (a.controller) o.controller = link::parse_endpoint(*a.controller);
  if (a.time_scale) o.time_scale = *a.time_scale;
  return o;
}

int run_serve_plant(const ServeArgs& a) {
  const auto cfg = load_config(a.c);
  const auto rs = resolve(cfg, a.c, a.s);
  auto sc = config::sim_config(cfg);
  sc.initial_position = rs.start;
  const auto opt = link_options(cfg, a);
  std::cout << "plant listening on " << opt.plant.str() << ", publishing to " << opt.controller.str() << std::endl;
  const auto res = link::serve_plant(sc, rs.scenario.duration, opt);
  const auto dir = out_dir(a.c);
  {
    auto f = open_out(dir / "plant_log.csv");
    write_csv(f, res.log);
  }
  std::printf("poses sent %zu, commands received %zu, applied %zu, stale dropped %zu, malformed %zu, missed %zu\n",
              res.poses_sent, res.commands_received, res.commands_applied, res.stale_dropped, res.malformed,
              res.missed_deadlines);
  return 0;
}

int run_fly(const ServeArgs& a) {
  const auto cfg = load_config(a.c);
  const auto rs = resolve(cfg, a.c, a.s);
  const auto setup = mpc::synthesize(model::zoh_discretize(cfg.plant, cfg.Ts), cfg.weights, cfg.bounds,
                                     config::synthesis_options(cfg));
  auto sc = config::sim_config(cfg);
  sc.initial_position = rs.start;
  const auto opt = link_options(cfg, a);
  const auto res = link::fly(setup, rs.scenario, sc, opt, cfg.pd);
  sim::RunResult rr;
  rr.log = res.log;
  rr.steps = res.steps;
  rr.aborted = res.aborted;
  rr.error = res.error;
  const auto s = sim::summarize(rr, cfg.bounds);
  const auto dir = out_dir(a.c);
  {
    auto f = open_out(dir / "flight_log.csv");
    write_csv(f, res.log);
  }
  write_tracking(dir, res.log);
  Json j = summary_json(s, rs.name, res.aborted, res.error);
  j["link"] = {{"poses_received", res.poses_received},
               {"stale_dropped", res.stale_dropped},
               {"malformed", res.malformed},
               {"commands_sent", res.commands_sent},
               {"compute_latency_mean", res.compute.mean},
               {"compute_latency_std", res.compute.stddev},
               {"round_trip_mean", res.round_trip.mean},
               {"round_trip_std", res.round_trip.stddev},
               {"round_trip_max", res.round_trip.max}};
  write_text(dir / "summary.json", j.dump(2) + "\n");
  print_summary(s);
  std::printf("round trip %.2e +- %.2e s (max %.2e), compute %.2e +- %.2e s\n", res.round_trip.mean,
              res.round_trip.stddev, res.round_trip.max, res.compute.mean, res.compute.stddev);
  if (res.aborted) fail(ErrorCategory::Infeasible, "flight aborted: " + res.error);
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool with_duration = true) {
  sub->add_option("--config", c.config_path, "Configuration file (JSON, comments allowed)");
  sub->add_option("--seed", c.seed, "Override the random seed");
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  if (with_duration) sub->add_option("--duration", c.duration, "Override the run duration [s]");
}

void add_scenario(CLI::App* sub, ScenarioArgs& s, const std::string& default_kind) {
  s.kind = default_kind;
  sub->add_option("--scenario", s.kind, "waypoint or lemniscate")
      ->check(CLI::IsMember({"waypoint", "lemniscate"}))
      ->capture_default_str();
  sub->add_option("--target", s.target, "Single waypoint x,y,z held from t=0");
  sub->add_option("--waypoint", s.waypoints, "Waypoint t:x,y,z (repeatable; first must be at t=0)");
  sub->add_option("--start", s.start, "Initial position x,y,z");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steady-state-tracking MPC for a quadrotor: identification, synthesis, simulation"};
  app.require_subcommand(1);

  ExciteArgs ex;
  auto* s_ex = app.add_subcommand("excite", "Fly PD-controlled multi-sine excitation per axis and write flight logs");
  add_common(s_ex, ex.c);
  s_ex->add_option("--axes", ex.axes, "Axes to excite")->capture_default_str();

  IdentifyArgs id;
  auto* s_id = app.add_subcommand("identify", "Fit per-axis (alpha, beta) from excitation logs");
  add_common(s_id, id.c, false);
  s_id->add_option("logs", id.logs, "Logs for the x, y and z axes (default: <in>/excite_{x,y,z}.csv)");
  s_id->add_option("--in", id.in_dir, "Directory holding excite_{x,y,z}.csv (default: --out)");

  DiscretizeArgs dz;
  auto* s_dz = app.add_subcommand("discretize", "Zero-order-hold discretization of the plant model");
  add_common(s_dz, dz.c, false);
  s_dz->add_option("--Ts", dz.Ts, "Sampling period [s] (default: config)");

  SynthesizeArgs sy;
  auto* s_sy = app.add_subcommand("synthesize", "Compute terminal ingredients and certify them");
  add_common(s_sy, sy.c, false);
  s_sy->add_option("--samples", sy.samples, "Invariance test samples")->capture_default_str();

  SimulateArgs sm, tr;
  auto* s_sm = app.add_subcommand("simulate", "Offline MPC run (default scenario: waypoint)");
  add_common(s_sm, sm.c);
  add_scenario(s_sm, sm.s, "waypoint");
  auto* s_tr = app.add_subcommand("track", "Offline MPC run (default scenario: lemniscate)");
  add_common(s_tr, tr.c);
  add_scenario(s_tr, tr.s, "lemniscate");

  ServeArgs sp, fl;
  for (auto [name, args, desc, kind] :
       {std::tuple{"serve-plant", &sp, "Run the simulated plant behind UDP", "lemniscate"},
        std::tuple{"fly", &fl, "Run the MPC controller against a UDP plant", "lemniscate"}}) {
    auto* sub = app.add_subcommand(name, desc);
    add_common(sub, args->c);
    add_scenario(sub, args->s, kind);
    sub->add_option("--plant", args->plant, "Plant address host:port");
    sub->add_option("--controller", args->controller, "Controller address host:port");
    sub->add_option("--time-scale", args->time_scale, "Wall seconds per simulated second (0: lockstep)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_ex) return run_excite(ex);
    if (*s_id) return run_identify(id);
    if (*s_dz) return run_discretize(dz);
    if (*s_sy) return run_synthesize(sy);
    if (*s_sm) return run_simulate(sm);
    if (*s_tr) return run_simulate(tr);
    if (*app.get_subcommand("serve-plant")) return run_serve_plant(sp);
    if (*app.get_subcommand("fly")) return run_fly(fl);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
