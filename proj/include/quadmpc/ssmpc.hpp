#pragma once

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "quadmpc/axis_model.hpp"
#include "quadmpc/error.hpp"
#include "quadmpc/qp.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::mpc {

/// x+ = A x + B u, y = C x. Dynamic-size so small hand-checkable systems run
/// through the same code as the 6-state quadrotor.
struct LinearSystem {
  MatrixXd A, B, C;
  double Ts = 0.2;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }
};

inline LinearSystem to_linear_system(const model::DiscreteModel& d) {
  return LinearSystem{d.A, d.B, d.C, d.Ts};
}

inline double spectral_radius(const MatrixXd& M) {
  return Eigen::EigenSolver<MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
}

inline bool controllable(const MatrixXd& A, const MatrixXd& B) {
  const auto n = A.rows(), m = B.cols();
  MatrixXd ctrb(n, n * m);
  MatrixXd blk = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = blk;
    blk = A * blk;
  }
  Eigen::FullPivLU<MatrixXd> lu(ctrb);
  lu.setThreshold(1e-10);
  return lu.rank() == n;
}

/// Steady-state characterization: x_f = M theta, u_f = W theta, r = L theta.
struct SteadyStateMaps {
  MatrixXd M, L, W;
};

/// Solves [A - I, B; C, 0] [M; W] = [0; L] with L = I.
inline SteadyStateMaps build_maps(const LinearSystem& sys) {
  const auto n = sys.states(), m = sys.inputs(), p = sys.outputs();
  require(controllable(sys.A, sys.B), "build_maps: (A, B) is not controllable",
          ErrorCategory::InvariantViolation);
  MatrixXd lhs = MatrixXd::Zero(n + p, n + m);
  lhs.topLeftCorner(n, n) = sys.A - MatrixXd::Identity(n, n);
  lhs.topRightCorner(n, m) = sys.B;
  lhs.bottomLeftCorner(p, n) = sys.C;
  MatrixXd rhs = MatrixXd::Zero(n + p, p);
  rhs.bottomRows(p) = MatrixXd::Identity(p, p);
  Eigen::FullPivLU<MatrixXd> lu(lhs);
  lu.setThreshold(1e-10);
  if (lu.rank() < n + m || n + m != n + p)
    fail(ErrorCategory::InvariantViolation, "build_maps: steady-state map is rank deficient");
  const MatrixXd sol = lu.solve(rhs);
  SteadyStateMaps maps;
  maps.M = sol.topRows(n);
  maps.W = sol.bottomRows(m);
  maps.L = MatrixXd::Identity(p, p);
  return maps;
}

/// True when the maps take the closed form expected for the decoupled
/// quadrotor model: M = selector', L = I, W = 0.
inline bool has_position_selector_form(const SteadyStateMaps& maps, double tol = 1e-9) {
  if (maps.M.rows() != kStates || maps.M.cols() != kOutputs) return false;
  const MatrixXd sel = model::position_selector().transpose();
  return (maps.M - sel).cwiseAbs().maxCoeff() <= tol && maps.W.cwiseAbs().maxCoeff() <= tol &&
         (maps.L - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= tol;
}

inline MatrixXd riccati_map(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qx,
                            const MatrixXd& Qu, const MatrixXd& Q) {
  const MatrixXd BtQA = B.transpose() * Q * A;
  const MatrixXd S = Qu + B.transpose() * Q * B;
  MatrixXd next = A.transpose() * Q * A - BtQA.transpose() * S.ldlt().solve(BtQA) + Qx;
  return 0.5 * (next + next.transpose());
}

inline double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qx,
                            const MatrixXd& Qu, const MatrixXd& Q) {
  return (riccati_map(A, B, Qx, Qu, Q) - Q).cwiseAbs().maxCoeff();
}

inline constexpr double kDareStepTol = 1e-10;
inline constexpr int kDareMaxIter = 100000;

/// Riccati value iteration from Q0 = Qx.
inline MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qx, const MatrixXd& Qu) {
  require(A.rows() == A.cols() && B.rows() == A.rows() && Qx.rows() == A.rows() &&
              Qu.rows() == B.cols(),
          "solve_dare: dimension mismatch");
  MatrixXd Q = Qx;
  for (int it = 0; it < kDareMaxIter; ++it) {
    MatrixXd next = riccati_map(A, B, Qx, Qu, Q);
    const double step = (next - Q).cwiseAbs().maxCoeff();
    Q = std::move(next);
    if (!Q.allFinite()) break;
    if (step < kDareStepTol) return Q;
  }
  fail(ErrorCategory::NotConverged, "solve_dare: Riccati iteration did not converge");
}

/// K = -(Qu + B'QB)^{-1} B'QA; the closed loop A + BK must be Schur.
inline MatrixXd terminal_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qu, const MatrixXd& QN) {
  const MatrixXd S = Qu + B.transpose() * QN * B;
  Eigen::FullPivLU<MatrixXd> lu(S);
  if (!lu.isInvertible()) fail(ErrorCategory::InvariantViolation, "terminal_gain: Qu + B'QB is singular");
  const MatrixXd K = -lu.solve(B.transpose() * QN * A);
  const double rho = spectral_radius(A + B * K);
  if (!(rho < 1.0))
    fail(ErrorCategory::InvariantViolation,
         "terminal_gain: A + BK is not Schur (spectral radius " + std::to_string(rho) + ")");
  return K;
}

/// Omega = {(x, theta) : Hx x + Htheta theta <= hbound}.
struct TerminalSet {
  MatrixXd Hx, Htheta;
  VectorXd hbound;
  int omega_star = 0;
  int lp_count = 0;
};

// Tightening applied to the bound in the redundancy test.
inline constexpr double kDeterminacyMargin = 1e-6;

/// Maximal admissible set of the terminal law u = K (x - M theta).
///
/// Under that law e = x - M theta evolves as e+ = (A + BK) e (because
/// (A - I) M = -B W = 0), so the constraint at prediction step w is
/// |K (A+BK)^w e| <= u_max. Rows are added step by step until every row of
/// the next step is redundant, tested by maximizing it over the current set.
inline TerminalSet terminal_set(const LinearSystem& sys, const SteadyStateMaps& maps, const MatrixXd& K,
                                const VectorXd& u_max, int omega_cap, const qp::Settings& lp_settings = {}) {
  const auto n = sys.states(), m = sys.inputs();
  require(K.rows() == m && K.cols() == n && u_max.size() == m, "terminal_set: dimension mismatch");
  require(((sys.A - MatrixXd::Identity(n, n)) * maps.M).cwiseAbs().maxCoeff() <= 1e-9,
          "terminal_set: requires (A - I) M = 0", ErrorCategory::InvariantViolation);
  const MatrixXd Acl = sys.A + sys.B * K;
  require(spectral_radius(Acl) < 1.0, "terminal_set: A + BK is not Schur", ErrorCategory::InvariantViolation);

  auto block = [&](const MatrixXd& KAw) {
    MatrixXd rows(2 * m, n);
    rows.topRows(m) = KAw;
    rows.bottomRows(m) = -KAw;
    return rows;
  };
  VectorXd bound_blk(2 * m);
  bound_blk << u_max, u_max;

  MatrixXd KAw = K;
  MatrixXd H = block(KAw);
  VectorXd b = bound_blk;
  TerminalSet out;
  for (int w = 0; w <= omega_cap; ++w) {
    KAw = KAw * Acl;
    bool redundant = true;
    // The stacked set is symmetric, so max(-row) = max(row).
    for (Eigen::Index i = 0; i < m && redundant; ++i) {
      const VectorXd c = KAw.row(i).transpose();
      if (c.lpNorm<Eigen::Infinity>() < 1e-15) continue;
      const qp::Solution s = qp::solve_lp(c, H, b, lp_settings);
      ++out.lp_count;
      if (s.status != qp::Status::Optimal || s.objective > u_max[i] - kDeterminacyMargin) redundant = false;
    }
    if (redundant) {
      out.omega_star = w;
      out.Hx = H;
      out.Htheta = -H * maps.M;
      out.hbound = b;
      return out;
    }
    MatrixXd H2(H.rows() + 2 * m, n);
    H2 << H, block(KAw);
    H = std::move(H2);
    VectorXd b2(b.size() + 2 * m);
    b2 << b, bound_blk;
    b = std::move(b2);
  }
  fail(ErrorCategory::NotConverged,
       "terminal_set: determinacy index exceeds omega_cap=" + std::to_string(omega_cap) + " (" +
           std::to_string(H.rows()) + " rows stacked)");
}

struct MpcWeights {
  int N = 10;
  MatrixXd Qx = 5.0 * MatrixXd::Identity(6, 6);
  MatrixXd Qu = Eigen::Vector3d(35.0, 20.0, 1.0).asDiagonal();
  MatrixXd Qr = 500.0 * MatrixXd::Identity(3, 3);
  MatrixXd Qfx = MatrixXd::Identity(6, 6);
  MatrixXd Qfu = MatrixXd::Identity(3, 3);
};

inline void validate(const MpcWeights& w, Eigen::Index n, Eigen::Index m, Eigen::Index p) {
  require(w.N >= 1, "weights: horizon must be >= 1", ErrorCategory::InvalidConfig);
  const auto check = [](const MatrixXd& Q, Eigen::Index dim, bool definite, const char* name) {
    require(Q.rows() == dim && Q.cols() == dim, std::string("weights: ") + name + " has wrong size",
            ErrorCategory::InvalidConfig);
    require(Q.allFinite() && (Q - Q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()),
            std::string("weights: ") + name + " must be symmetric", ErrorCategory::InvalidConfig);
    const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(Q).eigenvalues().minCoeff();
    const double floor = 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff());
    require(definite ? lmin > floor : lmin >= -floor,
            std::string("weights: ") + name + (definite ? " must be positive definite" : " must be PSD"),
            ErrorCategory::InvalidConfig);
  };
  check(w.Qx, n, false, "Qx");
  check(w.Qu, m, true, "Qu");
  check(w.Qr, p, true, "Qr");
  check(w.Qfx, n, false, "Qfx");
  check(w.Qfu, m, false, "Qfu");
}

struct TerminalIngredients {
  MatrixXd QN, K;
  TerminalSet set;
  double dare_residual = 0.0;
  double closed_loop_radius = 0.0;
};

/// Condensed QP data that do not depend on the measured state or reference.
/// With z = [u(0); ...; u(N-1); theta]:
///   J = 0.5 z'Hz + (Fx x + Fr r)'z + x'Cxx x + r'Crr r
///   G z <= h0 + Hhx x
struct Condensed {
  MatrixXd H, Fx, Fr, Cxx, Crr, G, Hhx;
  VectorXd h0;
  std::vector<MatrixXd> Phi;    // A^s, s = 0..N
  std::vector<MatrixXd> Gamma;  // x(s) = Phi_s x + Gamma_s z (zero theta columns)
};

struct MpcSetup {
  LinearSystem model;
  SteadyStateMaps maps;
  MpcWeights weights;
  TerminalIngredients terminal;
  VectorXd u_max;
  MatrixXd Xdes;  // x_des = Xdes r
  Condensed cache;
  qp::Settings qp_settings;
  bool use_terminal_set = true;

  Eigen::Index num_vars() const { return model.inputs() * weights.N + model.outputs(); }
};

namespace detail {

inline MatrixXd select_input(Eigen::Index s, Eigen::Index m, Eigen::Index nz) {
  MatrixXd S = MatrixXd::Zero(m, nz);
  S.middleCols(s * m, m) = MatrixXd::Identity(m, m);
  return S;
}

inline MatrixXd select_theta(Eigen::Index m, Eigen::Index N, Eigen::Index p, Eigen::Index nz) {
  MatrixXd S = MatrixXd::Zero(p, nz);
  S.middleCols(m * N, p) = MatrixXd::Identity(p, p);
  return S;
}

}  // namespace detail

inline Condensed build_condensed(const MpcSetup& s) {
  const auto& sys = s.model;
  const auto n = sys.states(), m = sys.inputs(), p = sys.outputs();
  const Eigen::Index N = s.weights.N;
  const Eigen::Index nz = m * N + p;
  Condensed c;
  c.Phi.resize(N + 1);
  c.Gamma.resize(N + 1);
  c.Phi[0] = MatrixXd::Identity(n, n);
  c.Gamma[0] = MatrixXd::Zero(n, nz);
  for (Eigen::Index k = 1; k <= N; ++k) {
    c.Phi[k] = sys.A * c.Phi[k - 1];
    c.Gamma[k] = sys.A * c.Gamma[k - 1];
    c.Gamma[k].middleCols((k - 1) * m, m) += sys.B;
  }
  const MatrixXd St = detail::select_theta(m, N, p, nz);
  const MatrixXd MSt = s.maps.M * St;
  const MatrixXd WSt = s.maps.W * St;
  const auto& w = s.weights;

  MatrixXd Ht = MatrixXd::Zero(nz, nz);  // J = z'Ht z + 2 z'(gx x + gr r) + const
  MatrixXd gx = MatrixXd::Zero(nz, n), gr = MatrixXd::Zero(nz, p);
  c.Cxx = MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k <= N; ++k) {
    const MatrixXd& Q = k < N ? w.Qx : s.terminal.QN;
    const MatrixXd E = c.Gamma[k] - MSt;
    Ht += E.transpose() * Q * E;
    gx += E.transpose() * Q * c.Phi[k];
    c.Cxx += c.Phi[k].transpose() * Q * c.Phi[k];
  }
  for (Eigen::Index k = 0; k < N; ++k) {
    const MatrixXd V = detail::select_input(k, m, nz) - WSt;
    Ht += V.transpose() * w.Qu * V;
  }
  const MatrixXd LSt = s.maps.L * St;
  Ht += LSt.transpose() * w.Qr * LSt;
  gr -= LSt.transpose() * w.Qr;
  Ht += MSt.transpose() * w.Qfx * MSt;
  gr -= MSt.transpose() * w.Qfx * s.Xdes;
  Ht += WSt.transpose() * w.Qfu * WSt;  // u_des = 0
  c.Crr = w.Qr + s.Xdes.transpose() * w.Qfx * s.Xdes;

  c.H = 2.0 * Ht;
  c.H = 0.5 * (c.H + c.H.transpose());
  c.Fx = 2.0 * gx;
  c.Fr = 2.0 * gr;

  const Eigen::Index n_box = 2 * m * N;
  const Eigen::Index n_term = s.use_terminal_set ? s.terminal.set.hbound.size() : 0;
  c.G = MatrixXd::Zero(n_box + n_term, nz);
  c.h0 = VectorXd::Zero(n_box + n_term);
  c.Hhx = MatrixXd::Zero(n_box + n_term, n);
  for (Eigen::Index k = 0; k < N; ++k) {
    const MatrixXd S = detail::select_input(k, m, nz);
    c.G.middleRows(2 * m * k, m) = S;
    c.G.middleRows(2 * m * k + m, m) = -S;
    c.h0.segment(2 * m * k, m) = s.u_max;
    c.h0.segment(2 * m * k + m, m) = s.u_max;
  }
  if (n_term > 0) {
    const auto& T = s.terminal.set;
    c.G.bottomRows(n_term) = T.Hx * c.Gamma[N] + T.Htheta * St;
    c.h0.tail(n_term) = T.hbound;
    c.Hhx.bottomRows(n_term) = -T.Hx * c.Phi[N];
  }
  return c;
}

/// Default quadrotor weights and bounds.
inline MpcWeights bebop2_weights() { return MpcWeights{}; }

struct SynthesisOptions {
  int omega_cap = 200;
  qp::Settings qp_settings{};
  bool use_terminal_set = true;
};

/// DARE terminal cost, terminal gain, maximal admissible terminal set, and the
/// cached condensed matrices.
inline MpcSetup synthesize(const LinearSystem& sys, const MpcWeights& weights, const VectorXd& u_max,
                           const SynthesisOptions& opt = {}) {
  const auto n = sys.states(), m = sys.inputs(), p = sys.outputs();
  validate(weights, n, m, p);
  require(u_max.size() == m && (u_max.array() > 0).all(), "synthesize: input bounds must be positive",
          ErrorCategory::InvalidConfig);
  MpcSetup s;
  s.model = sys;
  s.weights = weights;
  s.u_max = u_max;
  s.qp_settings = opt.qp_settings;
  s.use_terminal_set = opt.use_terminal_set;
  s.maps = build_maps(sys);
  s.Xdes = sys.C.transpose();
  s.terminal.QN = solve_dare(sys.A, sys.B, weights.Qx, weights.Qu);
  s.terminal.dare_residual = dare_residual(sys.A, sys.B, weights.Qx, weights.Qu, s.terminal.QN);
  s.terminal.K = terminal_gain(sys.A, sys.B, weights.Qu, s.terminal.QN);
  s.terminal.closed_loop_radius = spectral_radius(sys.A + sys.B * s.terminal.K);
  if (opt.use_terminal_set)
    s.terminal.set = terminal_set(sys, s.maps, s.terminal.K, u_max, opt.omega_cap, opt.qp_settings);
  s.cache = build_condensed(s);
  return s;
}

inline MpcSetup synthesize(const model::DiscreteModel& d, const MpcWeights& weights, const InputBounds& bounds,
                           const SynthesisOptions& opt = {}) {
  return synthesize(to_linear_system(d), weights, VectorXd(bounds.u_max), opt);
}

/// Builds the QP for the current measured state and reference.
inline qp::Problem condense(const MpcSetup& s, const VectorXd& x_now, const VectorXd& r) {
  require(x_now.size() == s.model.states() && r.size() == s.model.outputs(), "condense: dimension mismatch");
  const auto& c = s.cache;
  qp::Problem p;
  p.H = c.H;
  p.f = c.Fx * x_now + c.Fr * r;
  p.G = c.G;
  p.h = c.h0 + c.Hhx * x_now;
  p.offset = x_now.dot(c.Cxx * x_now) + r.dot(c.Crr * r);
  return p;
}

/// Cost evaluated by forward simulation of the predictions, independent of the
/// condensed matrices.
inline double evaluate_cost(const MpcSetup& s, const VectorXd& x_now, const VectorXd& r, const VectorXd& z) {
  const auto m = s.model.inputs(), p = s.model.outputs();
  const Eigen::Index N = s.weights.N;
  const VectorXd theta = z.segment(m * N, p);
  const VectorXd xs = s.maps.M * theta, us = s.maps.W * theta;
  const auto sq = [](const VectorXd& v, const MatrixXd& Q) { return v.dot(Q * v); };
  double J = 0.0;
  VectorXd x = x_now;
  for (Eigen::Index k = 0; k < N; ++k) {
    const VectorXd u = z.segment(m * k, m);
    J += sq(x - xs, s.weights.Qx) + sq(u - us, s.weights.Qu);
    x = s.model.A * x + s.model.B * u;
  }
  J += sq(x - xs, s.terminal.QN);
  J += sq(r - s.maps.L * theta, s.weights.Qr);
  J += sq(xs - s.Xdes * r, s.weights.Qfx);
  J += sq(us, s.weights.Qfu);
  return J;
}

/// Terminal state x(N|k) for decision vector z.
inline VectorXd predict_terminal(const MpcSetup& s, const VectorXd& x_now, const VectorXd& z) {
  return s.cache.Phi.back() * x_now + s.cache.Gamma.back() * z;
}

/// Shifted previous solution with the terminal law appended and theta reused.
inline VectorXd shifted_candidate(const MpcSetup& s, const VectorXd& x_prev, const VectorXd& z_prev) {
  const auto m = s.model.inputs(), p = s.model.outputs();
  const Eigen::Index N = s.weights.N;
  VectorXd z(z_prev.size());
  z.head(m * (N - 1)) = z_prev.segment(m, m * (N - 1));
  const VectorXd theta = z_prev.segment(m * N, p);
  const VectorXd xN = predict_terminal(s, x_prev, z_prev);
  z.segment(m * (N - 1), m) = s.terminal.K * (xN - s.maps.M * theta);
  z.segment(m * N, p) = theta;
  return z;
}

struct StepDiagnostics {
  qp::Status status = qp::Status::MaxIter;
  double objective = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  qp::KktResiduals kkt{};
  bool polished = false;
};

struct StepResult {
  VectorXd u_apply;
  VectorXd theta;
  StepDiagnostics diag;
  qp::Solution solution;
  VectorXd x_now;
};

/// Warm start carried between consecutive mpc_step calls.
struct WarmState {
  bool valid = false;
  VectorXd x_prev;
  VectorXd z_prev;
};

/// Solves the condensed QP and returns u*(0|k). Infeasible or non-converged
/// solves throw with the state dumped into the message.
inline StepResult mpc_step(const MpcSetup& s, const VectorXd& x_now, const VectorXd& r, WarmState* warm = nullptr) {
  const auto m = s.model.inputs(), p = s.model.outputs();
  const qp::Problem prob = condense(s, x_now, r);
  qp::WarmStart ws;
  const bool use_warm = warm && warm->valid;
  if (use_warm) ws.z = shifted_candidate(s, warm->x_prev, warm->z_prev);

  const auto t0 = std::chrono::steady_clock::now();
  qp::Solution sol = qp::solve(prob, s.qp_settings, use_warm ? &ws : nullptr);
  const auto t1 = std::chrono::steady_clock::now();

  StepResult out;
  out.x_now = x_now;
  out.diag.status = sol.status;
  out.diag.iterations = sol.iterations;
  out.diag.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.diag.polished = sol.polished;
  if (sol.status != qp::Status::Optimal) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "mpc_step: QP " << qp::to_string(sol.status) << " after " << sol.iterations
        << " iterations; x = [" << x_now.transpose() << "], r = [" << r.transpose() << "]";
    fail(sol.status == qp::Status::Infeasible ? ErrorCategory::Infeasible : ErrorCategory::NotConverged, msg.str());
  }
  out.diag.kkt = qp::kkt_residuals(prob, sol.z, sol.lambda);
  out.diag.objective = sol.objective;
  out.u_apply = sol.z.head(m);
  out.theta = sol.z.segment(m * s.weights.N, p);
  if (warm) {
    warm->valid = true;
    warm->x_prev = x_now;
    warm->z_prev = sol.z;
  }
  out.solution = std::move(sol);
  return out;
}

/// Samples points of Omega by hit-and-run and checks that the terminal law
/// keeps them admissible and inside Omega.
struct InvarianceReport {
  int samples = 0;
  int violations = 0;
  double max_violation = 0.0;
};

inline InvarianceReport check_terminal_invariance(const MpcSetup& s, int samples, unsigned seed,
                                                  double slack = 1e-9) {
  const auto n = s.model.states(), p = s.model.outputs();
  const auto& T = s.terminal.set;
  require(T.hbound.size() > 0, "check_terminal_invariance: no terminal set");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  InvarianceReport rep;
  VectorXd e = VectorXd::Zero(n);  // hit-and-run on e = x - M theta, starting at the interior point 0
  for (int k = 0; k < samples; ++k) {
    VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d[i] = gauss(rng);
    d.normalize();
    const VectorXd Hd = T.Hx * d, slackv = T.hbound - T.Hx * e;
    double tmin = -1e3, tmax = 1e3;
    for (Eigen::Index i = 0; i < Hd.size(); ++i) {
      if (Hd[i] > 1e-15) tmax = std::min(tmax, slackv[i] / Hd[i]);
      else if (Hd[i] < -1e-15) tmin = std::max(tmin, slackv[i] / Hd[i]);
    }
    // Every tenth sample is pushed onto the boundary to exercise active rows.
    const double t = (k % 10 == 9) ? (unif(rng) < 0.5 ? tmin : tmax) : tmin + (tmax - tmin) * unif(rng);
    const VectorXd e_new = e + t * d;
    VectorXd theta(p);
    for (Eigen::Index i = 0; i < p; ++i) theta[i] = 4.0 * (unif(rng) - 0.5);
    const VectorXd x = e_new + s.maps.M * theta;

    const double v_in = (T.Hx * x + T.Htheta * theta - T.hbound).maxCoeff();
    const VectorXd kappa = s.terminal.K * (x - s.maps.M * theta);
    const VectorXd x_next = s.model.A * x + s.model.B * kappa;
    const double v_u = (kappa.cwiseAbs() - s.u_max).maxCoeff();
    const double v_next = (T.Hx * x_next + T.Htheta * theta - T.hbound).maxCoeff();
    const double worst = std::max({v_in, v_u, v_next});
    ++rep.samples;
    rep.max_violation = std::max(rep.max_violation, std::max(v_u, v_next));
    if (std::max(v_u, v_next) > slack) ++rep.violations;
    if (worst <= slack && k % 10 != 9) e = e_new;
  }
  return rep;
}

}  // namespace quadmpc::mpc
