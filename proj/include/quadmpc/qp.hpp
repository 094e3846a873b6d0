#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "quadmpc/error.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::qp {

/// minimize 0.5 z'Hz + f'z + offset  subject to  G z <= h.
struct Problem {
  MatrixXd H;
  VectorXd f;
  MatrixXd G;
  VectorXd h;
  double offset = 0.0;

  Eigen::Index num_vars() const { return f.size(); }
  Eigen::Index num_constraints() const { return h.size(); }
};

enum class Status { Optimal, Infeasible, MaxIter, Unbounded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::MaxIter: return "max_iter";
    case Status::Unbounded: return "unbounded";
  }
  return "unknown";
}

struct Settings {
  double tol = 1e-6;
  int max_iter = 20000;
  double rho = 1.0;
  double sigma = 1e-6;
  double relax = 1.6;
  int adapt_interval = 50;
  int check_interval = 5;
  int scaling_iter = 10;
  bool polish = true;
  double infeasibility_tol = 1e-5;
};

struct Solution {
  VectorXd z;
  VectorXd lambda;  // multipliers of G z <= h, nonnegative at optimum
  double objective = std::numeric_limits<double>::quiet_NaN();
  Status status = Status::MaxIter;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool polished = false;
};

struct WarmStart {
  VectorXd z;
  VectorXd lambda;  // optional; empty means zero
};

struct KktResiduals {
  double stationarity = 0.0;  // |Hz + f + G'lambda|_inf
  double primal = 0.0;        // |max(Gz - h, 0)|_inf
  double comp_slack = 0.0;    // |lambda o (Gz - h)|_inf
  double dual_sign = 0.0;     // |max(-lambda, 0)|_inf

  double worst() const { return std::max({stationarity, primal, comp_slack, dual_sign}); }
};

/// Independent re-check of a candidate primal/dual pair.
inline KktResiduals kkt_residuals(const Problem& p, const VectorXd& z, const VectorXd& lambda) {
  require(z.size() == p.num_vars() && lambda.size() == p.num_constraints(),
          "kkt_residuals: dimension mismatch");
  KktResiduals r;
  VectorXd grad = p.H * z + p.f;
  if (p.num_constraints() > 0) grad += p.G.transpose() * lambda;
  r.stationarity = grad.size() ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  if (p.num_constraints() > 0) {
    const VectorXd slack = p.G * z - p.h;
    r.primal = std::max(0.0, slack.maxCoeff());
    r.comp_slack = lambda.cwiseProduct(slack).lpNorm<Eigen::Infinity>();
    r.dual_sign = std::max(0.0, -lambda.minCoeff());
  }
  return r;
}

inline double objective(const Problem& p, const VectorXd& z) {
  return 0.5 * z.dot(p.H * z) + p.f.dot(z) + p.offset;
}

inline void validate(const Settings& s) {
  require(s.tol > 0 && s.max_iter > 0 && s.rho > 0 && s.sigma > 0 && s.relax > 0 && s.relax < 2 &&
              s.adapt_interval > 0 && s.check_interval > 0 && s.scaling_iter >= 0 && s.infeasibility_tol > 0,
          "qp settings: tolerances, step sizes and intervals must be positive and relax in (0, 2)",
          ErrorCategory::InvalidConfig);
}

inline void validate(const Problem& p) {
  const auto n = p.f.size();
  require(p.H.rows() == n && p.H.cols() == n, "qp: H must be n x n");
  require(p.G.cols() == n || p.h.size() == 0, "qp: G must have n columns");
  require(p.G.rows() == p.h.size(), "qp: G rows must match h");
  require(p.H.allFinite() && p.f.allFinite() && p.G.allFinite() && p.h.allFinite(),
          "qp: non-finite problem data");
  const double scale = std::max(1.0, p.H.cwiseAbs().maxCoeff());
  require((p.H - p.H.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, "qp: H must be symmetric");
}

namespace detail {

inline double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

inline double clip_scale(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

/// Ruiz equilibration: Hs = c D H D, Gs = E G D, fs = c D f, hs = E h.
struct Scaling {
  VectorXd D, E;
  double c = 1.0;
  MatrixXd Hs, Gs;
  VectorXd fs, hs;
};

inline Scaling equilibrate(const Problem& p, int iterations) {
  const auto n = p.num_vars(), m = p.num_constraints();
  Scaling s;
  s.D = VectorXd::Ones(n);
  s.E = VectorXd::Ones(m);
  s.Hs = p.H;
  s.Gs = m > 0 ? p.G : MatrixXd::Zero(0, n);
  s.fs = p.f;
  for (int it = 0; it < iterations; ++it) {
    VectorXd d(n), e(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double v = s.Hs.col(j).cwiseAbs().maxCoeff();
      if (m > 0) v = std::max(v, s.Gs.col(j).cwiseAbs().maxCoeff());
      d[j] = 1.0 / std::sqrt(clip_scale(v));
    }
    for (Eigen::Index i = 0; i < m; ++i) e[i] = 1.0 / std::sqrt(clip_scale(s.Gs.row(i).cwiseAbs().maxCoeff()));
    s.Hs = d.asDiagonal() * s.Hs * d.asDiagonal();
    if (m > 0) s.Gs = e.asDiagonal() * s.Gs * d.asDiagonal();
    s.fs = d.cwiseProduct(s.fs);
    s.D = s.D.cwiseProduct(d);
    s.E = s.E.cwiseProduct(e);

    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += s.Hs.col(j).cwiseAbs().maxCoeff();
    mean_col = n > 0 ? mean_col / static_cast<double>(n) : 0.0;
    const double cg = 1.0 / clip_scale(std::max(mean_col, inf_norm(s.fs)));
    s.Hs *= cg;
    s.fs *= cg;
    s.c *= cg;
  }
  s.hs = s.E.cwiseProduct(p.h);
  return s;
}

/// Re-solves the equality-constrained problem on the guessed active set with
/// a regularized KKT system and iterative refinement.
inline bool polish(const Problem& p, const std::vector<Eigen::Index>& active, VectorXd& z,
                   VectorXd& lambda) {
  const auto n = p.num_vars();
  const auto na = static_cast<Eigen::Index>(active.size());
  const double delta = 1e-9;
  MatrixXd K = MatrixXd::Zero(n + na, n + na);
  K.topLeftCorner(n, n) = p.H;
  VectorXd rhs(n + na);
  rhs.head(n) = -p.f;
  for (Eigen::Index k = 0; k < na; ++k) {
    K.block(n + k, 0, 1, n) = p.G.row(active[k]);
    K.block(0, n + k, n, 1) = p.G.row(active[k]).transpose();
    rhs[n + k] = p.h[active[k]];
  }
  MatrixXd Kreg = K;
  Kreg.topLeftCorner(n, n).diagonal().array() += delta;
  Kreg.bottomRightCorner(na, na).diagonal().array() -= delta;
  const Eigen::PartialPivLU<MatrixXd> lu(Kreg);
  VectorXd sol = lu.solve(rhs);
  for (int it = 0; it < 10; ++it) {
    const VectorXd res = rhs - K * sol;
    if (inf_norm(res) < 1e-13 * std::max(1.0, inf_norm(rhs))) break;
    sol += lu.solve(res);
  }
  if (!sol.allFinite()) return false;
  z = sol.head(n);
  lambda = VectorXd::Zero(p.num_constraints());
  for (Eigen::Index k = 0; k < na; ++k) lambda[active[k]] = sol[n + k];
  return true;
}

}  // namespace detail

/// Operator-splitting (ADMM) solver for small dense problems.
///
/// Iterates on the equilibrated problem with slack s = G z projected onto
/// {s <= h}. Terminates as Optimal only after the unscaled candidate passes
/// kkt_residuals at `tol`; the candidate is the polished active-set solution
/// when that verifies, otherwise the ADMM iterate itself.
inline Solution solve(const Problem& p, const Settings& set = {}, const WarmStart* warm = nullptr) {
  validate(p);
  require(set.tol > 0 && set.max_iter > 0, "qp: tol and max_iter must be positive");
  const auto n = p.num_vars(), m = p.num_constraints();
  const detail::Scaling sc = detail::equilibrate(p, set.scaling_iter);

  VectorXd x = VectorXd::Zero(n), z = VectorXd::Zero(m), y = VectorXd::Zero(m);
  if (warm && warm->z.size() == n) {
    x = warm->z.cwiseQuotient(sc.D);
    if (m > 0) z = (sc.Gs * x).cwiseMin(sc.hs);
    if (warm->lambda.size() == m && m > 0) y = sc.c * warm->lambda.cwiseQuotient(sc.E);
  }

  double rho = set.rho;
  const auto factor = [&](double r) {
    MatrixXd K = sc.Hs;
    K.diagonal().array() += set.sigma;
    if (m > 0) K.noalias() += r * sc.Gs.transpose() * sc.Gs;
    return Eigen::LLT<MatrixXd>(K);
  };
  Eigen::LLT<MatrixXd> llt = factor(rho);

  Solution sol;
  VectorXd x_prev = x, y_prev = y, xt(n), zt(m), zh(m);
  double internal_tol = set.tol;

  const auto unscale_x = [&](const VectorXd& xs) -> VectorXd { return sc.D.cwiseProduct(xs); };
  const auto unscale_y = [&](const VectorXd& ys) -> VectorXd { return sc.E.cwiseProduct(ys) / sc.c; };

  const auto finish = [&](Status st, const VectorXd& zz, const VectorXd& ll, int iters) {
    sol.status = st;
    sol.z = zz;
    sol.lambda = ll;
    sol.iterations = iters;
    sol.objective = objective(p, zz);
    const KktResiduals r = kkt_residuals(p, zz, ll);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.stationarity;
    return sol;
  };

  for (int iter = 1; iter <= set.max_iter; ++iter) {
    x_prev = x;
    y_prev = y;
    VectorXd rhs = set.sigma * x - sc.fs;
    if (m > 0) rhs.noalias() += sc.Gs.transpose() * (rho * z - y);
    xt = llt.solve(rhs);
    x = set.relax * xt + (1.0 - set.relax) * x;
    if (m > 0) {
      zt.noalias() = sc.Gs * xt;
      zh = set.relax * zt + (1.0 - set.relax) * z;
      z = (zh + y / rho).cwiseMin(sc.hs);
      y += rho * (zh - z);
    }

    const bool check = iter % set.check_interval == 0 || iter == set.max_iter;
    const bool adapt = m > 0 && iter % set.adapt_interval == 0;
    if (!check && !adapt) continue;

    const VectorXd Hx = sc.Hs * x;
    const VectorXd Gx = m > 0 ? VectorXd(sc.Gs * x) : VectorXd::Zero(0);
    const VectorXd Gty = m > 0 ? VectorXd(sc.Gs.transpose() * y) : VectorXd::Zero(n);
    const double r_prim = m > 0 ? detail::inf_norm((Gx - z).cwiseQuotient(sc.E)) : 0.0;
    const double r_dual = detail::inf_norm((Hx + sc.fs + Gty).cwiseQuotient(sc.D)) / sc.c;
    sol.primal_residual = r_prim;
    sol.dual_residual = r_dual;

    if (check) {
      if (r_prim <= internal_tol && r_dual <= internal_tol) {
        const VectorXd xu = unscale_x(x);
        const VectorXd yu = m > 0 ? unscale_y(y) : VectorXd::Zero(0);
        if (set.polish && m > 0) {
          std::vector<Eigen::Index> active;
          for (Eigen::Index i = 0; i < m; ++i)
            if (sc.hs[i] - z[i] < y[i]) active.push_back(i);
          VectorXd zp, lp;
          if (detail::polish(p, active, zp, lp) && kkt_residuals(p, zp, lp).worst() <= set.tol) {
            finish(Status::Optimal, zp, lp, iter);
            sol.polished = true;
            return sol;
          }
        }
        if (kkt_residuals(p, xu, yu).worst() <= set.tol) return finish(Status::Optimal, xu, yu, iter);
        internal_tol = std::max(internal_tol * 0.1, 1e-13);
      }

      // Infeasibility certificate: dy with G'dy ~ 0 and h'dy < 0.
      if (m > 0) {
        VectorXd dy = sc.E.cwiseProduct(y - y_prev).cwiseMax(0.0);
        const double ndy = detail::inf_norm(dy);
        if (ndy > 1e-12 && detail::inf_norm(p.G.transpose() * dy) <= set.infeasibility_tol * ndy &&
            p.h.dot(dy) < -set.infeasibility_tol * ndy) {
          return finish(Status::Infeasible, unscale_x(x), unscale_y(y), iter);
        }
      }
      // Unboundedness certificate: dx with H dx ~ 0, f'dx < 0, G dx <= 0.
      {
        const VectorXd dx = sc.D.cwiseProduct(x - x_prev);
        const double ndx = detail::inf_norm(dx);
        if (ndx > 1e-12 && detail::inf_norm(p.H * dx) <= set.infeasibility_tol * ndx &&
            p.f.dot(dx) < -set.infeasibility_tol * ndx &&
            (m == 0 || (p.G * dx).maxCoeff() <= set.infeasibility_tol * ndx)) {
          return finish(Status::Unbounded, unscale_x(x), m > 0 ? unscale_y(y) : VectorXd::Zero(0), iter);
        }
      }
    }

    if (adapt) {
      const double prim_norm = std::max({detail::inf_norm(Gx), detail::inf_norm(z), 1e-12});
      const double dual_norm =
          std::max({detail::inf_norm(Hx), detail::inf_norm(Gty), detail::inf_norm(sc.fs), 1e-12});
      const double num = detail::inf_norm(Gx - z) / prim_norm;
      const double den = detail::inf_norm(Hx + sc.fs + Gty) / dual_norm;
      if (num > 0 && den > 0) {
        const double rho_new = std::clamp(rho * std::sqrt(num / den), 1e-6, 1e6);
        if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
          rho = rho_new;
          llt = factor(rho);
        }
      }
    }
  }
  return finish(Status::MaxIter, unscale_x(x), m > 0 ? unscale_y(y) : VectorXd::Zero(0), set.max_iter);
}

inline Solution solve(const Problem& p, double tol, int max_iter) {
  Settings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve(p, s);
}

/// Quadratic regularization used to run LPs through the QP solver.
inline constexpr double kLpRegularization = 1e-8;

/// maximize c'z subject to G z <= h. The returned objective is c'z (without
/// the regularization term). Unbounded is reported distinctly.
inline Solution solve_lp(const VectorXd& c, const MatrixXd& G, const VectorXd& h, const Settings& set = {}) {
  Problem p;
  const auto n = c.size();
  p.H = kLpRegularization * MatrixXd::Identity(n, n);
  p.f = -c;
  p.G = G.rows() == 0 ? MatrixXd::Zero(0, n) : G;
  p.h = h;
  Solution s = solve(p, set);
  s.objective = c.dot(s.z);
  return s;
}

inline Solution solve_lp(const VectorXd& c, const MatrixXd& G, const VectorXd& h, double tol, int max_iter) {
  Settings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve_lp(c, G, h, s);
}

}  // namespace quadmpc::qp
