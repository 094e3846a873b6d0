#pragma once

// Independent reference computations used only by the tests. None of these
// share code paths with the library: integration instead of closed forms,
// matrix exponentials instead of the per-axis formulas, accumulated-phase
// long-double DFTs, and first-order methods instead of ADMM.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Classical RK4 on p'' = -alpha p' + beta u from (p0, v0) with constant u.
inline std::pair<double, double> integrate_axis(double alpha, double beta, double p0, double v0, double u, double t,
                                                int steps) {
  const double h = t / steps;
  double p = p0, v = v0;
  const auto f = [&](double vv) { return -alpha * vv + beta * u; };
  for (int i = 0; i < steps; ++i) {
    const double k1p = v, k1v = f(v);
    const double k2p = v + 0.5 * h * k1v, k2v = f(v + 0.5 * h * k1v);
    const double k3p = v + 0.5 * h * k2v, k3v = f(v + 0.5 * h * k2v);
    const double k4p = v + h * k3v, k4v = f(v + h * k3v);
    p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  return {p, v};
}

/// ZOH discretization through the exponential of the augmented matrix
/// [[Ac, Bc], [0, 0]].
inline std::pair<MatrixXd, MatrixXd> zoh_expm(const MatrixXd& Ac, const MatrixXd& Bc, double Ts) {
  const auto n = Ac.rows(), m = Bc.cols();
  MatrixXd aug = MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = Ac * Ts;
  aug.topRightCorner(n, m) = Bc * Ts;
  const MatrixXd E = aug.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

/// |X_k| for k = 0..n/2 by direct summation with the phase advanced by
/// repeated complex multiplication in long double.
inline std::vector<double> dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k) / n;
    const std::complex<long double> step(std::cos(ang), std::sin(ang));
    std::complex<long double> w(1.0L, 0.0L), acc(0.0L, 0.0L);
    for (std::size_t j = 0; j < n; ++j) {
      acc += static_cast<long double>(x[j]) * w;
      w *= step;
      if (j % 64 == 63) {  // re-anchor the phase to keep rounding bounded
        const long double a = ang * static_cast<long double>(j + 1);
        w = {std::cos(a), std::sin(a)};
      }
    }
    out[k] = static_cast<double>(std::abs(acc));
  }
  return out;
}

/// Accelerated projected gradient for min 0.5 z'Hz + f'z over lo <= z <= hi.
/// Stops on the projected-gradient fixed-point residual, which vanishes only
/// at the minimizer.
inline VectorXd box_qp(const MatrixXd& H, const VectorXd& f, const VectorXd& lo, const VectorXd& hi,
                       int iters = 200000, double tol = 1e-13) {
  const double L = Eigen::SelfAdjointEigenSolver<MatrixXd>(H).eigenvalues().maxCoeff();
  const auto proj = [&](const VectorXd& v) { return v.cwiseMax(lo).cwiseMin(hi); };
  const auto obj = [&](const VectorXd& v) { return 0.5 * v.dot(H * v) + f.dot(v); };
  VectorXd z = proj(VectorXd::Zero(f.size())), y = z;
  double t = 1.0;
  for (int k = 0; k < iters; ++k) {
    if ((z - proj(z - (H * z + f) / L)).lpNorm<Eigen::Infinity>() < tol) break;
    const VectorXd zn = proj(y - (H * y + f) / L);
    // Restart the momentum when the objective would increase.
    if (obj(zn) > obj(z)) {
      y = z;
      t = 1.0;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = zn + ((t - 1.0) / tn) * (zn - z);
    z = zn;
    t = tn;
  }
  return z;
}

/// Dual projected gradient for min 0.5 z'Hz + f'z s.t. Gz <= h with H > 0:
/// ascend the concave dual over lambda >= 0, then recover z. The dual
/// iterate converges slowly in z when G has more rows than columns, so the
/// rows it marks active are re-solved as equalities; that point replaces the
/// dual estimate only if it satisfies every KKT condition to 1e-10.
inline VectorXd polytope_qp(const MatrixXd& H, const VectorXd& f, const MatrixXd& G, const VectorXd& h,
                            int iters = 200000, double tol = 1e-13) {
  const Eigen::LLT<MatrixXd> llt(H);
  const MatrixXd HiGt = llt.solve(G.transpose());
  const VectorXd Hif = llt.solve(f);
  const MatrixXd Q = G * HiGt;  // dual Hessian
  const VectorXd q = G * Hif + h;
  const double L = std::max(Eigen::SelfAdjointEigenSolver<MatrixXd>(Q).eigenvalues().maxCoeff(), 1e-12);
  VectorXd lam = VectorXd::Zero(h.size()), y = lam;
  double t = 1.0;
  const auto dual = [&](const VectorXd& l) { return -0.5 * l.dot(Q * l) - q.dot(l); };
  for (int k = 0; k < iters; ++k) {
    if ((lam - (lam - (Q * lam + q) / L).cwiseMax(0.0)).lpNorm<Eigen::Infinity>() < tol) break;
    const VectorXd ln = (y - (Q * y + q) / L).cwiseMax(0.0);
    if (dual(ln) < dual(lam)) {
      y = lam;
      t = 1.0;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = ln + ((t - 1.0) / tn) * (ln - lam);
    lam = ln;
    t = tn;
  }
  const VectorXd z_dual = -(Hif + HiGt * lam);

  const double scale = std::max(1.0, lam.lpNorm<Eigen::Infinity>());
  std::vector<Eigen::Index> act;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam[i] > 1e-9 * scale) act.push_back(i);
  const auto n = f.size(), na = static_cast<Eigen::Index>(act.size());
  if (na == 0 || na > n) return z_dual;
  MatrixXd K = MatrixXd::Zero(n + na, n + na);
  VectorXd rhs(n + na);
  K.topLeftCorner(n, n) = H;
  rhs.head(n) = -f;
  for (Eigen::Index j = 0; j < na; ++j) {
    K.block(0, n + j, n, 1) = G.row(act[static_cast<std::size_t>(j)]).transpose();
    K.block(n + j, 0, 1, n) = G.row(act[static_cast<std::size_t>(j)]);
    rhs[n + j] = h[act[static_cast<std::size_t>(j)]];
  }
  const Eigen::FullPivLU<MatrixXd> lu(K);
  if (!lu.isInvertible()) return z_dual;
  const VectorXd sol = lu.solve(rhs);
  const VectorXd z = sol.head(n), mult = sol.tail(na);
  const bool ok = mult.minCoeff() >= -1e-10 && (G * z - h).maxCoeff() <= 1e-10 * std::max(1.0, h.lpNorm<Eigen::Infinity>());
  return ok ? z : z_dual;
}

/// Scalar DARE fixed point by the quadratic formula:
/// q = a^2 q - (abq)^2 / (r + b^2 q) + qx.
inline double scalar_dare(double a, double b, double qx, double r) {
  // Multiply out: b^2 q^2 + (r - a^2 r - b^2 qx) q - qx r = 0.
  const double A = b * b, B = r - a * a * r - b * b * qx, C = -qx * r;
  return (-B + std::sqrt(B * B - 4 * A * C)) / (2 * A);
}

}  // namespace oracle
