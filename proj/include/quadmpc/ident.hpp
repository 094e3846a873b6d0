#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "quadmpc/axis_model.hpp"
#include "quadmpc/error.hpp"
#include "quadmpc/flight_log.hpp"
#include "quadmpc/sigproc.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::ident {

struct PdGains {
  Vec3 kp{0.050, 0.050, 1.700};
  Vec3 kd{0.065, 0.065, 0.200};
  double kp_yaw = 1.000;
  double kd_yaw = 0.800;

  bool operator==(const PdGains&) const = default;
};

inline void validate(const PdGains& g) {
  require((g.kp.array() > 0).all() && (g.kd.array() > 0).all() && g.kp_yaw > 0 && g.kd_yaw > 0 &&
              g.kp.allFinite() && g.kd.allFinite() && std::isfinite(g.kp_yaw) &&
              std::isfinite(g.kd_yaw),
          "PD gains must be finite and strictly positive", ErrorCategory::InvalidConfig);
}

struct Pose {
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

/// u_i = -kp_i (p_i - p_i^d) - kd_i (v_i - v_i^d); yaw regulated to zero.
/// Returns (u_x, u_y, u_z, u_yaw) before saturation.
inline Vec4 pd_control(const PdGains& g, const Pose& pose, const Pose& desired) {
  Vec4 u;
  u.head<3>() = -g.kp.cwiseProduct(pose.pos - desired.pos) - g.kd.cwiseProduct(pose.vel - desired.vel);
  u[3] = -g.kp_yaw * (pose.yaw - desired.yaw) - g.kd_yaw * (pose.yaw_rate - desired.yaw_rate);
  return u;
}

inline Vec4 saturate(const Vec4& u, const InputBounds& b) {
  Vec4 out;
  for (int i = 0; i < 3; ++i) out[i] = std::clamp(u[i], -b.u_max[i], b.u_max[i]);
  out[3] = std::clamp(u[3], -b.yaw_max, b.yaw_max);
  return out;
}

inline Input saturate(const Input& u, const InputBounds& b) {
  return u.cwiseMax(-b.u_max).cwiseMin(b.u_max);
}

struct SineComponent {
  double amplitude = 0.0;  // [m]
  double freq = 0.0;       // [Hz]

  bool operator==(const SineComponent&) const = default;
};

/// Multi-sine position reference on one axis; the other two axes hold zero.
struct ExcitationSpec {
  std::vector<SineComponent> components{{0.3, 0.1}, {0.06, 0.2}, {0.01, 0.35}, {0.01, 0.5}};
  double duration = 60.0;
  Axis axis = Axis::X;

  std::vector<double> probe_freqs() const {
    std::vector<double> f;
    for (const auto& c : components) f.push_back(c.freq);
    return f;
  }

  bool operator==(const ExcitationSpec&) const = default;
};

inline void validate(const ExcitationSpec& s) {
  require(s.duration >= 0 && std::isfinite(s.duration), "excitation: duration must be non-negative",
          ErrorCategory::InvalidConfig);
  for (std::size_t i = 0; i < s.components.size(); ++i) {
    require(s.components[i].freq > 0 && std::isfinite(s.components[i].amplitude),
            "excitation: frequencies must be positive", ErrorCategory::InvalidConfig);
    for (std::size_t j = 0; j < i; ++j)
      require(s.components[i].freq != s.components[j].freq, "excitation: duplicate frequency",
              ErrorCategory::InvalidConfig);
  }
}

struct ReferencePoint {
  double pos = 0.0;
  double vel = 0.0;
};

inline ReferencePoint excitation_reference(const ExcitationSpec& s, double t) {
  require(t >= 0 && t <= s.duration * (1 + 1e-12), "excitation_reference: t outside [0, duration]");
  ReferencePoint r;
  for (const auto& c : s.components) {
    const double w = 2.0 * std::numbers::pi * c.freq;
    r.pos += c.amplitude * std::sin(w * t);
    r.vel += c.amplitude * w * std::cos(w * t);
  }
  return r;
}

// Rows inside this window are dropped while the filters settle.
inline constexpr double kWarmupSeconds = 2.0;
inline constexpr std::size_t kMinSamples = 10;
inline constexpr double kMaxCondition = 1e8;
inline constexpr double kMinInputRmsFraction = 1e-4;

/// Linear regression acc = -alpha vel + beta u for one axis.
struct Regression {
  Eigen::MatrixX2d design;  // columns: -vel, u
  VectorXd target;          // acc
};

/// acc is the filtered difference of the filtered velocity. Filtering only the
/// target would lag it behind the regressors and bias alpha, so vel and u go
/// through the same LP5/LP10 chain; the backward difference then sits between
/// two filtered samples, and the regressors are averaged over that pair.
/// Row i corresponds to log sample i + 2 + warm-up.
inline Regression build_regression(const FlightLog& log, Axis axis) {
  const std::size_t n = log.size();
  const auto warmup = static_cast<std::size_t>(std::llround(kWarmupSeconds / log.dt));
  require(n >= 3 && n - 2 > warmup + kMinSamples - 1,
          "build_regression: insufficient samples", ErrorCategory::InsufficientExcitation);

  const auto vel = sigproc::difference_quotient(log.position(axis));  // index j <-> sample j+1
  // Input applied over the same interval as vel[j] is u[j].
  sigproc::Series u_int{vel.t0, vel.dt, {}};
  u_int.samples.reserve(vel.size());
  for (std::size_t j = 0; j < vel.size(); ++j) u_int.samples.push_back(log.rows[j].u[index(axis)]);

  const auto chain = [](const sigproc::Series& s) {
    return sigproc::lowpass(sigproc::lowpass(s, kVelocityCutoffHz), kAccelerationCutoffHz);
  };
  const auto acc = sigproc::lowpass(
      sigproc::difference_quotient(sigproc::lowpass(vel, kVelocityCutoffHz)), kAccelerationCutoffHz);
  const auto vel_f = chain(vel);
  const auto u_f = chain(u_int);

  const std::size_t rows = acc.size() - warmup;
  Regression r;
  r.design.resize(static_cast<Eigen::Index>(rows), 2);
  r.target.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t k = 0; k < rows; ++k) {
    const std::size_t i = k + warmup;
    const auto row = static_cast<Eigen::Index>(k);
    r.design(row, 0) = -0.5 * (vel_f.samples[i] + vel_f.samples[i + 1]);
    r.design(row, 1) = 0.5 * (u_f.samples[i] + u_f.samples[i + 1]);
    r.target(row) = acc.samples[i];
  }
  return r;
}

struct FitResult {
  Axis axis = Axis::X;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double residual_rms = 0.0;
  std::size_t sample_count = 0;
};

/// Normal equations with a Cholesky solve; rejects rank-deficient designs.
inline FitResult least_squares_fit(const Eigen::MatrixX2d& design, const VectorXd& target,
                                   Axis axis = Axis::X) {
  require(design.rows() == target.rows(), "least_squares_fit: dimension mismatch");
  require(static_cast<std::size_t>(design.rows()) >= kMinSamples,
          "least_squares_fit: need at least 10 samples", ErrorCategory::InsufficientExcitation);
  const Eigen::Matrix2d normal = design.transpose() * design;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(normal);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0) || !(lmin > 0) || std::sqrt(lmax / lmin) >= kMaxCondition)
    fail(ErrorCategory::InsufficientExcitation,
         std::string("insufficient excitation on axis ") + axis_name(axis) +
             ": rank-deficient design matrix");
  const Eigen::LLT<Eigen::Matrix2d> llt(normal);
  const Eigen::Vector2d theta = llt.solve(design.transpose() * target);
  FitResult f;
  f.axis = axis;
  f.alpha_hat = theta[0];
  f.beta_hat = theta[1];
  f.sample_count = static_cast<std::size_t>(design.rows());
  f.residual_rms = std::sqrt((design * theta - target).squaredNorm() / static_cast<double>(design.rows()));
  return f;
}

struct IdentifyResult {
  model::ContinuousModel model;
  std::array<FitResult, 3> fits;
};

inline FitResult fit_axis(const FlightLog& log, Axis axis) {
  const auto u = log.input(axis);
  double ms = 0.0;
  for (double v : u.samples) ms += v * v;
  const double rms = u.samples.empty() ? 0.0 : std::sqrt(ms / static_cast<double>(u.size()));
  if (rms < kMinInputRmsFraction * log.bounds.u_max[index(axis)])
    fail(ErrorCategory::InsufficientExcitation,
         std::string("insufficient excitation on axis ") + axis_name(axis) + ": input RMS too small");
  const Regression r = build_regression(log, axis);
  return least_squares_fit(r.design, r.target, axis);
}

/// One excitation log per axis, each exciting only its own axis.
inline IdentifyResult identify(const FlightLog& log_x, const FlightLog& log_y, const FlightLog& log_z) {
  const std::array<const FlightLog*, 3> logs{&log_x, &log_y, &log_z};
  IdentifyResult out;
  for (Axis a : kAxes) {
    const FitResult f = fit_axis(*logs[index(a)], a);
    if (!(f.alpha_hat > 0))
      fail(ErrorCategory::InvariantViolation,
           std::string("axis ") + axis_name(a) + ": identified alpha is not positive (" +
               std::to_string(f.alpha_hat) + ")");
    out.fits[index(a)] = f;
    out.model[a] = model::AxisParams{f.alpha_hat, f.beta_hat};
  }
  return out;
}

}  // namespace quadmpc::ident
