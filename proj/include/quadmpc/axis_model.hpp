#pragma once

#include <array>
#include <cmath>
#include <string>

#include "quadmpc/error.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc::model {

/// One decoupled translational axis: p'' + alpha p' = beta u.
struct AxisParams {
  double alpha = 1.0;  // [1/s], drag-like
  double beta = 1.0;   // input gain

  bool operator==(const AxisParams&) const = default;
};

struct ContinuousModel {
  std::array<AxisParams, 3> axes{};

  const AxisParams& operator[](Axis a) const { return axes[index(a)]; }
  AxisParams& operator[](Axis a) { return axes[index(a)]; }

  bool operator==(const ContinuousModel&) const = default;
};

/// Identified Bebop 2 parameters used as the default plant.
inline ContinuousModel bebop2_model() {
  return ContinuousModel{{AxisParams{0.0527, -5.4779}, AxisParams{0.0187, -7.0608},
                          AxisParams{1.7873, -1.7382}}};
}

inline void validate(const AxisParams& p, char axis = '?') {
  const std::string tag = std::string("axis ") + axis;
  require(std::isfinite(p.alpha) && std::isfinite(p.beta), tag + ": non-finite parameters");
  require(p.alpha > 0, tag + ": alpha must be positive");
  require(p.beta != 0, tag + ": beta must be nonzero");
}

inline void validate(const ContinuousModel& m) {
  for (Axis a : kAxes) validate(m[a], axis_name(a));
}

struct DiscreteModel {
  Mat6 A = Mat6::Identity();
  Mat63 B = Mat63::Zero();
  Eigen::Matrix<double, kOutputs, kStates> C = Eigen::Matrix<double, kOutputs, kStates>::Zero();
  double Ts = 0.2;
};

/// Position selector, rows 1, 3, 5 of the state.
inline Eigen::Matrix<double, kOutputs, kStates> position_selector() {
  Eigen::Matrix<double, kOutputs, kStates> C = Eigen::Matrix<double, kOutputs, kStates>::Zero();
  C(0, 0) = C(1, 2) = C(2, 4) = 1.0;
  return C;
}

namespace detail {

// Below this value of h = alpha*Ts the closed forms are replaced by series.
inline constexpr double kSeriesThreshold = 1e-2;

/// (1 - e^{-h}) / h
inline double phi1(double h) {
  if (std::abs(h) < kSeriesThreshold) {
    return 1.0 - h / 2.0 + h * h / 6.0 - h * h * h / 24.0 + h * h * h * h / 120.0 -
           h * h * h * h * h / 720.0 + h * h * h * h * h * h / 5040.0;
  }
  return -std::expm1(-h) / h;
}

/// (h - 1 + e^{-h}) / h^2
inline double phi2(double h) {
  if (std::abs(h) < kSeriesThreshold) {
    return 0.5 - h / 6.0 + h * h / 24.0 - h * h * h / 120.0 + h * h * h * h / 720.0 -
           h * h * h * h * h / 5040.0 + h * h * h * h * h * h / 40320.0;
  }
  return (h + std::expm1(-h)) / (h * h);
}

}  // namespace detail

/// Exact ZOH blocks of one axis: [[1, a12], [0, a22]] and [b1; b2].
struct AxisBlock {
  double a12 = 0, a22 = 1, b1 = 0, b2 = 0;
};

/// alpha >= 0 is accepted here so the double-integrator limit is reachable.
inline AxisBlock discretize_axis(double alpha, double beta, double Ts) {
  require(std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(Ts),
          "discretize: non-finite parameters");
  require(Ts > 0, "discretize: sampling period must be positive");
  require(alpha >= 0, "discretize: alpha must be non-negative");
  const double h = alpha * Ts;
  AxisBlock blk;
  blk.a22 = std::exp(-h);
  blk.a12 = Ts * detail::phi1(h);
  blk.b1 = beta * Ts * Ts * detail::phi2(h);
  blk.b2 = beta * Ts * detail::phi1(h);
  return blk;
}

inline DiscreteModel zoh_discretize(const ContinuousModel& m, double Ts) {
  validate(m);
  DiscreteModel d;
  d.Ts = Ts;
  d.C = position_selector();
  for (Axis a : kAxes) {
    const AxisBlock blk = discretize_axis(m[a].alpha, m[a].beta, Ts);
    const int p = position_index(a), v = velocity_index(a);
    d.A(p, v) = blk.a12;
    d.A(v, v) = blk.a22;
    d.B(p, index(a)) = blk.b1;
    d.B(v, index(a)) = blk.b2;
  }
  return d;
}

/// Coast-down position from p(0)=0, p'(0)=v0, u=0.
inline double free_response(const AxisParams& p, double v0, double t) {
  require(t >= 0, "free_response: t must be non-negative");
  return v0 * t * detail::phi1(p.alpha * t);
}

/// Position from rest under constant input u0.
inline double step_response(const AxisParams& p, double u0, double t) {
  require(t >= 0, "step_response: t must be non-negative");
  return p.beta * u0 * t * t * detail::phi2(p.alpha * t);
}

/// Velocity from rest under constant input u0.
inline double step_velocity(const AxisParams& p, double u0, double t) {
  require(t >= 0, "step_velocity: t must be non-negative");
  return p.beta * u0 * t * detail::phi1(p.alpha * t);
}

inline State exact_step(const DiscreteModel& m, const State& x, const Input& u) {
  return m.A * x + m.B * u;
}

/// Published discretization of the Bebop 2 model at Ts = 0.2 s, used by the
/// `discretize` comparison table and its regression test.
inline DiscreteModel bebop2_reference_discretization() {
  DiscreteModel d;
  d.Ts = 0.2;
  d.C = position_selector();
  d.A(0, 1) = 0.19895;
  d.A(1, 1) = 0.98952;
  d.A(2, 3) = 0.19963;
  d.A(3, 3) = 0.99627;
  d.A(4, 5) = 0.16816;
  d.A(5, 5) = 0.69946;
  d.B(0, 0) = -0.10917348;
  d.B(1, 0) = -1.08982035;
  d.B(2, 1) = -0.141040918;
  d.B(3, 1) = -1.409531141;
  d.B(4, 2) = -0.030967224;
  d.B(5, 2) = -0.292295416;
  return d;
}

}  // namespace quadmpc::model
