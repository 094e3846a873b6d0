#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "quadmpc/error.hpp"
#include "quadmpc/sigproc.hpp"
#include "quadmpc/types.hpp"

namespace quadmpc {

/// One logged sample. `u` and `u_yaw` are the inputs actually applied over
/// [t, t + dt), i.e. after delay and saturation.
struct FlightSample {
  double t = 0.0;
  Vec3 ref = Vec3::Zero();
  Vec3 pos = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  double u_yaw = 0.0;
  // Derived columns; NaN where undefined (first one or two rows).
  Vec3 vel = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  Vec3 acc = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
};

struct FlightLog {
  double dt = 1.0 / 120.0;
  InputBounds bounds{};
  bool has_derived = false;
  std::vector<FlightSample> rows;

  std::size_t size() const { return rows.size(); }

  sigproc::Series position(Axis a) const {
    sigproc::Series s{rows.empty() ? 0.0 : rows.front().t, dt, {}};
    s.samples.reserve(rows.size());
    for (const auto& r : rows) s.samples.push_back(r.pos[index(a)]);
    return s;
  }

  sigproc::Series input(Axis a) const {
    sigproc::Series s{rows.empty() ? 0.0 : rows.front().t, dt, {}};
    s.samples.reserve(rows.size());
    for (const auto& r : rows) s.samples.push_back(r.u[index(a)]);
    return s;
  }
};

inline constexpr const char* kFlightLogHeader = "t,ref_x,ref_y,ref_z,pos_x,pos_y,pos_z,u_x,u_y,u_z,u_yaw";
inline constexpr const char* kDerivedHeader = "vel_x,vel_y,vel_z,acc_x,acc_y,acc_z";

// Velocity cutoff before differentiation, and acceleration smoothing cutoff.
inline constexpr double kVelocityCutoffHz = 5.0;
inline constexpr double kAccelerationCutoffHz = 10.0;

/// vel = backward difference of position (unfiltered);
/// acc = lowpass10(difference(lowpass5(vel))).
inline void derive_columns(FlightLog& log) {
  const std::size_t n = log.rows.size();
  require(n >= 3, "derive_columns: need at least three samples");
  for (Axis a : kAxes) {
    const int i = index(a);
    const auto vel = sigproc::difference_quotient(log.position(a));
    const auto acc = sigproc::lowpass(
        sigproc::difference_quotient(sigproc::lowpass(vel, kVelocityCutoffHz)),
        kAccelerationCutoffHz);
    for (std::size_t k = 0; k < vel.size(); ++k) log.rows[k + 1].vel[i] = vel.samples[k];
    for (std::size_t k = 0; k < acc.size(); ++k) log.rows[k + 2].acc[i] = acc.samples[k];
  }
  log.has_derived = true;
}

namespace detail {

inline void put(std::ostream& os, double v) {
  if (std::isfinite(v)) os << v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& c, std::size_t line_no) {
  if (c.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(c, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != c.size())
    fail(ErrorCategory::Io, "flight log line " + std::to_string(line_no) + ": bad number '" + c + "'");
  return v;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const FlightLog& log) {
  os.precision(17);
  os << kFlightLogHeader;
  if (log.has_derived) os << ',' << kDerivedHeader;
  os << '\n';
  for (const auto& r : log.rows) {
    os << r.t;
    for (int i = 0; i < 3; ++i) os << ',' << r.ref[i];
    for (int i = 0; i < 3; ++i) os << ',' << r.pos[i];
    for (int i = 0; i < 3; ++i) os << ',' << r.u[i];
    os << ',' << r.u_yaw;
    if (log.has_derived) {
      for (int i = 0; i < 3; ++i) os << ',', detail::put(os, r.vel[i]);
      for (int i = 0; i < 3; ++i) os << ',', detail::put(os, r.acc[i]);
    }
    os << '\n';
  }
}

/// Reads a log written by write_csv. dt is recovered from the time column and
/// must be uniform; `fallback_dt` is used for logs with fewer than two rows.
inline FlightLog read_csv(std::istream& is, double fallback_dt = 1.0 / 120.0) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCategory::Io, "flight log: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  FlightLog log;
  const std::string base = kFlightLogHeader;
  if (line == base) {
    log.has_derived = false;
  } else if (line == base + "," + kDerivedHeader) {
    log.has_derived = true;
  } else {
    fail(ErrorCategory::Io, "flight log: unexpected header '" + line + "'");
  }
  const std::size_t cols = log.has_derived ? 17 : 11;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != cols)
      fail(ErrorCategory::Io, "flight log line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(cols) + " columns");
    std::vector<double> v(cols);
    for (std::size_t c = 0; c < cols; ++c) v[c] = detail::parse_cell(cells[c], line_no);
    FlightSample s;
    s.t = v[0];
    s.ref = Vec3(v[1], v[2], v[3]);
    s.pos = Vec3(v[4], v[5], v[6]);
    s.u = Vec3(v[7], v[8], v[9]);
    s.u_yaw = v[10];
    if (log.has_derived) {
      s.vel = Vec3(v[11], v[12], v[13]);
      s.acc = Vec3(v[14], v[15], v[16]);
    }
    if (!std::isfinite(s.t) || !s.ref.allFinite() || !s.pos.allFinite() || !s.u.allFinite() ||
        !std::isfinite(s.u_yaw))
      fail(ErrorCategory::Io, "flight log line " + std::to_string(line_no) + ": missing value");
    log.rows.push_back(s);
  }
  if (log.rows.size() >= 2) {
    log.dt = log.rows[1].t - log.rows[0].t;
    if (!(log.dt > 0)) fail(ErrorCategory::Io, "flight log: time must increase");
    for (std::size_t k = 1; k < log.rows.size(); ++k) {
      const double step = log.rows[k].t - log.rows[k - 1].t;
      if (std::abs(step - log.dt) > 1e-9 * std::max(1.0, log.rows[k].t))
        fail(ErrorCategory::Io, "flight log: non-uniform sampling at line " + std::to_string(k + 2));
    }
  } else {
    log.dt = fallback_dt;
  }
  return log;
}

}  // namespace quadmpc
