#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "quadmpc/error.hpp"

namespace quadmpc::sigproc {

/// Uniformly sampled signal: samples[k] taken at t0 + k*dt.
struct Series {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Backward difference (s[k] - s[k-1]) / dt. The result starts one sample later.
inline Series difference_quotient(const Series& s) {
  require(s.dt > 0, "difference_quotient: dt must be positive");
  require(s.size() >= 2, "difference_quotient: need at least two samples");
  Series out{s.t0 + s.dt, s.dt, {}};
  out.samples.resize(s.size() - 1);
  for (std::size_t k = 1; k < s.size(); ++k)
    out.samples[k - 1] = (s.samples[k] - s.samples[k - 1]) / s.dt;
  return out;
}

/// Second-order Butterworth low-pass section, bilinear transform with the
/// cutoff prewarped so |H| = 1/sqrt(2) exactly at cutoff_hz.
class Butterworth2 {
 public:
  Butterworth2(double cutoff_hz, double dt) {
    require(dt > 0, "lowpass: dt must be positive");
    require(cutoff_hz > 0 && cutoff_hz < 0.5 / dt, "lowpass: cutoff must lie in (0, Nyquist)");
    const double k = std::tan(std::numbers::pi * cutoff_hz * dt);
    const double k2 = k * k;
    const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
    b0_ = k2 * norm;
    b1_ = 2.0 * b0_;
    b2_ = b0_;
    a1_ = 2.0 * (k2 - 1.0) * norm;
    a2_ = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
  }

  // Transposed direct form II; zero initial state.
  double operator()(double x) {
    const double y = b0_ * x + z1_;
    z1_ = b1_ * x - a1_ * y + z2_;
    z2_ = b2_ * x - a2_ * y;
    return y;
  }

  void reset() { z1_ = z2_ = 0.0; }

  double b0() const { return b0_; }
  double b1() const { return b1_; }
  double b2() const { return b2_; }
  double a1() const { return a1_; }
  double a2() const { return a2_; }

 private:
  double b0_, b1_, b2_, a1_, a2_;
  double z1_ = 0.0, z2_ = 0.0;
};

/// Causal single pass; the filter starts from rest, so the first few
/// 1/cutoff seconds carry a transient.
inline Series lowpass(const Series& s, double cutoff_hz) {
  Butterworth2 f(cutoff_hz, s.dt);
  Series out{s.t0, s.dt, {}};
  out.samples.reserve(s.size());
  for (double x : s.samples) out.samples.push_back(f(x));
  return out;
}

/// One-sided DFT magnitude, bins 0..floor(n/2).
struct Spectrum {
  std::vector<double> freqs;      // [Hz]
  std::vector<double> magnitude;  // |X_k|, unnormalized
  double bin_hz = 0.0;
  std::size_t n = 0;  // length of the transformed signal
};

/// Direct summation with an exact twiddle table indexed by (j*k) mod n, so no
/// phase accumulation error builds up.
inline Spectrum dft_magnitude(const Series& s) {
  require(s.dt > 0, "dft_magnitude: dt must be positive");
  require(s.size() >= 16, "dft_magnitude: need at least 16 samples");
  const std::size_t n = s.size();
  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    twiddle[j] = {std::cos(ang), std::sin(ang)};
  }
  Spectrum out;
  out.n = n;
  out.bin_hz = 1.0 / (static_cast<double>(n) * s.dt);
  const std::size_t bins = n / 2 + 1;
  out.freqs.resize(bins);
  out.magnitude.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    std::complex<double> acc{0.0, 0.0};
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += s.samples[j] * twiddle[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out.freqs[k] = static_cast<double>(k) * out.bin_hz;
    out.magnitude[k] = std::abs(acc);
  }
  return out;
}

/// Weight of bin k when folding the one-sided spectrum back to full energy.
inline double one_sided_weight(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (n % 2 == 0 && k == n / 2) return 1.0;
  return 2.0;
}

struct SpectrumReport {
  std::vector<double> freqs;
  std::vector<double> magnitude;         // output spectrum
  std::vector<double> input_magnitude;   // input spectrum
  std::vector<double> probe_freqs;
  double in_band_energy_fraction = 0.0;  // output, non-DC
  double input_off_probe_fraction = 0.0; // input, non-DC
  bool nonlinear = false;
};

inline constexpr double kNonlinearFlagFraction = 0.05;

namespace detail {

inline bool near_probe(double f, std::span<const double> probes, double half_bin) {
  for (double p : probes)
    if (std::abs(f - p) <= half_bin * (1.0 + 1e-9)) return true;
  return false;
}

/// Fraction of non-DC energy lying within half a bin of a probe frequency.
inline double in_band_fraction(const Spectrum& sp, std::span<const double> probes) {
  double total = 0.0, in_band = 0.0;
  for (std::size_t k = 1; k < sp.magnitude.size(); ++k) {
    const double e = one_sided_weight(k, sp.n) * sp.magnitude[k] * sp.magnitude[k];
    total += e;
    if (near_probe(sp.freqs[k], probes, 0.5 * sp.bin_hz)) in_band += e;
  }
  return total > 0.0 ? in_band / total : 1.0;
}

}  // namespace detail

/// Sinusoidal-fidelity check: how much of the output lives at the probe
/// frequencies, and whether the input already carries off-probe content.
inline SpectrumReport linearity_report(const Series& input, const Series& output,
                                       std::span<const double> probe_freqs) {
  require(input.size() == output.size(), "linearity_report: series lengths differ");
  require(std::abs(input.dt - output.dt) <= 1e-12 * input.dt,
          "linearity_report: sampling intervals differ");
  const Spectrum in_sp = dft_magnitude(input);
  const Spectrum out_sp = dft_magnitude(output);
  SpectrumReport r;
  r.freqs = out_sp.freqs;
  r.magnitude = out_sp.magnitude;
  r.input_magnitude = in_sp.magnitude;
  r.probe_freqs.assign(probe_freqs.begin(), probe_freqs.end());
  r.in_band_energy_fraction = detail::in_band_fraction(out_sp, probe_freqs);
  r.input_off_probe_fraction = 1.0 - detail::in_band_fraction(in_sp, probe_freqs);
  r.nonlinear = r.input_off_probe_fraction > kNonlinearFlagFraction;
  return r;
}

/// CSV with columns freq_hz,magnitude (output spectrum) and input_magnitude.
inline void write_csv(std::ostream& os, const SpectrumReport& r) {
  os.precision(17);
  os << "freq_hz,magnitude,input_magnitude\n";
  for (std::size_t k = 0; k < r.freqs.size(); ++k)
    os << r.freqs[k] << ',' << r.magnitude[k] << ',' << r.input_magnitude[k] << '\n';
}

}  // namespace quadmpc::sigproc
