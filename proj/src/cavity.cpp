#include "cavsqz/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cavsqz/error.hpp"
#include "cavsqz/lsq.hpp"

namespace cavsqz {
namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive");
}

void require_ratio(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) throw InvalidArgument(std::string(name) + " must lie in (0, 1)");
}

double guarded(double denom, const char* label) {
  if (std::abs(denom) < kPoleGuard) {
    throw SingularityError(std::string("cavity detuning within 1 MHz of the ") + label + " pole");
  }
  return 1.0 / denom;
}

// Dispersive lineshape without the efficiency factor.
double lineshape(double d, double kappa) { return kappa * d / (d * d + 0.25 * kappa * kappa); }

}  // namespace

void PhysicsParams::validate() const {
  require_positive(g0, "g0");
  require_positive(kappa, "kappa");
  require_positive(fsr, "fsr");
  require_positive(waist_w0, "waist_w0");
  require_positive(length_l, "length_l");
  require_positive(rayleigh_zr, "rayleigh_zr");
  require_positive(omega_hf, "omega_hf");
  require_positive(delta2, "delta2");
  require_positive(delta1, "delta1");
  require_positive(gamma, "gamma");
  require_positive(wavelength, "wavelength");
  require_positive(mass, "mass");
  if (!std::isfinite(delta_c)) throw InvalidArgument("delta_c must be finite");
  if (!(gravity >= 0.0) || !std::isfinite(gravity)) throw InvalidArgument("gravity must be non-negative");
  require_ratio(b3, "b3");
  require_ratio(b2, "b2");
  require_ratio(b1, "b1");
  require_ratio(b2_down, "b2_down");
  require_ratio(b1_down, "b1_down");
}

Coupling effective_coupling(const PhysicsParams& params, const EnsembleGeometry& geometry) {
  if (geometry.z0 < 0.0 || geometry.sigma_z < 0.0 || geometry.r_rms < 0.0) {
    throw InvalidArgument("ensemble geometry must be non-negative");
  }
  if (geometry.r_rms >= params.waist_w0) {
    throw InvalidArgument("r_rms must be smaller than the cavity waist");
  }
  Coupling c;
  const double zr2 = params.rayleigh_zr * params.rayleigh_zr;
  c.f_cor = (geometry.z0 * geometry.z0 + geometry.sigma_z * geometry.sigma_z) / (2.0 * zr2) +
            geometry.r_rms * geometry.r_rms / (params.waist_w0 * params.waist_w0);
  c.g = params.g0 / std::sqrt(2.0) * (1.0 - c.f_cor);
  return c;
}

DispersiveShifts dispersive_shifts(const PhysicsParams& params, double g) {
  const double dc = params.delta_c;
  const double g2 = g * g;
  DispersiveShifts s;
  s.chi0 = g2 * (params.b3 * guarded(dc, "F'=3") + params.b2 * guarded(dc + params.delta2, "F'=2") +
                 params.b1 * guarded(dc + params.delta1, "F'=1"));
  s.chi_down = g2 * (params.b2_down * guarded(dc + params.delta2 - params.omega_hf, "lower F'=2") +
                     params.b1_down * guarded(dc + params.delta1 - params.omega_hf, "lower F'=1"));
  s.chi2 = g2 * guarded(dc, "cycling");
  s.epsilon = s.chi2 != 0.0 ? 0.5 * s.chi_down / s.chi2 : 0.0;
  return s;
}

double cooperativity(const PhysicsParams& params, double g) {
  require_positive(params.kappa, "kappa");
  require_positive(params.gamma, "gamma");
  return 4.0 * g * g / (params.kappa * params.gamma);
}

double reflection_q(double detuning, double kappa, double eta) { return eta * lineshape(detuning, kappa); }

double reflection_magnitude(double detuning, double kappa, double eta) {
  const double denom = detuning * detuning + 0.25 * kappa * kappa;
  const double re = 1.0 - eta * kappa * 0.5 * kappa / denom;
  const double im = eta * kappa * detuning / denom;
  return std::hypot(re, im);
}

SweepTrace synth_sweep(double shift, const PhysicsParams& params, double photons, double efficiency,
                       Philox4x32& rng, const SweepOptions& options) {
  if (!(efficiency > 0.0 && efficiency <= 1.0)) throw InvalidArgument("quantum efficiency must lie in (0, 1]");
  if (!(photons > 0.0)) throw InvalidArgument("photon number must be positive");
  if (!(options.eta > 0.0 && options.eta <= 1.0)) throw InvalidArgument("coupling efficiency must lie in (0, 1]");
  require_positive(options.sweep_rate, "sweep_rate");
  const double span = options.span > 0.0 ? options.span : options.sweep_rate * 150e-6;
  if (options.samples < 2) throw InvalidArgument("sweep needs at least two samples");
  const double step = span / (options.samples - 1);
  if (params.kappa / step < 8.0) throw InvalidArgument("sweep grid has fewer than 8 samples across kappa");

  SweepTrace t;
  t.sweep_rate = options.sweep_rate;
  t.photons_incident = photons;
  t.kappa = params.kappa;
  t.eta = options.eta;
  const double per_sample = photons / options.samples;
  t.noise_sigma = std::isfinite(photons) ? 1.0 / (2.0 * std::sqrt(efficiency * per_sample)) : 0.0;

  t.detuning.resize(options.samples);
  t.q_quadrature.resize(options.samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double start = options.center - 0.5 * span;
  for (int i = 0; i < options.samples; ++i) {
    const double x = start + step * i;
    t.detuning[i] = x;
    double q = reflection_q(x - shift, params.kappa, options.eta);
    if (options.broadening > 0.0) {
      // Convolution of the dispersive Lorentzian with a Lorentzian of HWHM w
      // widens the linewidth to kappa + 2w and scales the peak accordingly.
      const double k_eff = params.kappa + 2.0 * options.broadening;
      q = options.eta * (params.kappa / k_eff) * lineshape(x - shift, k_eff);
    }
    if (t.noise_sigma > 0.0) q += t.noise_sigma * normal(rng);
    t.q_quadrature[i] = q;
  }
  return t;
}

SweepFit fit_sweep(const SweepTrace& trace) {
  const std::size_t m = trace.detuning.size();
  if (m < 8 || trace.q_quadrature.size() != m) throw InvalidArgument("sweep trace too short");
  const double kappa = trace.kappa;
  const auto imax = static_cast<std::size_t>(
      std::max_element(trace.q_quadrature.begin(), trace.q_quadrature.end()) - trace.q_quadrature.begin());
  const auto imin = static_cast<std::size_t>(
      std::min_element(trace.q_quadrature.begin(), trace.q_quadrature.end()) - trace.q_quadrature.begin());
  double mean = 0.0;
  for (double v : trace.q_quadrature) mean += v;
  mean /= static_cast<double>(m);

  const double lo = trace.detuning.front();
  const double hi = trace.detuning.back();
  std::vector<double> p0{0.5 * (trace.detuning[imax] + trace.detuning[imin]),
                         0.5 * (trace.q_quadrature[imax] - trace.q_quadrature[imin]), mean};

  const auto& x = trace.detuning;
  const auto& y = trace.q_quadrature;
  ResidualFn fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& jac) {
    for (std::size_t i = 0; i < m; ++i) {
      const double d = x[i] - p[0];
      const double den = d * d + 0.25 * kappa * kappa;
      const double f = kappa * d / den;
      // df/dd = kappa (den - 2 d^2) / den^2
      const double dfdd = kappa * (den - 2.0 * d * d) / (den * den);
      r[i] = p[1] * f + p[2] - y[i];
      jac[i * 3 + 0] = -p[1] * dfdd;
      jac[i * 3 + 1] = f;
      jac[i * 3 + 2] = 1.0;
    }
  };
  LsqResult res = levenberg_marquardt(fn, p0, m);
  SweepFit out;
  out.shift = res.params[0];
  out.amplitude = res.params[1];
  out.offset = res.params[2];
  out.std_error = res.std_errors[0];
  out.iterations = res.iterations;
  out.residual_rms = res.residual_norm / std::sqrt(static_cast<double>(m));
  const double margin = 0.5 * kappa;
  if (!(out.shift >= lo + margin && out.shift <= hi - margin) || !(out.amplitude > 0.0) ||
      out.amplitude < 2.0 * res.std_errors[1]) {
    throw FitError("resonance not inside the sweep window", res.residual_norm, res.iterations);
  }
  return out;
}

}  // namespace cavsqz
