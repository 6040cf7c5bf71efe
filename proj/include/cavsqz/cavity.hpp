#pragma once

#include <optional>
#include <vector>

#include "cavsqz/constants.hpp"
#include "cavsqz/rng.hpp"

namespace cavsqz {

struct PhysicsParams {
  double g0 = mhz(0.4853);           // rad/s, peak single-atom coupling
  double kappa = khz(56.0);          // rad/s, cavity power decay rate
  double fsr = ghz(6.7879);          // rad/s
  double waist_w0 = 72e-6;           // m
  double length_l = 2.2e-2;          // m
  double rayleigh_zr = 2.1e-2;       // m
  double delta_c = mhz(175.0);       // rad/s, cavity detuning from F=2 -> F'=3
  double omega_hf = ghz(6.8347);     // rad/s, ground hyperfine splitting
  double delta2 = mhz(266.7);        // rad/s, F'=3 -> F'=2 splitting
  double delta1 = mhz(423.6);        // rad/s, F'=3 -> F'=1 splitting
  double b3 = 6.0 / 15.0;
  double b2 = 3.0 / 12.0;
  double b1 = 1.0 / 60.0;
  double b2_down = 3.0 / 12.0;
  double b1_down = 5.0 / 12.0;
  double gamma = mhz(6.065);         // rad/s, excited-state linewidth
  double wavelength = 780.241e-9;    // m
  double mass = kMassRb87;           // kg
  double gravity = 9.796;            // m/s^2, projection on the cavity axis

  double k() const { return kTwoPi / wavelength; }
  void validate() const;
};

struct EnsembleGeometry {
  double z0 = 1e-3;         // m, axial offset from the cavity waist
  double sigma_z = 0.5e-3;  // m, axial rms extent
  double r_rms = 4.7e-6;    // m, transverse rms radius
};

struct Coupling {
  double g = 0.0;      // rad/s
  double f_cor = 0.0;  // fractional reduction from ensemble averaging
};

struct DispersiveShifts {
  double chi0 = 0.0;      // rad/s per atom in the upper clock state
  double chi_down = 0.0;  // rad/s per atom in the lower clock state
  double chi2 = 0.0;      // rad/s per atom on the cycling transition
  double epsilon = 0.0;   // chi_down / (2 chi2)
};

Coupling effective_coupling(const PhysicsParams& params, const EnsembleGeometry& geometry);

// Minimum distance of any denominator from its pole before a SingularityError.
inline constexpr double kPoleGuard = mhz(1.0);

DispersiveShifts dispersive_shifts(const PhysicsParams& params, double g);

double cooperativity(const PhysicsParams& params, double g);

struct SweepOptions {
  double eta = 0.9;                    // cavity coupling efficiency
  double sweep_rate = mhz(1.5) / 1e-3; // rad/s per s
  double span = 0.0;                   // rad/s; 0 selects sweep_rate * 150 us
  double center = 0.0;                 // rad/s; grid center relative to the empty cavity
  int samples = 301;
  double broadening = 0.0;             // rad/s, optional Lorentzian HWHM; 0 disables
};

struct SweepTrace {
  std::vector<double> detuning;  // rad/s relative to the empty-cavity resonance
  std::vector<double> q_quadrature;
  double sweep_rate = 0.0;
  double photons_incident = 0.0;
  double noise_sigma = 0.0;  // per-sample standard deviation of q_quadrature
  double kappa = 0.0;
  double eta = 0.0;
};

// Q quadrature of r(d) = 1 - eta kappa / (i d + kappa/2), d = probe - resonance.
double reflection_q(double detuning, double kappa, double eta);
// |r(d)|.
double reflection_magnitude(double detuning, double kappa, double eta);

// photons <= 0 or infinite gives a noiseless trace.
SweepTrace synth_sweep(double shift, const PhysicsParams& params, double photons, double efficiency,
                       Philox4x32& rng, const SweepOptions& options = {});

struct SweepFit {
  double shift = 0.0;
  double std_error = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double residual_rms = 0.0;
  int iterations = 0;
};

SweepFit fit_sweep(const SweepTrace& trace);

}  // namespace cavsqz
