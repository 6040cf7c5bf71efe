#pragma once

#include <string>
#include <vector>

#include "cavsqz/cavity.hpp"

namespace cavsqz {

// Acceleration noise spectral density sampled at increasing angular
// frequencies (rad/s), values in (m/s^2)^2 per rad/s. Interpolated linearly
// in log-log coordinates.
struct PsdTable {
  std::vector<double> omega;
  std::vector<double> density;

  void validate() const;
  double at(double w) const;  // with power-law extrapolation beyond the ends

  static PsdTable white(double s0, double omega_lo, double omega_hi, std::size_t points = 64);
};

// Two whitespace-separated columns: frequency in Hz and PSD in (m/s^2)^2/Hz.
// Lines starting with '#' are ignored.
PsdTable read_psd_file(const std::string& path);
PsdTable parse_psd(const std::string& text);

// |T(omega)|^2 = 64 k^2 / omega^4 sin^4(omega T / 2), with the omega -> 0 limit 4 k^2 T^4.
double transfer_function(double omega, double t_evol, const PhysicsParams& params);

struct PhaseNoiseOptions {
  bool extrapolate = false;
  double rel_tolerance = 1e-4;
};

// sqrt of the integral of |T|^2 S over [0, inf). Outside the table the
// spectrum follows the power law of the end segments.
double integrate_phase_noise(const PsdTable& psd, double t_evol, const PhysicsParams& params,
                             const PhaseNoiseOptions& options = {});

// phi^2 for white acceleration noise S0: (8 pi / 3) k^2 S0 T^3.
double white_noise_phase_variance(double s0, double t_evol, const PhysicsParams& params);

struct VibrationBudget {
  double phi_rms = 0.0;
  double sql = 0.0;           // 1 / sqrt(N)
  double db_below_sql = 0.0;  // 10 log10(sql^2 / phi^2)
};

VibrationBudget vibration_budget(const PsdTable& psd, double t_evol, int n_atoms, const PhysicsParams& params,
                                 const PhaseNoiseOptions& options = {});

}  // namespace cavsqz
