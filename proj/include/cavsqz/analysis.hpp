#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cavsqz/cavity.hpp"
#include "cavsqz/dynamics.hpp"
#include "cavsqz/rng.hpp"
#include "cavsqz/spin.hpp"

namespace cavsqz {

struct LedgerSnapshot {
  double coherent_fraction = 1.0;
  double lost_atoms = 0.0;
  double added_jz_diffusion = 0.0;
  bool scatter_clipped = false;
};

// One simulated shot. `group` names the role of the shot in the analysis
// (signal, a fringe scan, or an alpha section); `phase` is the scanned fringe
// phase and `alpha` the readout-rotation angle.
struct TrialRecord {
  std::uint64_t trial_id = 0;
  std::uint64_t seed = 0;
  std::string scenario_id;
  std::string group;
  std::optional<double> omega1p;
  std::optional<double> omega2p;
  std::optional<double> omega1f;
  std::optional<double> omega2f;
  double readout_azimuth = 0.0;
  double phase = 0.0;
  double alpha = 0.0;
  LedgerSnapshot ledger;
  int n_atoms_actual = 0;
};

struct FringeFit {
  double y0 = 0.0;
  double amplitude = 0.0;
  double phi0 = 0.0;
  double se_y0 = 0.0;
  double se_amplitude = 0.0;
  double se_phi0 = 0.0;
  double residual_rms = 0.0;
  std::size_t n_points = 0;
};

// Least-squares fit of y0 + A sin(phi - phi0) with A >= 0 and phi0 in [0, 2pi).
FringeFit fit_fringe(const std::vector<double>& phases, const std::vector<double>& values);

enum class ShiftMode { QndPre, PumpedFinal };

double jz_from_shifts(const TrialRecord& record, const DispersiveShifts& shifts, ShiftMode mode);

// The quantity whose fringe defines the amplitude used by theta_from_record:
// (w1p - w2p) / 2 for QndPre and w1f - w2f for PumpedFinal.
double fringe_observable(const TrialRecord& record, ShiftMode mode);

double theta_from_record(const TrialRecord& record, const FringeFit& fringe, ShiftMode mode, double epsilon);

// Bloch-vector length from a fringe amplitude.
double bloch_length(const FringeFit& fringe, const DispersiveShifts& shifts, ShiftMode mode);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct WinelandResult {
  double w = 0.0;
  double w_db = 0.0;  // positive below the SQL
  double dtheta = 0.0;
  double dtheta_sql = 0.0;
  Interval ci68;
  Interval ci95;
  std::size_t n_trials = 0;
  double j_c = 0.0;
  double j_s = 0.0;
};

struct BootstrapOptions {
  int resamples = 2000;
  std::uint64_t seed = 0x5eedULL;
  std::size_t min_trials = 30;
};

// W = Var(theta) / (1 / (2 J_c)) with a bias-corrected percentile bootstrap
// over trials.
WinelandResult wineland(const std::vector<double>& thetas, double j_c, const BootstrapOptions& options = {});

struct SignalSpec {
  ShiftMode readout = ShiftMode::PumpedFinal;
  // Subtract the pre-measurement estimate (QND noise cancellation).
  bool subtract_pre = false;
};

// Full estimator: theta per signal trial from the fringe amplitudes,
// J_c from the reference fringe. fringe_pre is needed only with subtract_pre.
WinelandResult wineland(const std::vector<TrialRecord>& signal, const FringeFit& fringe_with,
                        const FringeFit& fringe_without, ShiftMode without_mode, const DispersiveShifts& shifts,
                        const SignalSpec& spec, const std::optional<FringeFit>& fringe_pre = std::nullopt,
                        const BootstrapOptions& options = {});

std::vector<double> thetas_for(const std::vector<TrialRecord>& signal, const FringeFit& fringe_with,
                               const DispersiveShifts& shifts, const SignalSpec& spec,
                               const std::optional<FringeFit>& fringe_pre);

struct EllipseFit {
  double a = 0.0;
  double c = 0.0;          // >= 0
  double alpha_min = 0.0;  // in (-pi/2, pi/2]
  double v_min = 0.0;      // a - c
  double se_a = 0.0;
  double se_c = 0.0;
  double se_alpha_min = 0.0;
  double se_v_min = 0.0;
};

// Fits the variance-ellipse section V(alpha) = a - c cos(2 (alpha - alpha_min)).
EllipseFit variance_vs_alpha(const std::map<double, double>& variance_by_alpha);
double ellipse_curve(const EllipseFit& fit, double alpha);

struct Tomogram {
  std::vector<double> alphas;
  std::vector<double> bin_edges;
  std::vector<std::vector<double>> counts;  // [alpha][bin], normalized
  std::vector<double> section_variance;     // sample variance per alpha
  double anisotropy() const;                // max / min section variance
  double alpha_of_min() const;
};

// Rotates about the Bloch-vector axis by each alpha and histograms sampled Jz.
Tomogram tomography(const CollectiveSpinState& state, const std::vector<double>& alpha_grid, int bins,
                    int samples_per_angle, std::uint64_t seed);

}  // namespace cavsqz
