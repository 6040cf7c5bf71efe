#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cavsqz/cavity.hpp"

namespace cavsqz {

enum class HyperfineLabel : std::uint8_t { Down = 0, Up = 1 };

// Axial momentum populations in units of hbar k. Entries are kept sorted by
// (momentum, label); `lost` collects population removed by imperfect pulses.
struct MomentumDistribution {
  std::vector<double> momentum;
  std::vector<double> weight;
  std::vector<HyperfineLabel> label;
  double lost = 0.0;

  std::size_t size() const { return momentum.size(); }
  double total() const;
  double mean() const;
  double rms_spread() const;
  double weight_at(double p, HyperfineLabel l, double tol = 1e-9) const;
  void validate() const;

  static MomentumDistribution gaussian(double fwhm, double center = 0.0, double resolution = 0.01,
                                       double half_extent_fwhm = 3.0);
  static MomentumDistribution discrete(std::vector<double> momenta, std::vector<double> weights,
                                       std::vector<HyperfineLabel> labels = {});
};

enum class PulseKind { Raman, Bragg };

struct RamanPulse {
  double rabi = khz(10.0);  // rad/s, two-photon Rabi frequency
  double duration = 0.0;    // s
  double detuning = 0.0;    // rad/s, relative to the 0 -> 2 hbar k resonance
  PulseKind kind = PulseKind::Raman;
  double axis_azimuth = 0.0;
  // When set, the pulse drives only the pair (target, target + 2) with
  // transfer sin^2(rabi * duration / 2); all other classes are untouched.
  std::optional<double> ideal_target;

  static RamanPulse ideal(PulseKind kind, double lower_momentum, double area, double rabi = khz(10.0));
};

double recoil_frequency(const PhysicsParams& params);  // rad/s
double chirp_rate(const PhysicsParams& params);        // rad/s per s
double doppler_detuning(double p_hbark, const PhysicsParams& params);

double transfer_probability(const RamanPulse& pulse, double delta_eff);

struct SelectionResult {
  MomentumDistribution distribution;
  double survival = 0.0;
  bool empty = false;
};

// Repeated pi-pulse filtering centred on delta_vs; rejected atoms are removed.
SelectionResult velocity_select(const MomentumDistribution& dist, double rabi, double delta_vs, int passes,
                                const PhysicsParams& params);

std::vector<double> velocity_spectrum(const MomentumDistribution& dist, double rabi,
                                      const std::vector<double>& delta_grid, const PhysicsParams& params);

MomentumDistribution apply_momentum_pulse(const MomentumDistribution& dist, const RamanPulse& pulse,
                                          const PhysicsParams& params, double pulse_loss_prob = 0.0);

// Weighted mean of Omega^2 / (Omega^2 + delta^2): the fraction of the pulse
// area that stays coherent across the Doppler distribution.
double pulse_contrast_factor(const MomentumDistribution& dist, double rabi, const PhysicsParams& params);

enum class Frame { Lab, Falling };

double accumulated_phase(double t_evol, Frame frame, double chirp_b, const PhysicsParams& params);

std::string distribution_csv(const MomentumDistribution& dist);
std::string spectrum_csv(const std::vector<double>& delta_grid, const std::vector<double>& population);

}  // namespace cavsqz
