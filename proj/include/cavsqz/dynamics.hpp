#pragma once

#include <vector>

#include "cavsqz/constants.hpp"
#include "cavsqz/rng.hpp"
#include "cavsqz/spin.hpp"

namespace cavsqz {

struct NoiseConfig {
  double quantum_efficiency = 0.1;
  double imprecision_coeff = 1.0;        // A_meas: sigma^2 = A_meas / (q M)
  double scatter_coeff = 0.0;            // beta: scattering probability per photon per atom
  double raman_decorrelation_fraction = 1.0;
  double readout_floor_db = 15.0;        // technical readout noise, dB below projection noise
  double pulse_loss_prob = 0.002;
  double dephasing_coeff = 0.0;          // rad rms per ms of evolution time
  double atom_number_cv = 0.0;

  void validate() const;
};

// Atoms that left the coherent manifold at some point of the sequence. The
// vector is the mean spin they carried at that moment; it is rotated along
// with every later rotation so that the readout can remove it.
struct DecoherenceEvent {
  double atoms = 0.0;
  Vec3 vector;
};

struct ContrastLedger {
  double coherent_fraction = 1.0;
  double lost_atoms = 0.0;
  double added_jz_diffusion = 0.0;
  bool scatter_clipped = false;
  std::vector<DecoherenceEvent> events;
};

struct TwistSpec {
  double mu = 0.0;          // total twist, summed over both echo arms
  double chi_oat = hz(10.0);
  bool echo = true;
  double linear = 0.0;      // mean-field phase per unit m, cancelled by the echo
};

// c_m *= exp(-i (mu m^2 + linear m)). With echo the sequence is
// T(mu/2) R_pi(bloch axis) T(mu/2), which equals R_pi T(mu) with the linear
// term removed.
CollectiveSpinState twist(const CollectiveSpinState& state, const TwistSpec& spec);

struct TwistOptimum {
  double v_min = 1.0;   // minimum variance in the y-z plane, in units of N/4
  double alpha0 = 0.0;  // angle of the minimum from z toward y
};

// Exact analysis of the twisted CSS(+x) (no echo).
TwistOptimum optimal_twist_analysis(int n_atoms, double mu);
// Same analysis on an arbitrary state, using the plane orthogonal to its mean
// spin. alpha is measured from z toward the in-plane axis z x mean.
TwistOptimum min_variance_direction(const CollectiveSpinState& state);

struct QndResult {
  double outcome = 0.0;
  CollectiveSpinState state;
};

// Gaussian measurement of Jz with imprecision sigma (Jz units).
QndResult qnd_measure(const CollectiveSpinState& state, double sigma, Philox4x32& rng);
// The Kraus step alone: c_m *= exp(-(m - x)^2 / (4 sigma^2)), renormalized.
CollectiveSpinState apply_gaussian_kraus(const CollectiveSpinState& state, double outcome, double sigma);

double imprecision_from_photons(double photons, const NoiseConfig& noise);

// Free-space scattering of `photons` probe photons. The state is unchanged;
// the ledger records a transverse decoherence event and atom loss.
void apply_scattering(const CollectiveSpinState& state, ContrastLedger& ledger, double photons,
                      const NoiseConfig& noise);

// Imperfect pulse: a fraction p of the coherent atoms is removed before the
// pulse acts.
void apply_pulse_loss(const CollectiveSpinState& state, ContrastLedger& ledger, double p);

// Rotation of the state and of every recorded decoherence vector.
CollectiveSpinState rotate_tracked(const CollectiveSpinState& state, ContrastLedger& ledger, double angle,
                                   const SpinAxis& axis);

// z rotation by signal_phase plus Gaussian dephasing of rms dephasing_coeff * t (t in ms).
CollectiveSpinState free_evolve(const CollectiveSpinState& state, double t_evol_s, double signal_phase,
                                const NoiseConfig& noise, Philox4x32& rng, ContrastLedger* ledger = nullptr);

// Mean spin of the coherent atoms: state mean minus the recorded events.
Vec3 coherent_mean(const CollectiveSpinState& state, const ContrastLedger& ledger);

// Observed Jz of the surviving ensemble. With projection_noise the Dicke
// level is sampled and the decohered atoms contribute their own shot noise;
// otherwise the expectation value is returned.
double readout_jz(const CollectiveSpinState& state, const ContrastLedger& ledger, Philox4x32& rng,
                  bool projection_noise = true);

// Right-handed rotation of a 3-vector about a unit axis.
Vec3 rotate_vector(const Vec3& v, const Vec3& axis, double angle);

}  // namespace cavsqz
