#include "cavsqz/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"

namespace cavsqz {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

Vec3 axis_vector(const SpinAxis& axis) {
  if (axis.is_z()) return {0.0, 0.0, 1.0};
  return {std::cos(axis.azimuth()), std::sin(axis.azimuth()), 0.0};
}

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
Vec3 scale(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

TwistOptimum plane_minimum(double vzz, double vuu, double vzu) {
  // V(a) = vzz cos^2 a + vuu sin^2 a + 2 vzu sin a cos a
  const double mean = 0.5 * (vzz + vuu);
  const double half = 0.5 * (vzz - vuu);
  const double amp = std::hypot(half, vzu);
  TwistOptimum out;
  out.v_min = mean - amp;
  // minimum where cos(2a - atan2(vzu, half)) = -1
  double a = 0.5 * (std::atan2(vzu, half) + kPi);
  if (a > 0.5 * kPi) a -= kPi;
  out.alpha0 = a;
  return out;
}

}  // namespace

void NoiseConfig::validate() const {
  require(quantum_efficiency > 0.0 && quantum_efficiency <= 1.0, "quantum_efficiency must lie in (0, 1]");
  require(imprecision_coeff > 0.0 && std::isfinite(imprecision_coeff), "imprecision_coeff must be positive");
  require(scatter_coeff >= 0.0 && std::isfinite(scatter_coeff), "scatter_coeff must be non-negative");
  require(raman_decorrelation_fraction >= 0.0 && raman_decorrelation_fraction <= 1.0,
          "raman_decorrelation_fraction must lie in [0, 1]");
  require(std::isfinite(readout_floor_db), "readout_floor_db must be finite");
  require(pulse_loss_prob >= 0.0 && pulse_loss_prob < 1.0, "pulse_loss_prob must lie in [0, 1)");
  require(dephasing_coeff >= 0.0 && std::isfinite(dephasing_coeff), "dephasing_coeff must be non-negative");
  require(atom_number_cv >= 0.0 && atom_number_cv < 0.5, "atom_number_cv must lie in [0, 0.5)");
}

Vec3 rotate_vector(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const Vec3 kxv = cross(axis, v);
  const double kv = dot(axis, v);
  return {v.x * c + kxv.x * s + axis.x * kv * (1.0 - c), v.y * c + kxv.y * s + axis.y * kv * (1.0 - c),
          v.z * c + kxv.z * s + axis.z * kv * (1.0 - c)};
}

CollectiveSpinState twist(const CollectiveSpinState& state, const TwistSpec& spec) {
  require(std::isfinite(spec.mu) && std::isfinite(spec.linear), "twist strength must be finite");
  auto apply = [](const CollectiveSpinState& s, double mu, double linear) {
    std::vector<Complex> amps(s.amplitudes().begin(), s.amplitudes().end());
    for (std::size_t k = 0; k < amps.size(); ++k) {
      const double m = s.m(k);
      amps[k] *= std::polar(1.0, -(mu * m * m + linear * m));
    }
    return CollectiveSpinState::from_amplitudes(s.n_atoms(), std::move(amps));
  };
  if (!spec.echo) return apply(state, spec.mu, spec.linear);
  const Vec3 mean = moments(state).mean;
  const double azimuth = std::atan2(mean.y, mean.x);
  auto half = apply(state, 0.5 * spec.mu, 0.5 * spec.linear);
  half = rotate_equatorial(half, kPi, azimuth);
  return apply(half, 0.5 * spec.mu, 0.5 * spec.linear);
}

TwistOptimum optimal_twist_analysis(int n_atoms, double mu) {
  require(n_atoms >= 2, "optimal_twist_analysis needs n_atoms >= 2");
  const auto state = twist(new_css(n_atoms, 0.5 * kPi, 0.0), TwistSpec{mu, hz(10.0), false, 0.0});
  const SpinMoments mo = moments(state);
  TwistOptimum out = plane_minimum(mo.cov[2][2], mo.cov[1][1], mo.cov[1][2]);
  out.v_min /= 0.25 * n_atoms;
  return out;
}

TwistOptimum min_variance_direction(const CollectiveSpinState& state) {
  const SpinMoments mo = moments(state);
  const Vec3 z{0.0, 0.0, 1.0};
  Vec3 u = cross(z, mo.mean);
  const double len = std::sqrt(dot(u, u));
  if (!(len > 1e-12)) throw InvalidArgument("mean spin has no transverse component");
  u = scale(u, 1.0 / len);
  const std::array<double, 3> uv{u.x, u.y, u.z};
  double vuu = 0.0, vzu = 0.0;
  for (int a = 0; a < 3; ++a) {
    vzu += uv[a] * mo.cov[2][a];
    for (int b = 0; b < 3; ++b) vuu += uv[a] * uv[b] * mo.cov[a][b];
  }
  TwistOptimum out = plane_minimum(mo.cov[2][2], vuu, vzu);
  out.v_min /= 0.25 * state.n_atoms();
  return out;
}

CollectiveSpinState apply_gaussian_kraus(const CollectiveSpinState& state, double outcome, double sigma) {
  require(sigma > 0.0 && std::isfinite(outcome), "Kraus operator needs sigma > 0 and a finite outcome");
  std::vector<Complex> amps(state.amplitudes().begin(), state.amplitudes().end());
  // Work relative to the largest weight to avoid underflow for small sigma.
  double min_exp = INFINITY;
  for (std::size_t k = 0; k < amps.size(); ++k) {
    if (std::norm(amps[k]) == 0.0) continue;
    const double d = state.m(k) - outcome;
    min_exp = std::min(min_exp, d * d / (4.0 * sigma * sigma));
  }
  if (!std::isfinite(min_exp)) throw Error("Kraus update on an empty state");
  for (std::size_t k = 0; k < amps.size(); ++k) {
    const double d = state.m(k) - outcome;
    amps[k] *= std::exp(-(d * d / (4.0 * sigma * sigma) - min_exp));
  }
  auto out = CollectiveSpinState::from_amplitudes(state.n_atoms(), std::move(amps));
  out.normalize();
  return out;
}

QndResult qnd_measure(const CollectiveSpinState& state, double sigma, Philox4x32& rng) {
  require(sigma > 0.0 && std::isfinite(sigma), "qnd_measure needs sigma > 0");
  const double m = sample_jz(state, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double x = m + sigma * normal(rng);
  return {x, apply_gaussian_kraus(state, x, sigma)};
}

double imprecision_from_photons(double photons, const NoiseConfig& noise) {
  require(photons > 0.0, "photon number must be positive");
  return std::sqrt(noise.imprecision_coeff / (noise.quantum_efficiency * photons));
}

Vec3 coherent_mean(const CollectiveSpinState& state, const ContrastLedger& ledger) {
  Vec3 mean = moments(state).mean;
  for (const auto& e : ledger.events) mean = sub(mean, e.vector);
  return mean;
}

void apply_scattering(const CollectiveSpinState& state, ContrastLedger& ledger, double photons,
                      const NoiseConfig& noise) {
  require(photons >= 0.0, "photon number must be non-negative");
  if (photons == 0.0 || noise.scatter_coeff == 0.0) return;
  double p = noise.scatter_coeff * photons;
  if (p > 1.0) {
    p = 1.0;
    ledger.scatter_clipped = true;
  }
  const double n_coherent = ledger.coherent_fraction * state.n_atoms();
  const Vec3 mean = coherent_mean(state, ledger);
  // Scattering preserves the populations, so only the transverse mean is lost.
  ledger.events.push_back({p * n_coherent, Vec3{p * mean.x, p * mean.y, 0.0}});
  ledger.coherent_fraction *= 1.0 - p;
  const double r = noise.raman_decorrelation_fraction;
  ledger.lost_atoms += r * p * n_coherent;
  ledger.added_jz_diffusion += (1.0 - r) * p * n_coherent / 4.0;
}

void apply_pulse_loss(const CollectiveSpinState& state, ContrastLedger& ledger, double p) {
  require(p >= 0.0 && p <= 1.0, "pulse loss probability must lie in [0, 1]");
  if (p == 0.0) return;
  const double n_coherent = ledger.coherent_fraction * state.n_atoms();
  const Vec3 mean = coherent_mean(state, ledger);
  ledger.events.push_back({p * n_coherent, scale(mean, p)});
  ledger.coherent_fraction *= 1.0 - p;
  ledger.lost_atoms += p * n_coherent;
}

CollectiveSpinState rotate_tracked(const CollectiveSpinState& state, ContrastLedger& ledger, double angle,
                                   const SpinAxis& axis) {
  const Vec3 n = axis_vector(axis);
  for (auto& e : ledger.events) e.vector = rotate_vector(e.vector, n, angle);
  return rotate(state, angle, axis);
}

CollectiveSpinState free_evolve(const CollectiveSpinState& state, double t_evol_s, double signal_phase,
                                const NoiseConfig& noise, Philox4x32& rng, ContrastLedger* ledger) {
  require(t_evol_s >= 0.0, "evolution time must be non-negative");
  double angle = signal_phase;
  const double rms = noise.dephasing_coeff * t_evol_s * 1e3;
  if (rms > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    angle += rms * normal(rng);
  }
  if (angle == 0.0) return state;
  if (ledger != nullptr) return rotate_tracked(state, *ledger, angle, SpinAxis::z());
  return rotate_z(state, angle);
}

double readout_jz(const CollectiveSpinState& state, const ContrastLedger& ledger, Philox4x32& rng,
                  bool projection_noise) {
  double removed = 0.0;
  double event_var = 0.0;
  for (const auto& e : ledger.events) {
    removed += e.vector.z;
    if (e.atoms > 0.0) event_var += e.vector.z * e.vector.z / e.atoms;
  }
  if (!projection_noise) return expect(state, SpinAxis::z()).mean - removed;
  std::normal_distribution<double> normal(0.0, 1.0);
  double jz = sample_jz(state, rng) - removed;
  const double extra = event_var + ledger.added_jz_diffusion;
  if (extra > 0.0) jz += std::sqrt(extra) * normal(rng);
  return jz;
}

}  // namespace cavsqz
