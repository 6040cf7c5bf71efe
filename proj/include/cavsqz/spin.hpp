#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "cavsqz/rng.hpp"

namespace cavsqz {

using Complex = std::complex<double>;

// Rotation / projection axis on the Bloch sphere. X and Y are stored as the
// equatorial azimuths 0 and pi/2; the azimuth is always wrapped to [0, 2pi).
class SpinAxis {
 public:
  enum class Kind { X, Y, Z, Equatorial };

  static SpinAxis x() { return SpinAxis(Kind::X, 0.0); }
  static SpinAxis y();
  static SpinAxis z() { return SpinAxis(Kind::Z, 0.0); }
  static SpinAxis equatorial(double azimuth);

  Kind kind() const { return kind_; }
  bool is_z() const { return kind_ == Kind::Z; }
  // Azimuth of an equatorial axis (X -> 0, Y -> pi/2). Meaningless for Z.
  double azimuth() const { return azimuth_; }

 private:
  SpinAxis(Kind kind, double azimuth) : kind_(kind), azimuth_(azimuth) {}

  Kind kind_;
  double azimuth_;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Pure state of N two-level atoms in the symmetric (Dicke) manifold.
// Amplitude index k = 0..N corresponds to m = k - N/2, i.e. 2m = 2k - N.
class CollectiveSpinState {
 public:
  // All atoms in the lower level, |J, -J>.
  explicit CollectiveSpinState(int n_atoms);

  static CollectiveSpinState dicke(int n_atoms, int two_m);
  static CollectiveSpinState from_amplitudes(int n_atoms, std::vector<Complex> amplitudes);

  int n_atoms() const { return n_atoms_; }
  double j() const { return 0.5 * n_atoms_; }
  std::size_t dim() const { return amps_.size(); }

  int two_m(std::size_t k) const { return 2 * static_cast<int>(k) - n_atoms_; }
  double m(std::size_t k) const { return static_cast<double>(k) - 0.5 * n_atoms_; }
  std::size_t index_of_two_m(int two_m) const;

  std::span<const Complex> amplitudes() const { return amps_; }
  std::span<Complex> amplitudes() { return amps_; }
  Complex amplitude_at_two_m(int two_m) const { return amps_[index_of_two_m(two_m)]; }

  double norm() const;
  void normalize();

 private:
  int n_atoms_;
  std::vector<Complex> amps_;
};

struct AxisStats {
  double mean = 0.0;
  double variance = 0.0;
};

// First and second moments of (Jx, Jy, Jz); cov is the symmetrized covariance.
struct SpinMoments {
  Vec3 mean;
  std::array<std::array<double, 3>, 3> cov{};
};

// Spin-coherent state pointing along (polar, azimuth).
CollectiveSpinState new_css(int n_atoms, double polar, double azimuth);

// exp(-i angle J_axis) |state>.
CollectiveSpinState rotate(const CollectiveSpinState& state, double angle, const SpinAxis& axis);

// Rotation about the axis (cos(azimuth), sin(azimuth), 0). Same as
// rotate(state, angle, SpinAxis::equatorial(azimuth)).
CollectiveSpinState rotate_equatorial(const CollectiveSpinState& state, double angle, double azimuth);
CollectiveSpinState rotate_z(const CollectiveSpinState& state, double angle);

AxisStats expect(const CollectiveSpinState& state, const SpinAxis& axis);
// Projection onto an arbitrary unit vector n.
AxisStats expect(const CollectiveSpinState& state, const Vec3& direction);
SpinMoments moments(const CollectiveSpinState& state);

// Samples m with probability |c_m|^2. The state is not modified.
double sample_jz(const CollectiveSpinState& state, Philox4x32& rng);
std::size_t sample_index(const CollectiveSpinState& state, Philox4x32& rng);

// Row-major (polar x azimuth) grid of Q = |<CSS(polar, azimuth)|psi>|^2.
struct QuasiProbabilityGrid {
  std::vector<double> polar;
  std::vector<double> azimuth;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * azimuth.size() + j]; }
};

QuasiProbabilityGrid husimi_q(const CollectiveSpinState& state, std::span<const double> polar_grid,
                              std::span<const double> azimuth_grid);

// |<a|b>|; both states must have the same atom number.
double overlap_abs(const CollectiveSpinState& a, const CollectiveSpinState& b);
Complex inner(const CollectiveSpinState& a, const CollectiveSpinState& b);

// Applies J_+ (raising) to an amplitude vector: (J+ psi)_{m+1} = a_m psi_m.
std::vector<Complex> apply_jplus(const CollectiveSpinState& state);

// Eigen-decomposition cache for the Jx generator. Entries are evicted in
// least-recently-used order once the stored eigenvectors exceed the limit.
void set_rotation_cache_limit(std::size_t bytes);
std::size_t rotation_cache_entries();

}  // namespace cavsqz
