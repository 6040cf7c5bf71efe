#include "cavsqz/spin.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <list>
#include <memory>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"

namespace cavsqz {
namespace {

double wrap_azimuth(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

// <m+1|J+|m> for the spin-J representation.
inline double ladder(double j, double m) { return std::sqrt(std::max(0.0, j * (j + 1.0) - m * (m + 1.0))); }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be finite");
}

// Eigenvectors of the tridiagonal Jx matrix. vecs[j * dim + k] is component k
// of the eigenvector with eigenvalue m_j = j - J (ascending order).
struct XGenerator {
  int n_atoms;
  std::size_t dim;
  std::vector<double> vecs;
};

std::shared_ptr<const XGenerator> build_generator(int n_atoms) {
  const auto n = static_cast<lapack_int>(n_atoms + 1);
  const double j = 0.5 * n_atoms;
  std::vector<double> diag(n, 0.0);
  std::vector<double> off(n, 0.0);
  for (lapack_int k = 0; k + 1 < n; ++k) off[k] = 0.5 * ladder(j, k - j);

  auto gen = std::make_shared<XGenerator>();
  gen->n_atoms = n_atoms;
  gen->dim = static_cast<std::size_t>(n);
  gen->vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> w(n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', n, diag.data(), off.data(), 0.0, 0.0, 0,
                                         0, 0.0, &found, w.data(), gen->vecs.data(), n, support.data());
  if (info != 0 || found != n) throw Error("Jx eigendecomposition failed (dstevr info " + std::to_string(info) + ")");
  for (lapack_int k = 0; k < n; ++k) {
    if (std::abs(w[k] - (k - j)) > 1e-6) throw Error("Jx eigenvalues out of order");
  }
  return gen;
}

class GeneratorCache {
 public:
  std::shared_ptr<const XGenerator> get(int n_atoms) {
    std::unique_lock lock(mutex_);
    if (auto it = index_.find(n_atoms); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return *it->second;
    }
    lock.unlock();
    auto gen = build_generator(n_atoms);
    lock.lock();
    if (auto it = index_.find(n_atoms); it != index_.end()) return *it->second;
    lru_.push_front(gen);
    index_[n_atoms] = lru_.begin();
    bytes_ += bytes_of(*gen);
    while (bytes_ > limit_ && lru_.size() > 1) {
      const auto& victim = lru_.back();
      bytes_ -= bytes_of(*victim);
      index_.erase(victim->n_atoms);
      lru_.pop_back();
    }
    return gen;
  }

  void set_limit(std::size_t bytes) {
    std::lock_guard lock(mutex_);
    limit_ = bytes;
  }

  std::size_t size() {
    std::lock_guard lock(mutex_);
    return lru_.size();
  }

 private:
  static std::size_t bytes_of(const XGenerator& g) { return g.vecs.size() * sizeof(double); }

  std::mutex mutex_;
  std::list<std::shared_ptr<const XGenerator>> lru_;
  std::unordered_map<int, std::list<std::shared_ptr<const XGenerator>>::iterator> index_;
  std::size_t bytes_ = 0;
  std::size_t limit_ = std::size_t{1} << 30;
};

GeneratorCache& cache() {
  static GeneratorCache instance;
  return instance;
}

// exp(-i angle Jx) applied in place through the cached eigenbasis.
void apply_x_rotation(std::vector<Complex>& psi, int n_atoms, double angle) {
  const auto gen = cache().get(n_atoms);
  const std::size_t n = gen->dim;
  const double j = 0.5 * n_atoms;
  const double* v = gen->vecs.data();

  std::vector<double> re(n), im(n);
  for (std::size_t k = 0; k < n; ++k) {
    re[k] = psi[k].real();
    im[k] = psi[k].imag();
  }
  std::vector<double> ur(n), ui(n);
  for (std::size_t e = 0; e < n; ++e) {
    const double* row = v + e * n;
    double sr = 0.0, si = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sr += row[k] * re[k];
      si += row[k] * im[k];
    }
    const double lambda = static_cast<double>(e) - j;
    const double c = std::cos(angle * lambda);
    const double s = -std::sin(angle * lambda);
    ur[e] = c * sr - s * si;
    ui[e] = c * si + s * sr;
  }
  std::fill(re.begin(), re.end(), 0.0);
  std::fill(im.begin(), im.end(), 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    const double* row = v + e * n;
    const double a = ur[e], b = ui[e];
    for (std::size_t k = 0; k < n; ++k) {
      re[k] += row[k] * a;
      im[k] += row[k] * b;
    }
  }
  for (std::size_t k = 0; k < n; ++k) psi[k] = Complex(re[k], im[k]);
}

void apply_z_phase(std::vector<Complex>& psi, int n_atoms, double angle) {
  const double j = 0.5 * n_atoms;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double m = static_cast<double>(k) - j;
    psi[k] *= std::polar(1.0, -angle * m);
  }
}

// Half-integer-safe log binomial coefficient.
double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

std::vector<Complex> css_amplitudes(int n_atoms, double polar, double azimuth) {
  const double j = 0.5 * n_atoms;
  const double c = std::cos(0.5 * polar);
  const double s = std::sin(0.5 * polar);
  const double log_c = std::log(std::abs(c));
  const double log_s = std::log(std::abs(s));
  const double sign_c = c < 0.0 ? -1.0 : 1.0;
  const double sign_s = s < 0.0 ? -1.0 : 1.0;
  std::vector<Complex> amps(n_atoms + 1);
  for (int k = 0; k <= n_atoms; ++k) {
    const int up = k;             // J + m
    const int down = n_atoms - k;  // J - m
    double mag = 0.0;
    if ((up > 0 && c == 0.0) || (down > 0 && s == 0.0)) {
      mag = 0.0;
    } else {
      double lg = 0.5 * log_binomial(n_atoms, k);
      if (up > 0) lg += up * log_c;
      if (down > 0) lg += down * log_s;
      mag = std::exp(lg);
      if (up % 2 == 1 && sign_c < 0) mag = -mag;
      if (down % 2 == 1 && sign_s < 0) mag = -mag;
    }
    const double m = k - j;
    amps[k] = mag * std::polar(1.0, -m * azimuth);
  }
  return amps;
}

}  // namespace

SpinAxis SpinAxis::y() { return SpinAxis(Kind::Y, 0.5 * kPi); }

SpinAxis SpinAxis::equatorial(double azimuth) {
  require_finite(azimuth, "azimuth");
  return SpinAxis(Kind::Equatorial, wrap_azimuth(azimuth));
}

CollectiveSpinState::CollectiveSpinState(int n_atoms) : n_atoms_(n_atoms) {
  if (n_atoms < 1) throw InvalidArgument("n_atoms must be >= 1");
  amps_.assign(static_cast<std::size_t>(n_atoms) + 1, Complex(0.0, 0.0));
  amps_[0] = 1.0;
}

CollectiveSpinState CollectiveSpinState::dicke(int n_atoms, int two_m) {
  CollectiveSpinState s(n_atoms);
  const std::size_t k = s.index_of_two_m(two_m);
  s.amps_[0] = 0.0;
  s.amps_[k] = 1.0;
  return s;
}

CollectiveSpinState CollectiveSpinState::from_amplitudes(int n_atoms, std::vector<Complex> amplitudes) {
  CollectiveSpinState s(n_atoms);
  if (amplitudes.size() != s.dim()) throw InvalidArgument("amplitude vector must have length n_atoms + 1");
  s.amps_ = std::move(amplitudes);
  return s;
}

std::size_t CollectiveSpinState::index_of_two_m(int two_m) const {
  if (two_m < -n_atoms_ || two_m > n_atoms_ || (two_m + n_atoms_) % 2 != 0) {
    throw InvalidArgument("2m out of range for this atom number");
  }
  return static_cast<std::size_t>((two_m + n_atoms_) / 2);
}

double CollectiveSpinState::norm() const {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return std::sqrt(s);
}

void CollectiveSpinState::normalize() {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalize a zero or non-finite state");
  for (auto& a : amps_) a /= n;
}

CollectiveSpinState new_css(int n_atoms, double polar, double azimuth) {
  if (n_atoms < 1) throw InvalidArgument("n_atoms must be >= 1");
  require_finite(polar, "polar");
  require_finite(azimuth, "azimuth");
  return CollectiveSpinState::from_amplitudes(n_atoms, css_amplitudes(n_atoms, polar, azimuth));
}

CollectiveSpinState rotate_z(const CollectiveSpinState& state, double angle) {
  require_finite(angle, "rotation angle");
  std::vector<Complex> psi(state.amplitudes().begin(), state.amplitudes().end());
  apply_z_phase(psi, state.n_atoms(), angle);
  return CollectiveSpinState::from_amplitudes(state.n_atoms(), std::move(psi));
}

CollectiveSpinState rotate_equatorial(const CollectiveSpinState& state, double angle, double azimuth) {
  require_finite(angle, "rotation angle");
  require_finite(azimuth, "azimuth");
  const int n = state.n_atoms();
  std::vector<Complex> psi(state.amplitudes().begin(), state.amplitudes().end());
  if (angle == 0.0) return state;
  if (angle == kPi) {
    // exp(-i pi J_phi)|m> = exp(-i pi J) exp(2 i phi m) |-m>
    const double j = state.j();
    const Complex global = std::polar(1.0, -kPi * j);
    std::vector<Complex> out(psi.size());
    for (std::size_t k = 0; k < psi.size(); ++k) {
      const double m = state.m(k);
      out[psi.size() - 1 - k] = global * std::polar(1.0, 2.0 * azimuth * m) * psi[k];
    }
    return CollectiveSpinState::from_amplitudes(n, std::move(out));
  }
  apply_z_phase(psi, n, -azimuth);
  apply_x_rotation(psi, n, angle);
  apply_z_phase(psi, n, azimuth);
  return CollectiveSpinState::from_amplitudes(n, std::move(psi));
}

CollectiveSpinState rotate(const CollectiveSpinState& state, double angle, const SpinAxis& axis) {
  if (axis.is_z()) return rotate_z(state, angle);
  return rotate_equatorial(state, angle, axis.azimuth());
}

std::vector<Complex> apply_jplus(const CollectiveSpinState& state) {
  const auto psi = state.amplitudes();
  const double j = state.j();
  std::vector<Complex> out(psi.size(), Complex(0.0, 0.0));
  for (std::size_t k = 0; k + 1 < psi.size(); ++k) out[k + 1] = ladder(j, state.m(k)) * psi[k];
  return out;
}

SpinMoments moments(const CollectiveSpinState& state) {
  const auto psi = state.amplitudes();
  const std::size_t n = psi.size();
  const double j = state.j();
  // Jx psi, Jy psi, Jz psi
  std::vector<Complex> vx(n), vy(n), vz(n);
  const Complex i(0.0, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double m = state.m(k);
    Complex up(0.0, 0.0), down(0.0, 0.0);  // (J+ psi)_k, (J- psi)_k
    if (k > 0) up = ladder(j, m - 1.0) * psi[k - 1];
    if (k + 1 < n) down = ladder(j, m) * psi[k + 1];
    vx[k] = 0.5 * (up + down);
    vy[k] = -0.5 * i * (up - down);
    vz[k] = m * psi[k];
  }
  const std::array<const std::vector<Complex>*, 3> v{&vx, &vy, &vz};
  auto dot = [&](const std::vector<Complex>& a, const std::vector<Complex>& b) {
    Complex s(0.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) s += std::conj(a[k]) * b[k];
    return s;
  };
  SpinMoments out;
  std::array<double, 3> mean{};
  for (int a = 0; a < 3; ++a) {
    Complex s(0.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) s += std::conj(psi[k]) * (*v[a])[k];
    mean[a] = s.real();
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const double second = dot(*v[a], *v[b]).real();
      out.cov[a][b] = out.cov[b][a] = second - mean[a] * mean[b];
    }
  }
  out.mean = {mean[0], mean[1], mean[2]};
  return out;
}

AxisStats expect(const CollectiveSpinState& state, const Vec3& direction) {
  const double len = std::sqrt(direction.x * direction.x + direction.y * direction.y + direction.z * direction.z);
  if (!(len > 0.0)) throw InvalidArgument("projection direction must be non-zero");
  const std::array<double, 3> d{direction.x / len, direction.y / len, direction.z / len};
  const SpinMoments mo = moments(state);
  const std::array<double, 3> mean{mo.mean.x, mo.mean.y, mo.mean.z};
  AxisStats out;
  for (int a = 0; a < 3; ++a) {
    out.mean += d[a] * mean[a];
    for (int b = 0; b < 3; ++b) out.variance += d[a] * d[b] * mo.cov[a][b];
  }
  out.variance = std::max(out.variance, 0.0);
  return out;
}

AxisStats expect(const CollectiveSpinState& state, const SpinAxis& axis) {
  if (axis.is_z()) {
    const auto psi = state.amplitudes();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < psi.size(); ++k) {
      const double p = std::norm(psi[k]);
      const double m = state.m(k);
      m1 += p * m;
      m2 += p * m * m;
    }
    return {m1, std::max(0.0, m2 - m1 * m1)};
  }
  const double phi = axis.azimuth();
  return expect(state, Vec3{std::cos(phi), std::sin(phi), 0.0});
}

std::size_t sample_index(const CollectiveSpinState& state, Philox4x32& rng) {
  const auto psi = state.amplitudes();
  double total = 0.0;
  for (const auto& a : psi) total += std::norm(a);
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    acc += std::norm(psi[k]);
    if (target < acc) return k;
  }
  // Round-off fallback: last level with non-zero weight.
  for (std::size_t k = psi.size(); k-- > 0;) {
    if (std::norm(psi[k]) > 0.0) return k;
  }
  return psi.size() - 1;
}

double sample_jz(const CollectiveSpinState& state, Philox4x32& rng) { return state.m(sample_index(state, rng)); }

Complex inner(const CollectiveSpinState& a, const CollectiveSpinState& b) {
  if (a.n_atoms() != b.n_atoms()) throw InvalidArgument("states have different atom numbers");
  Complex s(0.0, 0.0);
  const auto pa = a.amplitudes();
  const auto pb = b.amplitudes();
  for (std::size_t k = 0; k < pa.size(); ++k) s += std::conj(pa[k]) * pb[k];
  return s;
}

double overlap_abs(const CollectiveSpinState& a, const CollectiveSpinState& b) { return std::abs(inner(a, b)); }

QuasiProbabilityGrid husimi_q(const CollectiveSpinState& state, std::span<const double> polar_grid,
                              std::span<const double> azimuth_grid) {
  if (polar_grid.empty() || azimuth_grid.empty()) throw InvalidArgument("husimi grids must be non-empty");
  QuasiProbabilityGrid grid;
  grid.polar.assign(polar_grid.begin(), polar_grid.end());
  grid.azimuth.assign(azimuth_grid.begin(), azimuth_grid.end());
  grid.values.resize(polar_grid.size() * azimuth_grid.size());
  const auto psi = state.amplitudes();
  const double j = state.j();
  for (std::size_t i = 0; i < polar_grid.size(); ++i) {
    // Phase-free CSS magnitudes for this polar angle; the azimuth enters as exp(-i m phi).
    const auto base = css_amplitudes(state.n_atoms(), polar_grid[i], 0.0);
    for (std::size_t a = 0; a < azimuth_grid.size(); ++a) {
      const double phi = azimuth_grid[a];
      Complex s(0.0, 0.0);
      for (std::size_t k = 0; k < psi.size(); ++k) {
        const double m = static_cast<double>(k) - j;
        s += std::conj(base[k] * std::polar(1.0, -m * phi)) * psi[k];
      }
      grid.values[i * azimuth_grid.size() + a] = std::min(1.0, std::norm(s));
    }
  }
  return grid;
}

void set_rotation_cache_limit(std::size_t bytes) { cache().set_limit(bytes); }
std::size_t rotation_cache_entries() { return cache().size(); }

}  // namespace cavsqz
