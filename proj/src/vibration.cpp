#include "cavsqz/vibration.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cavsqz/error.hpp"

namespace cavsqz {
namespace {

// Log-log slope of the segment [i, i+1]; 0 when either value vanishes.
double slope(const PsdTable& t, std::size_t i) {
  if (t.density[i] <= 0.0 || t.density[i + 1] <= 0.0) return 0.0;
  return std::log(t.density[i + 1] / t.density[i]) / std::log(t.omega[i + 1] / t.omega[i]);
}

}  // namespace

void PsdTable::validate() const {
  if (omega.size() < 2 || density.size() != omega.size()) {
    throw InvalidArgument("PSD table needs at least two rows of matching columns");
  }
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (!(omega[i] > 0.0) || !std::isfinite(omega[i])) throw InvalidArgument("PSD frequencies must be positive");
    if (!(density[i] >= 0.0) || !std::isfinite(density[i])) throw InvalidArgument("PSD values must be non-negative");
    if (i > 0 && !(omega[i] > omega[i - 1])) throw InvalidArgument("PSD frequencies must be strictly increasing");
  }
}

double PsdTable::at(double w) const {
  const std::size_t n = omega.size();
  if (w <= omega.front()) {
    if (density[0] == 0.0) return 0.0;
    return density[0] * std::pow(w / omega[0], slope(*this, 0));
  }
  if (w >= omega.back()) {
    if (density[n - 1] == 0.0) return 0.0;
    return density[n - 1] * std::pow(w / omega[n - 1], slope(*this, n - 2));
  }
  const auto it = std::upper_bound(omega.begin(), omega.end(), w);
  const std::size_t i = static_cast<std::size_t>(it - omega.begin()) - 1;
  if (density[i] == 0.0 || density[i + 1] == 0.0) {
    const double f = (w - omega[i]) / (omega[i + 1] - omega[i]);
    return density[i] + f * (density[i + 1] - density[i]);
  }
  return density[i] * std::pow(w / omega[i], slope(*this, i));
}

PsdTable PsdTable::white(double s0, double omega_lo, double omega_hi, std::size_t points) {
  PsdTable t;
  for (std::size_t i = 0; i < points; ++i) {
    t.omega.push_back(omega_lo * std::pow(omega_hi / omega_lo, static_cast<double>(i) / (points - 1)));
    t.density.push_back(s0);
  }
  return t;
}

PsdTable parse_psd(const std::string& text) {
  PsdTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    double f = 0.0, s = 0.0;
    if (!(row >> f >> s)) throw InvalidArgument("PSD line " + std::to_string(lineno) + " is not two numbers");
    t.omega.push_back(kTwoPi * f);
    t.density.push_back(s / kTwoPi);
  }
  t.validate();
  return t;
}

PsdTable read_psd_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open PSD file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_psd(ss.str());
}

double transfer_function(double omega, double t_evol, const PhysicsParams& params) {
  const double k = params.k();
  const double x = 0.5 * omega * t_evol;
  if (std::abs(x) < 1e-4) {
    // (sin x / x)^4 = 1 - 2x^2/3 + O(x^4)
    return 4.0 * k * k * std::pow(t_evol, 4) * (1.0 - 2.0 * x * x / 3.0);
  }
  const double s = std::sin(x);
  return 64.0 * k * k / std::pow(omega, 4) * s * s * s * s;
}

double white_noise_phase_variance(double s0, double t_evol, const PhysicsParams& params) {
  const double k = params.k();
  return 8.0 * kPi / 3.0 * k * k * s0 * t_evol * t_evol * t_evol;
}

double integrate_phase_noise(const PsdTable& psd, double t_evol, const PhysicsParams& params,
                             const PhaseNoiseOptions& options) {
  psd.validate();
  if (!(t_evol > 0.0)) throw InvalidArgument("evolution time must be positive");
  const double w_period = kTwoPi / t_evol;
  if (!options.extrapolate && (psd.omega.front() > 0.1 * w_period || psd.omega.back() < 100.0 * w_period)) {
    throw CoverageError("PSD table does not cover [0.1, 100] x 2 pi / T and extrapolation is disabled");
  }
  const std::size_t n = psd.omega.size();
  const double tail_slope = psd.density[n - 1] > 0.0 ? slope(psd, n - 2) : 0.0;
  const double low_slope = psd.density[0] > 0.0 ? slope(psd, 0) : 0.0;
  if (psd.density[0] > 0.0 && low_slope <= -1.0) {
    throw CoverageError("PSD diverges too fast toward zero frequency for the integral to converge");
  }

  // Numerical integration up to the last zero of sin at or beyond the table
  // end (at least a few periods); the remainder uses the period-averaged
  // sin^4 = 3/8 with the extrapolated power law.
  const double upper_table = psd.omega.back();
  double w_end = std::ceil(std::max(upper_table, 4.0 * w_period) / w_period) * w_period;

  std::vector<double> breaks{0.0};
  for (double w = w_period; w < w_end * (1.0 + 1e-12); w += w_period) breaks.push_back(w);
  for (double w : psd.omega) {
    if (w < w_end) breaks.push_back(w);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }),
               breaks.end());

  auto integrand = [&](double w) { return transfer_function(w, t_evol, params) * psd.at(w); };
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    total += GK::integrate(integrand, breaks[i], breaks[i + 1], 12, options.rel_tolerance * 1e-3);
  }

  const double last = breaks.back();
  const double s_last = psd.at(last);
  if (s_last > 0.0) {
    if (tail_slope >= 3.0) throw CoverageError("PSD grows too fast at high frequency for the integral to converge");
    const double k = params.k();
    // int_last^inf 64 k^2 (3/8) S(last) (w/last)^a w^-4 dw
    total += 24.0 * k * k * s_last / ((3.0 - tail_slope) * last * last * last);
  }
  return std::sqrt(std::max(total, 0.0));
}

VibrationBudget vibration_budget(const PsdTable& psd, double t_evol, int n_atoms, const PhysicsParams& params,
                                 const PhaseNoiseOptions& options) {
  if (n_atoms < 1) throw InvalidArgument("atom number must be positive");
  VibrationBudget b;
  b.phi_rms = integrate_phase_noise(psd, t_evol, params, options);
  b.sql = 1.0 / std::sqrt(static_cast<double>(n_atoms));
  b.db_below_sql = b.phi_rms > 0.0 ? 10.0 * std::log10(b.sql * b.sql / (b.phi_rms * b.phi_rms))
                                   : std::numeric_limits<double>::infinity();
  return b;
}

}  // namespace cavsqz
