#include "cavsqz/analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"
#include "cavsqz/lsq.hpp"

namespace cavsqz {
namespace {

double wrap_2pi(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

double wrap_half_pi(double a) {
  // into (-pi/2, pi/2]
  double w = std::fmod(a, kPi);
  if (w <= -0.5 * kPi) w += kPi;
  if (w > 0.5 * kPi) w -= kPi;
  return w;
}

double need(const std::optional<double>& v, const char* name) {
  if (!v) throw MissingOutcome(name);
  if (!std::isfinite(*v)) throw InvalidArgument(std::string("outcome ") + name + " is not finite");
  return *v;
}

double sample_variance(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / (n - 1.0);
}

// Empirical quantile with linear interpolation on sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double f = pos - static_cast<double>(i);
  return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

}  // namespace

FringeFit fit_fringe(const std::vector<double>& phases, const std::vector<double>& values) {
  const std::size_t n = phases.size();
  if (n != values.size()) throw InvalidArgument("fringe phases and values differ in length");
  if (n < 5) throw InsufficientData("fringe fit needs at least 5 points");
  const auto [pmin, pmax] = std::minmax_element(phases.begin(), phases.end());
  if (*pmax - *pmin < kPi - 1e-12) throw InsufficientData("fringe phases span less than half a period");

  // Deterministic start: discrete projection onto {1, sin, cos}.
  double sy = 0.0, ss = 0.0, sc = 0.0;
  for (std::size_t i = 0; i < n; ++i) sy += values[i];
  const double mean = sy / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    ss += (values[i] - mean) * std::sin(phases[i]);
    sc += (values[i] - mean) * std::cos(phases[i]);
  }
  const double b0 = 2.0 * ss / static_cast<double>(n);
  const double c0 = 2.0 * sc / static_cast<double>(n);
  // y0 + A sin(phi - phi0) = y0 + A cos(phi0) sin(phi) - A sin(phi0) cos(phi)
  std::vector<double> p0{mean, std::hypot(b0, c0), std::atan2(-c0, b0)};
  if (p0[1] == 0.0) p0[1] = 1e-300;

  ResidualFn fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& jac) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::sin(phases[i] - p[2]);
      const double c = std::cos(phases[i] - p[2]);
      r[i] = p[0] + p[1] * s - values[i];
      jac[i * 3 + 0] = 1.0;
      jac[i * 3 + 1] = s;
      jac[i * 3 + 2] = -p[1] * c;
    }
  };
  LsqResult res;
  try {
    res = levenberg_marquardt(fn, p0, n);
  } catch (const FitError& e) {
    throw FitError(std::string("fringe fit failed: ") + e.what(), e.residual_norm(), e.iterations());
  }
  FringeFit out;
  out.y0 = res.params[0];
  out.amplitude = res.params[1];
  out.phi0 = res.params[2];
  if (out.amplitude < 0.0) {
    out.amplitude = -out.amplitude;
    out.phi0 += kPi;
  }
  out.phi0 = wrap_2pi(out.phi0);
  out.se_y0 = res.std_errors[0];
  out.se_amplitude = res.std_errors[1];
  out.se_phi0 = res.std_errors[2];
  out.residual_rms = res.residual_norm / std::sqrt(static_cast<double>(n));
  out.n_points = n;
  const double scale = std::max({std::abs(out.y0), out.amplitude, 1e-300});
  if (out.amplitude <= out.se_amplitude || out.amplitude <= 1e-12 * scale) {
    throw FitError("fringe amplitude indistinguishable from zero", res.residual_norm, res.iterations);
  }
  return out;
}

double jz_from_shifts(const TrialRecord& record, const DispersiveShifts& shifts, ShiftMode mode) {
  if (mode == ShiftMode::QndPre) {
    const double w1 = need(record.omega1p, "omega1p");
    const double w2 = need(record.omega2p, "omega2p");
    return (w1 - w2) / (2.0 * (shifts.chi0 - shifts.chi_down));
  }
  const double w1 = need(record.omega1f, "omega1f");
  const double w2 = need(record.omega2f, "omega2f");
  return (w1 - w2) / (2.0 * shifts.chi2) - shifts.epsilon / shifts.chi2 * w2;
}

double fringe_observable(const TrialRecord& record, ShiftMode mode) {
  if (mode == ShiftMode::QndPre) return 0.5 * (need(record.omega1p, "omega1p") - need(record.omega2p, "omega2p"));
  return need(record.omega1f, "omega1f") - need(record.omega2f, "omega2f");
}

double theta_from_record(const TrialRecord& record, const FringeFit& fringe, ShiftMode mode, double epsilon) {
  if (!(fringe.amplitude > 0.0)) throw InvalidArgument("fringe amplitude must be positive");
  if (mode == ShiftMode::QndPre) {
    return (need(record.omega1p, "omega1p") - need(record.omega2p, "omega2p")) / (2.0 * fringe.amplitude);
  }
  const double w1 = need(record.omega1f, "omega1f");
  const double w2 = need(record.omega2f, "omega2f");
  return ((w1 - w2) - epsilon * (w1 + w2) + 2.0 * epsilon * epsilon * w2) / fringe.amplitude;
}

double bloch_length(const FringeFit& fringe, const DispersiveShifts& shifts, ShiftMode mode) {
  if (mode == ShiftMode::QndPre) return fringe.amplitude / (shifts.chi0 - shifts.chi_down);
  return fringe.amplitude / (2.0 * shifts.chi2 - shifts.chi_down);
}

WinelandResult wineland(const std::vector<double>& thetas, double j_c, const BootstrapOptions& options) {
  if (thetas.size() < std::max<std::size_t>(options.min_trials, 2)) {
    throw InsufficientData("Wineland estimate needs at least " + std::to_string(options.min_trials) + " trials");
  }
  if (!(j_c > 0.0)) throw InvalidArgument("reference Bloch length must be positive");
  if (options.resamples < 10) throw InvalidArgument("bootstrap needs at least 10 resamples");

  WinelandResult r;
  r.n_trials = thetas.size();
  r.j_c = j_c;
  r.dtheta_sql = 1.0 / std::sqrt(2.0 * j_c);
  const double var = sample_variance(thetas);
  r.dtheta = std::sqrt(var);
  r.w = var * 2.0 * j_c;
  r.w_db = -10.0 * std::log10(r.w);

  const std::size_t n = thetas.size();
  std::vector<double> boot(static_cast<std::size_t>(options.resamples));
  std::vector<double> sample(n);
  for (int b = 0; b < options.resamples; ++b) {
    Philox4x32 rng(options.seed, static_cast<std::uint64_t>(b), stream::kBootstrap);
    for (std::size_t i = 0; i < n; ++i) {
      auto idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
      if (idx >= n) idx = n - 1;
      sample[i] = thetas[idx];
    }
    boot[static_cast<std::size_t>(b)] = sample_variance(sample) * 2.0 * j_c;
  }
  std::vector<double> sorted = boot;
  std::sort(sorted.begin(), sorted.end());
  double below = 0.0;
  for (double v : boot) below += v < r.w ? 1.0 : (v == r.w ? 0.5 : 0.0);
  const double nb = static_cast<double>(options.resamples);
  const double p0 = std::clamp(below / nb, 1.0 / (nb + 1.0), nb / (nb + 1.0));
  const boost::math::normal_distribution<double> unit;
  const double z0 = boost::math::quantile(unit, p0);
  auto interval = [&](double level) {
    const double za = boost::math::quantile(unit, 0.5 * (1.0 - level));
    Interval iv;
    iv.lo = quantile(sorted, boost::math::cdf(unit, 2.0 * z0 + za));
    iv.hi = quantile(sorted, boost::math::cdf(unit, 2.0 * z0 - za));
    iv.lo = std::min(iv.lo, r.w);
    iv.hi = std::max(iv.hi, r.w);
    return iv;
  };
  r.ci68 = interval(0.6827);
  r.ci95 = interval(0.95);
  return r;
}

std::vector<double> thetas_for(const std::vector<TrialRecord>& signal, const FringeFit& fringe_with,
                               const DispersiveShifts& shifts, const SignalSpec& spec,
                               const std::optional<FringeFit>& fringe_pre) {
  if (spec.subtract_pre && !fringe_pre) throw InvalidArgument("pre-measurement subtraction needs the pre fringe");
  std::vector<double> thetas;
  thetas.reserve(signal.size());
  for (const auto& rec : signal) {
    double th = theta_from_record(rec, fringe_with, spec.readout, shifts.epsilon);
    if (spec.subtract_pre) th = theta_from_record(rec, *fringe_pre, ShiftMode::QndPre, shifts.epsilon) - th;
    thetas.push_back(th);
  }
  return thetas;
}

WinelandResult wineland(const std::vector<TrialRecord>& signal, const FringeFit& fringe_with,
                        const FringeFit& fringe_without, ShiftMode without_mode, const DispersiveShifts& shifts,
                        const SignalSpec& spec, const std::optional<FringeFit>& fringe_pre,
                        const BootstrapOptions& options) {
  const auto thetas = thetas_for(signal, fringe_with, shifts, spec, fringe_pre);
  WinelandResult r = wineland(thetas, bloch_length(fringe_without, shifts, without_mode), options);
  r.j_s = bloch_length(fringe_with, shifts, spec.readout);
  return r;
}

EllipseFit variance_vs_alpha(const std::map<double, double>& variance_by_alpha) {
  if (variance_by_alpha.size() < 5) throw InsufficientData("variance ellipse needs at least 5 alpha values");
  std::vector<double> alpha, v;
  for (const auto& [a, var] : variance_by_alpha) {
    alpha.push_back(a);
    v.push_back(var);
  }
  const std::size_t n = alpha.size();
  // Linear in (a, B, C): V = a + B cos(2 alpha) + C sin(2 alpha)
  ResidualFn fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& jac) {
    for (std::size_t i = 0; i < n; ++i) {
      const double c2 = std::cos(2.0 * alpha[i]);
      const double s2 = std::sin(2.0 * alpha[i]);
      r[i] = p[0] + p[1] * c2 + p[2] * s2 - v[i];
      jac[i * 3 + 0] = 1.0;
      jac[i * 3 + 1] = c2;
      jac[i * 3 + 2] = s2;
    }
  };
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  const LsqResult res = levenberg_marquardt(fn, {mean, 0.0, 0.0}, n);
  const double a = res.params[0], b = res.params[1], c = res.params[2];
  EllipseFit out;
  out.a = a;
  out.c = std::hypot(b, c);
  // maximum at 0.5 atan2(C, B); minimum a quarter period away
  out.alpha_min = wrap_half_pi(0.5 * std::atan2(c, b) + 0.5 * kPi);
  out.v_min = out.a - out.c;
  const auto& cov = res.covariance;
  out.se_a = res.std_errors[0];
  if (out.c > 0.0) {
    const double db = b / out.c, dc = c / out.c;
    const double var_c = db * db * cov[4] + 2.0 * db * dc * cov[5] + dc * dc * cov[8];
    out.se_c = std::sqrt(std::max(0.0, var_c));
    // d(0.5 atan2(C,B)) = 0.5 (B dC - C dB) / (B^2 + C^2)
    const double gb = -0.5 * c / (out.c * out.c), gc = 0.5 * b / (out.c * out.c);
    out.se_alpha_min = std::sqrt(std::max(0.0, gb * gb * cov[4] + 2.0 * gb * gc * cov[5] + gc * gc * cov[8]));
    // v_min = a - sqrt(B^2 + C^2)
    const double var_v = cov[0] - 2.0 * (db * cov[1] + dc * cov[2]) + var_c;
    out.se_v_min = std::sqrt(std::max(0.0, var_v));
  } else {
    out.se_c = std::sqrt(std::max(0.0, 0.5 * (cov[4] + cov[8])));
    out.se_alpha_min = 0.5 * kPi;
    out.se_v_min = std::hypot(out.se_a, out.se_c);
  }
  return out;
}

double ellipse_curve(const EllipseFit& fit, double alpha) {
  return fit.a - fit.c * std::cos(2.0 * (alpha - fit.alpha_min));
}

double Tomogram::anisotropy() const {
  const auto [lo, hi] = std::minmax_element(section_variance.begin(), section_variance.end());
  return *hi / *lo;
}

double Tomogram::alpha_of_min() const {
  const auto it = std::min_element(section_variance.begin(), section_variance.end());
  return alphas[static_cast<std::size_t>(it - section_variance.begin())];
}

Tomogram tomography(const CollectiveSpinState& state, const std::vector<double>& alpha_grid, int bins,
                    int samples_per_angle, std::uint64_t seed) {
  if (alpha_grid.size() < 2) throw InvalidArgument("tomography needs at least two angles");
  const auto [amin, amax] = std::minmax_element(alpha_grid.begin(), alpha_grid.end());
  if (*amax - *amin < kPi - 1e-9 * kPi) {
    // A section repeats after pi, so a span of pi less one step is complete.
    const double step = (*amax - *amin) / static_cast<double>(alpha_grid.size() - 1);
    if (*amax - *amin + step < kPi - 1e-9) throw InvalidArgument("tomography angles must cover pi");
  }
  if (bins < 1 || samples_per_angle < 2) throw InvalidArgument("tomography needs bins >= 1 and >= 2 samples");
  const Vec3 mean = moments(state).mean;
  const double azimuth = std::atan2(mean.y, mean.x);
  Tomogram t;
  t.alphas = alpha_grid;
  const double j = state.j();
  for (int b = 0; b <= bins; ++b) t.bin_edges.push_back(-j - 0.5 + (2.0 * j + 1.0) * b / bins);
  for (std::size_t ia = 0; ia < alpha_grid.size(); ++ia) {
    const auto rotated = rotate_equatorial(state, alpha_grid[ia], azimuth);
    Philox4x32 rng(seed, ia, 0);
    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> draws(static_cast<std::size_t>(samples_per_angle));
    for (int s = 0; s < samples_per_angle; ++s) {
      const double m = sample_jz(rotated, rng);
      draws[static_cast<std::size_t>(s)] = m;
      auto bin = static_cast<long>(std::floor((m + j + 0.5) / (2.0 * j + 1.0) * bins));
      bin = std::clamp<long>(bin, 0, bins - 1);
      hist[static_cast<std::size_t>(bin)] += 1.0 / samples_per_angle;
    }
    t.counts.push_back(std::move(hist));
    t.section_variance.push_back(sample_variance(draws));
  }
  return t;
}

}  // namespace cavsqz
