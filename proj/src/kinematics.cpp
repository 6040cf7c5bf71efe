#include "cavsqz/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "cavsqz/error.hpp"

namespace cavsqz {
namespace {

// Momenta are compared on a 1e-9 hbar k lattice.
std::int64_t key_of(double p) { return static_cast<std::int64_t>(std::llround(p * 1e9)); }

using ClassMap = std::map<std::pair<std::int64_t, int>, std::pair<double, double>>;  // -> (momentum, weight)

ClassMap to_map(const MomentumDistribution& d) {
  ClassMap out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto& slot = out[{key_of(d.momentum[i]), static_cast<int>(d.label[i])}];
    slot.first = d.momentum[i];
    slot.second += d.weight[i];
  }
  return out;
}

MomentumDistribution from_map(const ClassMap& m, double lost) {
  MomentumDistribution d;
  for (const auto& [key, value] : m) {
    if (value.second <= 0.0) continue;
    d.momentum.push_back(value.first);
    d.weight.push_back(value.second);
    d.label.push_back(static_cast<HyperfineLabel>(key.second));
  }
  d.lost = lost;
  return d;
}

}  // namespace

double MomentumDistribution::total() const { return std::accumulate(weight.begin(), weight.end(), 0.0); }

double MomentumDistribution::mean() const {
  double s = 0.0, w = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    s += weight[i] * momentum[i];
    w += weight[i];
  }
  return w > 0.0 ? s / w : 0.0;
}

double MomentumDistribution::rms_spread() const {
  const double mu = mean();
  double s = 0.0, w = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    s += weight[i] * (momentum[i] - mu) * (momentum[i] - mu);
    w += weight[i];
  }
  return w > 0.0 ? std::sqrt(s / w) : 0.0;
}

double MomentumDistribution::weight_at(double p, HyperfineLabel l, double tol) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (label[i] == l && std::abs(momentum[i] - p) <= tol) s += weight[i];
  }
  return s;
}

void MomentumDistribution::validate() const {
  if (weight.size() != momentum.size() || label.size() != momentum.size()) {
    throw InvalidArgument("momentum distribution columns differ in length");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(weight[i] >= 0.0)) throw InvalidArgument("momentum weights must be non-negative");
    if (i > 0 && (momentum[i] < momentum[i - 1] ||
                  (momentum[i] == momentum[i - 1] && label[i] <= label[i - 1]))) {
      throw InvalidArgument("momentum grid must be strictly increasing");
    }
  }
  if (total() + lost > 1.0 + 1e-12) throw InvalidArgument("total population exceeds 1");
}

MomentumDistribution MomentumDistribution::gaussian(double fwhm, double center, double resolution,
                                                    double half_extent_fwhm) {
  if (!(fwhm > 0.0) || !(resolution > 0.0) || resolution > 0.01 + 1e-15) {
    throw InvalidArgument("gaussian distribution needs fwhm > 0 and resolution <= 0.01 hbar k");
  }
  const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const auto half = static_cast<long>(std::ceil(half_extent_fwhm * fwhm / resolution));
  MomentumDistribution d;
  double total = 0.0;
  for (long i = -half; i <= half; ++i) {
    const double p = center + i * resolution;
    const double w = std::exp(-0.5 * std::pow((p - center) / sigma, 2));
    d.momentum.push_back(p);
    d.weight.push_back(w);
    d.label.push_back(HyperfineLabel::Down);
    total += w;
  }
  for (double& w : d.weight) w /= total;
  return d;
}

MomentumDistribution MomentumDistribution::discrete(std::vector<double> momenta, std::vector<double> weights,
                                                    std::vector<HyperfineLabel> labels) {
  if (labels.empty()) labels.assign(momenta.size(), HyperfineLabel::Down);
  MomentumDistribution d;
  d.momentum = std::move(momenta);
  d.weight = std::move(weights);
  d.label = std::move(labels);
  if (d.weight.size() != d.momentum.size() || d.label.size() != d.momentum.size()) {
    throw InvalidArgument("momentum distribution columns differ in length");
  }
  d = from_map(to_map(d), 0.0);
  d.validate();
  return d;
}

RamanPulse RamanPulse::ideal(PulseKind kind, double lower_momentum, double area, double rabi) {
  RamanPulse p;
  p.rabi = rabi;
  p.duration = area / rabi;
  p.kind = kind;
  p.ideal_target = lower_momentum;
  return p;
}

double recoil_frequency(const PhysicsParams& params) {
  const double k = params.k();
  return kHbar * k * k / (2.0 * params.mass);
}

double chirp_rate(const PhysicsParams& params) { return 2.0 * params.k() * params.gravity; }

double doppler_detuning(double p_hbark, const PhysicsParams& params) {
  return 4.0 * recoil_frequency(params) * p_hbark;
}

double transfer_probability(const RamanPulse& pulse, double delta_eff) {
  if (!(pulse.rabi > 0.0) || pulse.duration < 0.0) throw InvalidArgument("pulse needs rabi > 0 and duration >= 0");
  const double w2 = pulse.rabi * pulse.rabi + delta_eff * delta_eff;
  const double s = std::sin(0.5 * std::sqrt(w2) * pulse.duration);
  return std::clamp(pulse.rabi * pulse.rabi / w2 * s * s, 0.0, 1.0);
}

SelectionResult velocity_select(const MomentumDistribution& dist, double rabi, double delta_vs, int passes,
                                const PhysicsParams& params) {
  if (passes < 1) throw InvalidArgument("velocity selection needs at least one pass");
  if (!(rabi > 0.0)) throw InvalidArgument("rabi frequency must be positive");
  RamanPulse pi;
  pi.rabi = rabi;
  pi.duration = kPi / rabi;
  SelectionResult out;
  out.distribution = dist;
  const double before = dist.total();
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < dist.size(); ++i) {
      const double d = doppler_detuning(dist.momentum[i], params) - delta_vs;
      out.distribution.weight[i] *= transfer_probability(pi, d);
    }
  }
  const double after = out.distribution.total();
  out.survival = before > 0.0 ? after / before : 0.0;
  out.empty = out.survival < 1e-6;
  if (!out.empty) {
    for (double& w : out.distribution.weight) w /= after;
  }
  return out;
}

std::vector<double> velocity_spectrum(const MomentumDistribution& dist, double rabi,
                                      const std::vector<double>& delta_grid, const PhysicsParams& params) {
  for (std::size_t i = 1; i < delta_grid.size(); ++i) {
    if (!(delta_grid[i] > delta_grid[i - 1])) throw InvalidArgument("detuning grid must be increasing");
  }
  RamanPulse pi;
  pi.rabi = rabi;
  pi.duration = kPi / rabi;
  std::vector<double> doppler(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) doppler[i] = doppler_detuning(dist.momentum[i], params);
  std::vector<double> out(delta_grid.size(), 0.0);
  for (std::size_t g = 0; g < delta_grid.size(); ++g) {
    double s = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) s += dist.weight[i] * transfer_probability(pi, delta_grid[g] - doppler[i]);
    out[g] = s;
  }
  return out;
}

MomentumDistribution apply_momentum_pulse(const MomentumDistribution& dist, const RamanPulse& pulse,
                                          const PhysicsParams& params, double pulse_loss_prob) {
  if (pulse_loss_prob < 0.0 || pulse_loss_prob > 1.0) throw InvalidArgument("pulse loss must lie in [0, 1]");
  ClassMap classes = to_map(dist);
  double lost = dist.lost;
  if (pulse_loss_prob > 0.0) {
    for (auto& [key, value] : classes) {
      lost += value.second * pulse_loss_prob;
      value.second *= 1.0 - pulse_loss_prob;
    }
  }
  const int lower_label = static_cast<int>(HyperfineLabel::Down);
  const int upper_label_raman = static_cast<int>(HyperfineLabel::Up);

  // Collect the lower member of every coupled pair first so that each pair is
  // mixed exactly once.
  std::vector<std::pair<std::int64_t, int>> lowers;
  for (const auto& [key, value] : classes) {
    const int label = key.second;
    if (pulse.kind == PulseKind::Raman && label != lower_label) {
      // An upper-state atom can only pair as the top member.
      continue;
    }
    if (pulse.ideal_target && key.first != key_of(*pulse.ideal_target)) continue;
    lowers.push_back(key);
  }
  if (pulse.kind == PulseKind::Raman) {
    // Upper-state atoms whose partner p-2 is absent still need a pair.
    for (const auto& [key, value] : classes) {
      if (key.second != upper_label_raman) continue;
      const double p_low = value.first - 2.0;
      const auto low_key = std::make_pair(key_of(p_low), lower_label);
      if (pulse.ideal_target && low_key.first != key_of(*pulse.ideal_target)) continue;
      if (classes.find(low_key) == classes.end()) lowers.push_back(low_key);
    }
  }
  std::sort(lowers.begin(), lowers.end());
  lowers.erase(std::unique(lowers.begin(), lowers.end()), lowers.end());

  for (const auto& low_key : lowers) {
    auto& low = classes[low_key];
    const double p = pulse.ideal_target ? *pulse.ideal_target : static_cast<double>(low_key.first) * 1e-9;
    if (low.second == 0.0) low.first = p;
    const int hi_label = pulse.kind == PulseKind::Raman ? upper_label_raman : low_key.second;
    auto& high = classes[{key_of(low.first + 2.0), hi_label}];
    if (high.second == 0.0) high.first = low.first + 2.0;
    double prob;
    if (pulse.ideal_target) {
      const double s = std::sin(0.5 * pulse.rabi * pulse.duration);
      prob = s * s;
    } else {
      prob = transfer_probability(pulse, pulse.detuning - doppler_detuning(low.first, params));
    }
    const double wl = low.second, wh = high.second;
    low.second = (1.0 - prob) * wl + prob * wh;
    high.second = prob * wl + (1.0 - prob) * wh;
  }
  return from_map(classes, lost);
}

double pulse_contrast_factor(const MomentumDistribution& dist, double rabi, const PhysicsParams& params) {
  if (!(rabi > 0.0)) throw InvalidArgument("rabi frequency must be positive");
  const double center = dist.mean();
  double s = 0.0, w = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double d = doppler_detuning(dist.momentum[i] - center, params);
    s += dist.weight[i] * rabi * rabi / (rabi * rabi + d * d);
    w += dist.weight[i];
  }
  return w > 0.0 ? s / w : 1.0;
}

double accumulated_phase(double t_evol, Frame frame, double chirp_b, const PhysicsParams& params) {
  if (t_evol < 0.0) throw InvalidArgument("evolution time must be non-negative");
  const double lab = 2.0 * params.k() * params.gravity;
  const double rate = frame == Frame::Lab ? lab : lab - chirp_b;
  return rate * t_evol * t_evol;
}

std::string distribution_csv(const MomentumDistribution& dist) {
  std::ostringstream os;
  os.precision(12);
  os << "momentum_hbark,weight\n";
  for (std::size_t i = 0; i < dist.size(); ++i) os << dist.momentum[i] << ',' << dist.weight[i] << '\n';
  return os.str();
}

std::string spectrum_csv(const std::vector<double>& delta_grid, const std::vector<double>& population) {
  if (delta_grid.size() != population.size()) throw InvalidArgument("spectrum columns differ in length");
  std::ostringstream os;
  os.precision(12);
  os << "detuning_hz,population\n";
  for (std::size_t i = 0; i < delta_grid.size(); ++i) os << to_hz(delta_grid[i]) << ',' << population[i] << '\n';
  return os.str();
}

}  // namespace cavsqz
