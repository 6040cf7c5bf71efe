#include "cavsqz/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"
#include "cavsqz/version.hpp"

namespace cavsqz {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GroupPlan {
  std::string name;
  bool squeeze = true;
  bool scan = false;
  ShiftMode style = ShiftMode::PumpedFinal;
  std::optional<double> alpha;
  int count = 0;
  int points = 0;
};

std::string style_suffix(ShiftMode m) { return m == ShiftMode::QndPre ? "pre" : "final"; }

std::vector<GroupPlan> group_plans(const Scenario& sc, const SequencePlan& plan) {
  std::vector<GroupPlan> out;
  const ShiftMode style = sc.readout()->style;
  const int fringe_n = sc.trials.fringe_points * sc.trials.fringe_repeats;
  auto fringe = [&](std::string name, bool squeeze, ShiftMode s) {
    GroupPlan g;
    g.name = std::move(name);
    g.squeeze = squeeze;
    g.scan = true;
    g.style = s;
    g.count = fringe_n;
    g.points = sc.trials.fringe_points;
    return g;
  };
  if (sc.mode == Mode::Mz) {
    for (std::size_t k = 0; k < sc.analysis.alpha_offsets.size(); ++k) {
      GroupPlan g;
      std::ostringstream name;
      name << "alpha_" << std::setw(2) << std::setfill('0') << k;
      g.name = name.str();
      g.style = style;
      g.alpha = plan.alpha_opt + sc.analysis.alpha_offsets[k];
      g.count = sc.trials.alpha_repeats;
      out.push_back(g);
    }
  }
  if (sc.trials.signal > 0) {
    GroupPlan g;
    g.name = "signal";
    g.style = style;
    g.alpha = plan.alpha_opt;
    g.count = sc.trials.signal;
    out.push_back(g);
  }
  if (sc.mode == Mode::Qnd) {
    out.push_back(fringe("fringe_with_pre", true, ShiftMode::QndPre));
    out.push_back(fringe("fringe_with_final", true, ShiftMode::PumpedFinal));
    out.push_back(fringe("fringe_without_pre", false, ShiftMode::QndPre));
  } else {
    out.push_back(fringe("fringe_with_" + style_suffix(style), true, style));
    out.push_back(fringe("fringe_without_" + style_suffix(style), false, style));
  }
  return out;
}

bool step_is_random(const Scenario& sc, const Step& s, bool squeeze) {
  switch (s.kind) {
    case StepKind::Qnd: return squeeze;
    case StepKind::Evolve: return sc.noise.dephasing_coeff > 0.0;
    case StepKind::Readout: return true;
    default: return false;
  }
}

double azimuth_of(const Vec3& v) { return std::atan2(v.y, v.x); }

struct Execution {
  CollectiveSpinState state;
  ContrastLedger ledger;
  int n_atoms = 0;
};

// Shared, read-only trial context.
class Runner {
 public:
  Runner(const Scenario& sc, const SequencePlan& plan)
      : sc_(sc), plan_(plan), coupling_(effective_coupling(sc.physics, sc.geometry)),
        shifts_(dispersive_shifts(sc.physics, coupling_.g)) {}

  const DispersiveShifts& shifts() const { return shifts_; }

  int atom_number(std::uint64_t trial_id) const {
    double nominal = sc_.n_atoms;
    if (const Step* vs = sc_.find(StepKind::VelocitySelect); vs && vs->reduce_atom_number) {
      nominal *= plan_.selection_survival;
    }
    if (sc_.noise.atom_number_cv > 0.0) {
      Philox4x32 rng(sc_.master_seed, trial_id, stream::kAtomNumber);
      std::normal_distribution<double> normal(0.0, 1.0);
      nominal *= 1.0 + sc_.noise.atom_number_cv * normal(rng);
    }
    return std::max(1, static_cast<int>(std::llround(nominal)));
  }

  double pulse_loss(double angle) const {
    double p = sc_.noise.pulse_loss_prob;
    if (sc_.kinematics.doppler_contrast) p += (1.0 - plan_.contrast_factor) * std::min(1.0, std::abs(angle) / kPi);
    return std::min(p, 1.0);
  }

  void pulse(Execution& ex, double angle, double azimuth) const {
    if (angle == 0.0) return;
    apply_pulse_loss(ex.state, ex.ledger, pulse_loss(angle));
    ex.state = rotate_tracked(ex.state, ex.ledger, angle, SpinAxis::equatorial(azimuth));
  }

  double bloch_azimuth(bool squeeze, std::size_t step) const {
    return squeeze ? plan_.bloch_azimuth_squeezed[step] : plan_.bloch_azimuth_plain[step];
  }

  // Runs steps [begin, end) of the sequence. `rng_for` is null for the
  // deterministic prefix, where no step draws random numbers.
  void execute(Execution& ex, const GroupPlan& g, std::size_t begin, std::size_t end, std::uint64_t trial_id,
               double scan_phase, TrialRecord* rec) const {
    for (std::size_t i = begin; i < end; ++i) {
      const Step& s = sc_.sequence[i];
      Philox4x32 rng(sc_.master_seed, trial_id, static_cast<std::uint32_t>(i));
      switch (s.kind) {
        case StepKind::VelocitySelect:
          break;
        case StepKind::Rotation: {
          double angle = s.angle;
          if (s.angle_ref == AngleRef::Alpha) angle = g.alpha.value_or(plan_.alpha_opt);
          if (s.angle_ref == AngleRef::Alpha0) angle = plan_.alpha_opt;
          if (s.axis_z) {
            ex.state = rotate_tracked(ex.state, ex.ledger, angle, SpinAxis::z());
          } else {
            pulse(ex, angle, s.axis_bloch ? bloch_azimuth(g.squeeze, i) : s.axis_azimuth);
          }
          break;
        }
        case StepKind::Twist: {
          if (!g.squeeze) break;
          if (s.twist.echo) {
            TwistSpec half = s.twist;
            half.echo = false;
            half.mu *= 0.5;
            half.linear *= 0.5;
            ex.state = twist(ex.state, half);
            pulse(ex, kPi, azimuth_of(coherent_mean(ex.state, ex.ledger)));
            ex.state = twist(ex.state, half);
          } else {
            ex.state = twist(ex.state, s.twist);
          }
          apply_scattering(ex.state, ex.ledger, s.photons, sc_.noise);
          break;
        }
        case StepKind::Qnd: {
          if (!g.squeeze) break;
          qnd(ex, s, rng, rec);
          apply_scattering(ex.state, ex.ledger, s.photons, sc_.noise);
          break;
        }
        case StepKind::Evolve: {
          const double az = bloch_azimuth(g.squeeze, i);
          if (s.echo_pulse) {
            ex.state = free_evolve(ex.state, s.t_evol, -0.5 * s.phase, sc_.noise, rng, &ex.ledger);
            pulse(ex, kPi, az);
            ex.state = free_evolve(ex.state, s.t_evol, 0.5 * s.phase, sc_.noise, rng, &ex.ledger);
          } else {
            ex.state = free_evolve(ex.state, 2.0 * s.t_evol, s.phase, sc_.noise, rng, &ex.ledger);
          }
          break;
        }
        case StepKind::Readout: {
          const double area = g.scan ? 0.5 * kPi : s.area;
          const double az = bloch_azimuth(g.squeeze, i) + (g.scan ? scan_phase : 0.0);
          pulse(ex, area, az);
          if (rec != nullptr) {
            rec->readout_azimuth = az;
            readout(ex, s, g.style, rng, *rec);
          }
          break;
        }
      }
    }
  }

  double effective_atoms(const Execution& ex) const { return std::max(0.0, ex.n_atoms - ex.ledger.lost_atoms); }

  double observed_jz(const Execution& ex, Philox4x32& rng) const {
    return readout_jz(ex.state, ex.ledger, rng, sc_.projection_noise);
  }

  void qnd(Execution& ex, const Step& s, Philox4x32& rng, TrialRecord* rec) const {
    const double sigma = imprecision_from_photons(s.photons, sc_.noise);
    const double dchi = shifts_.chi0 - shifts_.chi_down;
    const double sigma_w = std::sqrt(2.0) * std::abs(dchi) * sigma;
    std::normal_distribution<double> normal(0.0, 1.0);
    double m, n1 = 0.0, n2 = 0.0, m_obs;
    if (sc_.projection_noise) {
      m = sample_jz(ex.state, rng);
      n1 = sigma_w * normal(rng);
      n2 = sigma_w * normal(rng);
      double removed = 0.0, extra = ex.ledger.added_jz_diffusion;
      for (const auto& e : ex.ledger.events) {
        removed += e.vector.z;
        if (e.atoms > 0.0) extra += e.vector.z * e.vector.z / e.atoms;
      }
      m_obs = m - removed + (extra > 0.0 ? std::sqrt(extra) * normal(rng) : 0.0);
    } else {
      m = expect(ex.state, SpinAxis::z()).mean;
      m_obs = readout_jz(ex.state, ex.ledger, rng, false);
    }
    const double x = m + (n1 - n2) / (2.0 * dchi);
    ex.state = apply_gaussian_kraus(ex.state, x, sigma);
    if (rec != nullptr) {
      const double n = effective_atoms(ex);
      const double up = 0.5 * n + m_obs, down = 0.5 * n - m_obs;
      rec->omega1p = shifts_.chi0 * up + shifts_.chi_down * down + n1;
      rec->omega2p = shifts_.chi0 * down + shifts_.chi_down * up + n2;
    }
  }

  void readout(Execution& ex, const Step& s, ShiftMode style, Philox4x32& rng, TrialRecord& rec) const {
    const double jz = observed_jz(ex, rng);
    const double n = effective_atoms(ex);
    const double up = 0.5 * n + jz, down = 0.5 * n - jz;
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool noisy = sc_.readout_noise && sc_.projection_noise;
    if (style == ShiftMode::PumpedFinal) {
      const double floor_var = 0.25 * n * std::pow(10.0, -sc_.noise.readout_floor_db / 10.0);
      const double sigma_w = noisy ? shifts_.chi2 * std::sqrt(2.0 * floor_var) : 0.0;
      const double n1 = sigma_w > 0.0 ? sigma_w * normal(rng) : 0.0;
      const double n2 = sigma_w > 0.0 ? sigma_w * normal(rng) : 0.0;
      rec.omega1f = shifts_.chi2 * up + shifts_.chi_down * down + n1;
      rec.omega2f = shifts_.chi2 * down + n2;
    } else {
      const double sigma = imprecision_from_photons(s.photons, sc_.noise);
      const double sigma_w = noisy ? std::sqrt(2.0) * std::abs(shifts_.chi0 - shifts_.chi_down) * sigma : 0.0;
      const double n1 = sigma_w > 0.0 ? sigma_w * normal(rng) : 0.0;
      const double n2 = sigma_w > 0.0 ? sigma_w * normal(rng) : 0.0;
      rec.omega1p = shifts_.chi0 * up + shifts_.chi_down * down + n1;
      rec.omega2p = shifts_.chi0 * down + shifts_.chi_down * up + n2;
    }
  }

  // Index of the first step that draws random numbers.
  std::size_t prefix_end(bool squeeze) const {
    std::size_t i = 0;
    while (i < sc_.sequence.size() && !step_is_random(sc_, sc_.sequence[i], squeeze)) ++i;
    return i;
  }

  const Scenario& scenario() const { return sc_; }

 private:
  const Scenario& sc_;
  const SequencePlan& plan_;
  Coupling coupling_;
  DispersiveShifts shifts_;
};

// Deterministic prefix states shared between trials with the same atom number.
class PrefixCache {
 public:
  std::shared_ptr<const Execution> get(const Runner& runner, const GroupPlan& g, int n_atoms) {
    const double alpha = g.alpha.value_or(0.0);
    const auto key = std::make_tuple(n_atoms, g.squeeze, alpha);
    {
      std::lock_guard lock(mutex_);
      if (auto it = map_.find(key); it != map_.end()) return it->second;
    }
    auto ex = std::make_shared<Execution>(Execution{CollectiveSpinState(n_atoms), ContrastLedger{}, n_atoms});
    runner.execute(*ex, g, 0, runner.prefix_end(g.squeeze), 0, 0.0, nullptr);
    std::lock_guard lock(mutex_);
    if (map_.size() > 512) map_.clear();
    map_.emplace(key, ex);
    return ex;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, bool, double>, std::shared_ptr<const Execution>> map_;
};

struct TrialTask {
  std::uint64_t trial_id = 0;
  const GroupPlan* group = nullptr;
  double scan_phase = 0.0;
  int n_atoms = 0;
};

TrialRecord run_trial(const Runner& runner, PrefixCache& cache, const TrialTask& task) {
  const Scenario& sc = runner.scenario();
  TrialRecord rec;
  rec.trial_id = task.trial_id;
  rec.seed = sc.master_seed;
  rec.scenario_id = sc.scenario_id;
  rec.group = task.group->name;
  rec.phase = task.scan_phase;
  rec.alpha = task.group->alpha.value_or(0.0);
  rec.n_atoms_actual = task.n_atoms;
  const auto prefix = cache.get(runner, *task.group, task.n_atoms);
  Execution ex = *prefix;
  runner.execute(ex, *task.group, runner.prefix_end(task.group->squeeze), sc.sequence.size(), task.trial_id,
                 task.scan_phase, &rec);
  rec.ledger.coherent_fraction = ex.ledger.coherent_fraction;
  rec.ledger.lost_atoms = ex.ledger.lost_atoms;
  rec.ledger.added_jz_diffusion = ex.ledger.added_jz_diffusion;
  rec.ledger.scatter_clipped = ex.ledger.scatter_clipped;
  return rec;
}

RunResult run_kinematics(const Scenario& sc) {
  RunResult r;
  r.scenario = sc;
  r.started = iso_timestamp();
  const PhysicsParams& p = sc.physics;
  if (sc.mode == Mode::Bragg) {
    auto dist = MomentumDistribution::discrete({0.0}, {1.0});
    dist = apply_momentum_pulse(dist, RamanPulse::ideal(PulseKind::Raman, 0.0, 0.5 * kPi, sc.kinematics.pulse_rabi),
                                p, sc.noise.pulse_loss_prob);
    for (int k = 0; k < sc.kinematics.ladder_pulses; ++k) {
      dist = apply_momentum_pulse(
          dist, RamanPulse::ideal(PulseKind::Bragg, 2.0 + 2.0 * k, kPi, sc.kinematics.pulse_rabi), p,
          sc.noise.pulse_loss_prob);
    }
    r.product_name = "distribution.csv";
    std::ostringstream os;
    os.precision(12);
    os << "momentum_hbark,label,weight\n";
    for (std::size_t i = 0; i < dist.size(); ++i) {
      os << dist.momentum[i] << ',' << (dist.label[i] == HyperfineLabel::Up ? "up" : "down") << ','
         << dist.weight[i] << '\n';
    }
    r.product_csv = os.str();
    const double top = 2.0 + 2.0 * sc.kinematics.ladder_pulses;
    r.product_summary = {{"weight_0", dist.weight_at(0.0, HyperfineLabel::Down)},
                         {"weight_top", dist.weight_at(top, HyperfineLabel::Up)},
                         {"top_momentum_hbark", top},
                         {"lost", dist.lost}};
  } else {
    MomentumDistribution dist;
    if (!sc.kinematics.classes_hbark.empty()) {
      std::vector<double> w = sc.kinematics.class_weights;
      if (w.empty()) w.assign(sc.kinematics.classes_hbark.size(), 1.0 / sc.kinematics.classes_hbark.size());
      try {
        dist = MomentumDistribution::discrete(sc.kinematics.classes_hbark, w);
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
    } else {
      dist = MomentumDistribution::gaussian(sc.kinematics.momentum_fwhm, 0.0, sc.kinematics.momentum_resolution);
      if (const Step* vs = sc.find(StepKind::VelocitySelect)) {
        dist = velocity_select(dist, vs->rabi, 0.0, vs->passes, p).distribution;
      }
    }
    std::vector<double> grid;
    for (double f : sc.kinematics.spectrum_khz) grid.push_back(khz(f));
    const auto spec = velocity_spectrum(dist, sc.kinematics.pulse_rabi, grid, p);
    r.product_name = "spectrum.csv";
    r.product_csv = spectrum_csv(grid, spec);
    r.product_summary = {{"points", grid.size()}, {"rms_spread_hbark", dist.rms_spread()}};
  }
  r.finished = iso_timestamp();
  return r;
}

}  // namespace

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SequencePlan plan_sequence(const Scenario& sc) {
  SequencePlan plan;
  if (const Step* vs = sc.find(StepKind::VelocitySelect)) {
    const auto initial =
        MomentumDistribution::gaussian(sc.kinematics.momentum_fwhm, 0.0, sc.kinematics.momentum_resolution);
    const auto sel = velocity_select(initial, vs->rabi, 0.0, vs->passes, sc.physics);
    if (sel.empty) throw Error("velocity selection keeps no atoms");
    plan.selection_survival = sel.survival;
    plan.contrast_factor = pulse_contrast_factor(sel.distribution, sc.kinematics.pulse_rabi, sc.physics);
  }

  // Noise-free pass at the nominal atom number: records the Bloch azimuth
  // before each step and the optimal readout angle.
  const double readout_area = sc.readout() ? sc.readout()->area : 0.0;
  for (int squeeze = 0; squeeze < 2; ++squeeze) {
    auto& az = squeeze ? plan.bloch_azimuth_squeezed : plan.bloch_azimuth_plain;
    CollectiveSpinState state(sc.n_atoms);
    for (const Step& s : sc.sequence) {
      const SpinMoments mo = moments(state);
      az.push_back(std::hypot(mo.mean.x, mo.mean.y) > 1e-9 ? azimuth_of(mo.mean) : 0.0);
      switch (s.kind) {
        case StepKind::Rotation: {
          double angle = s.angle;
          if (s.angle_ref != AngleRef::Fixed) {
            if (squeeze) {
              const TwistOptimum opt = min_variance_direction(state);
              plan.alpha0 = opt.alpha0;
              plan.v_min = opt.v_min;
              plan.alpha_opt = opt.alpha0 - readout_area;
            }
            angle = plan.alpha_opt;
          }
          if (s.axis_z) {
            state = rotate_z(state, angle);
          } else {
            state = rotate_equatorial(state, angle, s.axis_bloch ? az.back() : s.axis_azimuth);
          }
          break;
        }
        case StepKind::Twist:
          if (squeeze) state = twist(state, s.twist);
          break;
        case StepKind::Evolve:
          if (s.echo_pulse) state = rotate_equatorial(state, kPi, az.back());
          break;
        default:
          break;
      }
    }
  }
  return plan;
}

RunResult run(const Scenario& scenario, const RunOptions& options) {
  if (scenario.mode == Mode::Bragg || scenario.mode == Mode::Velocimetry) return run_kinematics(scenario);

  RunResult result;
  result.scenario = scenario;
  result.started = iso_timestamp();
  result.plan = plan_sequence(scenario);
  const Runner runner(result.scenario, result.plan);
  const auto groups = group_plans(result.scenario, result.plan);

  std::vector<TrialTask> tasks;
  std::uint64_t next_id = 0;
  for (const auto& g : groups) {
    for (int i = 0; i < g.count; ++i) {
      TrialTask t;
      t.trial_id = next_id++;
      t.group = &g;
      if (g.scan) t.scan_phase = kTwoPi * static_cast<double>(i % g.points) / g.points;
      t.n_atoms = runner.atom_number(t.trial_id);
      tasks.push_back(t);
    }
  }
  // Execution order groups equal atom numbers so the prefix and rotation
  // caches stay warm; output order is by trial_id regardless.
  std::vector<std::size_t> order(tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return tasks[a].n_atoms < tasks[b].n_atoms; });

  int threads = options.threads >= 0 ? options.threads : result.scenario.threads;
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, static_cast<int>(std::max<std::size_t>(1, tasks.size())));

  result.records.resize(tasks.size());
  PrefixCache cache;
  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t k = cursor.fetch_add(1);
      if (k >= order.size()) return;
      try {
        const TrialTask& t = tasks[order[k]];
        result.records[t.trial_id] = run_trial(runner, cache, t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        cursor.store(order.size());
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.finished = iso_timestamp();
  return result;
}

AnalysisReport analyze(const std::vector<TrialRecord>& records, const Scenario& sc) {
  AnalysisReport rep;
  rep.mode = sc.mode;
  rep.shifts = dispersive_shifts(sc.physics, effective_coupling(sc.physics, sc.geometry).g);
  std::map<std::string, std::vector<TrialRecord>> by_group;
  for (const auto& r : records) by_group[r.group].push_back(r);

  auto fit_group = [&](const std::string& name) -> const FringeFit& {
    auto it = by_group.find(name);
    if (it == by_group.end() || it->second.empty()) throw InsufficientData("no records in group '" + name + "'");
    const ShiftMode mode = name.size() > 4 && name.compare(name.size() - 4, 4, "_pre") == 0 ? ShiftMode::QndPre
                                                                                              : ShiftMode::PumpedFinal;
    std::vector<double> phases, values;
    for (const auto& r : it->second) {
      phases.push_back(r.phase);
      values.push_back(fringe_observable(r, mode));
    }
    return rep.fringes[name] = fit_fringe(phases, values);
  };

  BootstrapOptions boot;
  boot.resamples = sc.analysis.bootstrap_resamples;
  boot.seed = sc.analysis.bootstrap_seed;

  const ShiftMode style = sc.readout() ? sc.readout()->style : ShiftMode::PumpedFinal;
  if (sc.mode == Mode::Qnd) {
    const FringeFit& pre = fit_group("fringe_with_pre");
    const FringeFit& fin = fit_group("fringe_with_final");
    const FringeFit& without = fit_group("fringe_without_pre");
    if (by_group.count("signal")) {
      rep.wineland = wineland(by_group["signal"], fin, without, ShiftMode::QndPre, rep.shifts,
                              SignalSpec{ShiftMode::PumpedFinal, true}, pre, boot);
    }
  } else if (sc.mode == Mode::Oat || sc.mode == Mode::Mz) {
    const FringeFit& with = fit_group("fringe_with_" + style_suffix(style));
    const FringeFit& without = fit_group("fringe_without_" + style_suffix(style));
    const double j_c = bloch_length(without, rep.shifts, style);
    for (const auto& [name, recs] : by_group) {
      if (name.rfind("alpha_", 0) != 0) continue;
      const auto th = thetas_for(recs, with, rep.shifts, SignalSpec{style, false}, std::nullopt);
      const WinelandResult w = wineland(th, j_c, BootstrapOptions{10, boot.seed, 2});
      rep.w_by_alpha[recs.front().alpha] = w.w;
    }
    if (rep.w_by_alpha.size() >= 5) rep.ellipse = variance_vs_alpha(rep.w_by_alpha);
    if (by_group.count("signal")) {
      rep.wineland = wineland(by_group["signal"], with, without, style, rep.shifts, SignalSpec{style, false},
                              std::nullopt, boot);
    }
  } else {
    throw InvalidArgument("kinematics scenarios have no trial records to analyze");
  }
  if (rep.wineland) rep.raw_variance_ratio = rep.wineland->w * rep.wineland->j_s / rep.wineland->j_c;
  return rep;
}

json record_to_json(const TrialRecord& r) {
  json j;
  j["trial_id"] = r.trial_id;
  j["seed"] = r.seed;
  j["scenario_id"] = r.scenario_id;
  j["group"] = r.group;
  j["outcomes"] = json::object();
  if (r.omega1p) j["outcomes"]["omega1p"] = *r.omega1p;
  if (r.omega2p) j["outcomes"]["omega2p"] = *r.omega2p;
  if (r.omega1f) j["outcomes"]["omega1f"] = *r.omega1f;
  if (r.omega2f) j["outcomes"]["omega2f"] = *r.omega2f;
  j["readout_azimuth"] = r.readout_azimuth;
  j["phase"] = r.phase;
  j["alpha"] = r.alpha;
  j["ledger"] = {{"coherent_fraction", r.ledger.coherent_fraction},
                 {"lost_atoms", r.ledger.lost_atoms},
                 {"added_jz_diffusion", r.ledger.added_jz_diffusion},
                 {"scatter_clipped", r.ledger.scatter_clipped}};
  j["n_atoms_actual"] = r.n_atoms_actual;
  return j;
}

TrialRecord record_from_json(const json& j) {
  TrialRecord r;
  try {
    r.trial_id = j.at("trial_id").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.group = j.at("group").get<std::string>();
    const json& o = j.at("outcomes");
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!o.contains(k)) return std::nullopt;
      return o.at(k).get<double>();
    };
    r.omega1p = opt("omega1p");
    r.omega2p = opt("omega2p");
    r.omega1f = opt("omega1f");
    r.omega2f = opt("omega2f");
    r.readout_azimuth = j.at("readout_azimuth").get<double>();
    r.phase = j.at("phase").get<double>();
    r.alpha = j.at("alpha").get<double>();
    const json& l = j.at("ledger");
    r.ledger.coherent_fraction = l.at("coherent_fraction").get<double>();
    r.ledger.lost_atoms = l.at("lost_atoms").get<double>();
    r.ledger.added_jz_diffusion = l.at("added_jz_diffusion").get<double>();
    r.ledger.scatter_clipped = l.at("scatter_clipped").get<bool>();
    r.n_atoms_actual = j.at("n_atoms_actual").get<int>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed trial record: ") + e.what());
  }
  return r;
}

std::vector<TrialRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open records file " + path);
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw InvalidArgument("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string summary_csv_header() {
  return "scenario_id,W,W_db,ci_lo,ci_hi,n_trials,ci95_lo,ci95_hi,j_c,j_s,v_min,alpha_min\n";
}

std::string summary_csv_row(const std::string& scenario_id, const AnalysisReport& rep) {
  std::ostringstream os;
  os.precision(10);
  os << scenario_id << ',';
  if (rep.wineland) {
    const auto& w = *rep.wineland;
    os << w.w << ',' << w.w_db << ',' << w.ci68.lo << ',' << w.ci68.hi << ',' << w.n_trials << ',' << w.ci95.lo
       << ',' << w.ci95.hi << ',' << w.j_c << ',' << w.j_s << ',';
  } else {
    os << ",,,,0,,,,,";
  }
  if (rep.ellipse) {
    os << rep.ellipse->v_min << ',' << rep.ellipse->alpha_min;
  } else {
    os << ',';
  }
  os << '\n';
  return os.str();
}

json report_to_json(const AnalysisReport& rep) {
  json j;
  j["mode"] = std::string(to_string(rep.mode));
  j["shifts_hz"] = {{"chi0", to_hz(rep.shifts.chi0)},
                    {"chi_down", to_hz(rep.shifts.chi_down)},
                    {"chi2", to_hz(rep.shifts.chi2)},
                    {"epsilon", rep.shifts.epsilon}};
  if (rep.wineland) {
    const auto& w = *rep.wineland;
    j["wineland"] = {{"W", w.w},          {"W_db", w.w_db},       {"dtheta", w.dtheta}, {"dtheta_sql", w.dtheta_sql},
                     {"ci68", {w.ci68.lo, w.ci68.hi}}, {"ci95", {w.ci95.lo, w.ci95.hi}}, {"n_trials", w.n_trials},
                     {"j_c", w.j_c},      {"j_s", w.j_s}};
  }
  if (rep.raw_variance_ratio) j["raw_variance_ratio"] = *rep.raw_variance_ratio;
  j["fringes"] = json::object();
  for (const auto& [name, f] : rep.fringes) {
    j["fringes"][name] = {{"y0", f.y0},       {"amplitude", f.amplitude},       {"phi0", f.phi0},
                          {"se_amplitude", f.se_amplitude}, {"residual_rms", f.residual_rms}, {"n", f.n_points}};
  }
  if (!rep.w_by_alpha.empty()) {
    j["w_by_alpha"] = json::array();
    for (const auto& [a, w] : rep.w_by_alpha) j["w_by_alpha"].push_back({a, w});
  }
  if (rep.ellipse) {
    const auto& e = *rep.ellipse;
    j["ellipse"] = {{"a", e.a}, {"c", e.c}, {"alpha_min", e.alpha_min}, {"v_min", e.v_min}, {"se_v_min", e.se_v_min},
                    {"se_alpha_min", e.se_alpha_min}};
  }
  return j;
}

namespace {

std::string checksum_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

}  // namespace

WrittenRun write_run(const RunResult& result, const AnalysisReport* report, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create output directory " + out_dir + ": " + ec.message());
  WrittenRun w;
  w.manifest_path = (fs::path(out_dir) / "manifest.json").string();

  json manifest;
  manifest["scenario_id"] = result.scenario.scenario_id;
  manifest["config"] = result.scenario.config;
  manifest["code_version"] = kVersion;
  manifest["started"] = result.started;
  manifest["finished"] = result.finished;
  manifest["complete"] = false;
  manifest["files"] = json::array();
  write_text(w.manifest_path, manifest.dump(2) + "\n");

  std::vector<std::string> files;
  const bool spin_mode = result.scenario.mode == Mode::Qnd || result.scenario.mode == Mode::Oat ||
                         result.scenario.mode == Mode::Mz;
  if (spin_mode) {
    w.records_path = (fs::path(out_dir) / "records.jsonl").string();
    std::ofstream out(w.records_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + w.records_path);
    for (const auto& r : result.records) out << record_to_json(r).dump() << '\n';
    out.close();
    if (!out) throw Error("write failed for " + w.records_path);
    files.push_back(w.records_path);
    if (report != nullptr) {
      w.summary_path = (fs::path(out_dir) / "summary.csv").string();
      write_text(w.summary_path, summary_csv_header() + summary_csv_row(result.scenario.scenario_id, *report));
      files.push_back(w.summary_path);
      manifest["summary"] = report_to_json(*report);
    }
    manifest["plan"] = {{"alpha_opt", result.plan.alpha_opt},
                        {"alpha0", result.plan.alpha0},
                        {"v_min_ideal", result.plan.v_min},
                        {"contrast_factor", result.plan.contrast_factor},
                        {"selection_survival", result.plan.selection_survival}};
    manifest["n_records"] = result.records.size();
  } else {
    const std::string path = (fs::path(out_dir) / result.product_name).string();
    write_text(path, result.product_csv);
    files.push_back(path);
    manifest["summary"] = result.product_summary;
  }
  for (const auto& f : files) {
    manifest["files"].push_back({{"path", fs::path(f).filename().string()}, {"fnv1a64", checksum_file(f)}});
  }
  manifest["complete"] = true;
  write_text(w.manifest_path, manifest.dump(2) + "\n");
  return w;
}

std::vector<ScanPoint> scan(const json& config, const std::string& path, const std::vector<double>& values,
                            const std::string& out_dir, const RunOptions& options) {
  if (values.empty()) throw ConfigError("scan needs at least one value");
  const json base = canonical_config(config);
  std::vector<ScanPoint> points;
  std::ostringstream table;
  table.precision(10);
  table << "value," << summary_csv_header();
  for (std::size_t i = 0; i < values.size(); ++i) {
    json cfg = base;
    set_param(cfg, path, values[i]);
    const Scenario sc = parse_scenario(cfg);
    if (sc.mode == Mode::Bragg || sc.mode == Mode::Velocimetry) {
      throw ConfigError("scan needs a spin-dynamics scenario");
    }
    RunResult res = run(sc, options);
    ScanPoint pt;
    pt.value = values[i];
    pt.scenario_id = sc.scenario_id;
    pt.report = analyze(res.records, sc);
    if (!out_dir.empty()) {
      std::ostringstream sub;
      sub << "point_" << std::setw(3) << std::setfill('0') << i;
      write_run(res, &pt.report, (fs::path(out_dir) / sub.str()).string());
    }
    table << values[i] << ',' << summary_csv_row(sc.scenario_id, pt.report);
    points.push_back(std::move(pt));
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "scan.csv").string(), table.str());
  }
  return points;
}

}  // namespace cavsqz
