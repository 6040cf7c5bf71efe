#include "cavsqz/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"

namespace cavsqz {

using nlohmann::json;

namespace {

json default_config() {
  return json{
      {"schema_version", kSchemaVersion},
      {"name", "custom"},
      {"description", ""},
      {"mode", "qnd"},
      {"n_atoms", 1000},
      {"master_seed", 1},
      {"threads", 0},
      {"trials", {{"signal", 1000}, {"fringe_points", 16}, {"fringe_repeats", 4}, {"alpha_repeats", 300}}},
      {"physics",
       {{"g0_mhz", 0.4853},
        {"kappa_khz", 56.0},
        {"fsr_ghz", 6.7879},
        {"waist_um", 72.0},
        {"length_cm", 2.2},
        {"rayleigh_cm", 2.1},
        {"delta_c_mhz", 175.0},
        {"omega_hf_ghz", 6.8347},
        {"delta2_mhz", 266.7},
        {"delta1_mhz", 423.6},
        {"b3", 6.0 / 15.0},
        {"b2", 3.0 / 12.0},
        {"b1", 1.0 / 60.0},
        {"b2_down", 3.0 / 12.0},
        {"b1_down", 5.0 / 12.0},
        {"gamma_mhz", 6.065},
        {"wavelength_nm", 780.241},
        {"mass_kg", kMassRb87},
        {"gravity", 9.796}}},
      {"geometry", {{"z0_mm", 1.0}, {"sigma_z_mm", 0.5}, {"r_rms_um", 4.7}}},
      {"noise",
       {{"quantum_efficiency", 0.1},
        {"imprecision_coeff", 1.0},
        {"scatter_coeff", 0.0},
        {"raman_decorrelation_fraction", 1.0},
        {"readout_floor_db", 15.0},
        {"pulse_loss_prob", 0.002},
        {"dephasing_rad_per_ms", 0.0},
        {"atom_number_cv", 0.0},
        {"projection_noise", true},
        {"readout_noise", true}}},
      {"kinematics",
       {{"pulse_rabi_khz", 10.0},
        {"doppler_contrast", true},
        {"momentum_fwhm_hbark", 5.0},
        {"momentum_resolution_hbark", 0.01},
        {"spectrum_khz", json::array()},
        {"classes_hbark", json::array()},
        {"class_weights", json::array()},
        {"ladder_pulses", 4}}},
      {"sequence", json::array()},
      {"analysis", {{"alpha_offsets_deg", json::array()}, {"bootstrap_resamples", 2000}, {"bootstrap_seed", 24301}}},
      {"metadata", json::object()},
  };
}

json default_step(const std::string& kind) {
  if (kind == "velocity_select") return {{"rabi_khz", 1.4}, {"passes", 2}, {"reduce_atom_number", false}};
  if (kind == "rotation") return {{"angle", "fixed"}, {"angle_pi", 0.5}, {"axis", "y"}, {"azimuth_pi", 0.0}};
  if (kind == "twist")
    return {{"mu", 0.0}, {"echo", true}, {"chi_oat_hz", 10.0}, {"linear", 0.0}, {"photons", 0.0}};
  if (kind == "qnd") return {{"photons", 600.0}};
  if (kind == "evolve") return {{"t_evol_ms", 0.0}, {"phase", 0.0}, {"echo_pulse", true}};
  if (kind == "readout") return {{"style", "pumped_final"}, {"area_pi", 0.0}, {"photons", 600.0}};
  throw ConfigError("unknown sequence step '" + kind + "'");
}

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return std::string(type_name(a)) == type_name(b);
}

// Overlays `user` on `defaults`, rejecting unknown keys and type changes.
void merge(json& defaults, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = defaults[key];
    if (key == "metadata" && where.empty()) {
      if (!value.is_object()) throw ConfigError("metadata must be an object");
      slot = value;
      continue;
    }
    if (key == "sequence" && where.empty()) continue;  // handled separately
    if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + path + "' must be a " + type_name(slot) + ", got " + type_name(value));
    }
    if (slot.is_object()) {
      merge(slot, value, path);
    } else if (slot.is_array()) {
      for (const auto& item : value) {
        if (!item.is_number()) throw ConfigError("config key '" + path + "' must be an array of numbers");
      }
      slot = value;
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      if (!value.is_number_integer() && !value.is_number_unsigned()) {
        const double d = value.get<double>();
        if (d != std::floor(d)) throw ConfigError("config key '" + path + "' must be an integer");
        slot = static_cast<std::int64_t>(d);
      } else {
        slot = value;
      }
    } else {
      slot = value;
    }
  }
}

double num(const json& j, const char* key) { return j.at(key).get<double>(); }

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

Step parse_step(const json& s, std::size_t index) {
  const std::string where = "sequence." + std::to_string(index);
  const std::string kind = s.at("step").get<std::string>();
  Step st;
  if (kind == "velocity_select") {
    st.kind = StepKind::VelocitySelect;
    st.rabi = khz(num(s, "rabi_khz"));
    st.passes = s.at("passes").get<int>();
    st.reduce_atom_number = s.at("reduce_atom_number").get<bool>();
    check(st.rabi > 0.0 && st.passes >= 1, where + ": velocity_select needs rabi_khz > 0 and passes >= 1");
  } else if (kind == "rotation") {
    st.kind = StepKind::Rotation;
    const std::string ref = s.at("angle").get<std::string>();
    if (ref == "fixed") {
      st.angle_ref = AngleRef::Fixed;
    } else if (ref == "alpha") {
      st.angle_ref = AngleRef::Alpha;
    } else if (ref == "alpha0") {
      st.angle_ref = AngleRef::Alpha0;
    } else {
      throw ConfigError(where + ".angle must be fixed, alpha or alpha0");
    }
    st.angle = kPi * num(s, "angle_pi");
    check(std::isfinite(st.angle), where + ".angle_pi must be finite");
    const std::string axis = s.at("axis").get<std::string>();
    if (axis == "x") {
      st.axis_azimuth = 0.0;
    } else if (axis == "y") {
      st.axis_azimuth = 0.5 * kPi;
    } else if (axis == "z") {
      st.axis_z = true;
    } else if (axis == "bloch") {
      st.axis_bloch = true;
    } else if (axis == "azimuth") {
      st.axis_azimuth = kPi * num(s, "azimuth_pi");
    } else {
      throw ConfigError(where + ".axis must be x, y, z, bloch or azimuth");
    }
    check(st.angle_ref == AngleRef::Fixed || st.axis_bloch, where + ": alpha rotations must use axis 'bloch'");
  } else if (kind == "twist") {
    st.kind = StepKind::Twist;
    st.twist.mu = num(s, "mu");
    st.twist.echo = s.at("echo").get<bool>();
    st.twist.chi_oat = hz(num(s, "chi_oat_hz"));
    st.twist.linear = num(s, "linear");
    st.photons = num(s, "photons");
    check(std::isfinite(st.twist.mu) && st.twist.chi_oat > 0.0 && st.photons >= 0.0,
          where + ": twist needs finite mu, chi_oat_hz > 0 and photons >= 0");
  } else if (kind == "qnd") {
    st.kind = StepKind::Qnd;
    st.photons = num(s, "photons");
    check(st.photons > 0.0, where + ": qnd needs photons > 0");
  } else if (kind == "evolve") {
    st.kind = StepKind::Evolve;
    st.t_evol = 1e-3 * num(s, "t_evol_ms");
    st.phase = num(s, "phase");
    st.echo_pulse = s.at("echo_pulse").get<bool>();
    check(st.t_evol >= 0.0 && std::isfinite(st.phase), where + ": evolve needs t_evol_ms >= 0");
  } else if (kind == "readout") {
    st.kind = StepKind::Readout;
    const std::string style = s.at("style").get<std::string>();
    if (style == "pumped_final") {
      st.style = ShiftMode::PumpedFinal;
    } else if (style == "qnd_pre") {
      st.style = ShiftMode::QndPre;
    } else {
      throw ConfigError(where + ".style must be pumped_final or qnd_pre");
    }
    st.area = kPi * num(s, "area_pi");
    st.photons = num(s, "photons");
    check(st.photons > 0.0, where + ": readout needs photons > 0");
  }
  return st;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Qnd: return "qnd";
    case Mode::Oat: return "oat";
    case Mode::Mz: return "mz";
    case Mode::Bragg: return "bragg";
    case Mode::Velocimetry: return "velocimetry";
  }
  return "qnd";
}

Mode mode_from_string(std::string_view s) {
  if (s == "qnd") return Mode::Qnd;
  if (s == "oat") return Mode::Oat;
  if (s == "mz") return Mode::Mz;
  if (s == "bragg") return Mode::Bragg;
  if (s == "velocimetry") return Mode::Velocimetry;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

const Step* Scenario::readout() const { return find(StepKind::Readout); }

const Step* Scenario::find(StepKind kind) const {
  for (const auto& s : sequence) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

json canonical_config(const json& config) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  if (!config.contains("schema_version")) throw ConfigError("config needs a schema_version");
  if (!config.at("schema_version").is_number_integer() || config.at("schema_version").get<int>() != kSchemaVersion) {
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  json out = default_config();
  merge(out, config, "");
  if (config.contains("sequence")) {
    const json& seq = config.at("sequence");
    if (!seq.is_array()) throw ConfigError("sequence must be an array");
    json steps = json::array();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const json& s = seq[i];
      const std::string where = "sequence." + std::to_string(i);
      if (!s.is_object() || !s.contains("step") || !s.at("step").is_string()) {
        throw ConfigError(where + " must be an object with a 'step' name");
      }
      const std::string kind = s.at("step").get<std::string>();
      json filled = default_step(kind);
      json body = s;
      body.erase("step");
      merge(filled, body, where);
      filled["step"] = kind;
      steps.push_back(std::move(filled));
    }
    out["sequence"] = std::move(steps);
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string scenario_hash(const json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buf;
}

Scenario parse_scenario(const json& config) {
  Scenario sc;
  sc.config = canonical_config(config);
  sc.scenario_id = scenario_hash(sc.config);
  const json& c = sc.config;
  try {
    sc.name = c.at("name").get<std::string>();
    sc.description = c.at("description").get<std::string>();
    sc.mode = mode_from_string(c.at("mode").get<std::string>());
    sc.n_atoms = c.at("n_atoms").get<int>();
    sc.master_seed = c.at("master_seed").get<std::uint64_t>();
    sc.threads = c.at("threads").get<int>();
    const json& t = c.at("trials");
    sc.trials.signal = t.at("signal").get<int>();
    sc.trials.fringe_points = t.at("fringe_points").get<int>();
    sc.trials.fringe_repeats = t.at("fringe_repeats").get<int>();
    sc.trials.alpha_repeats = t.at("alpha_repeats").get<int>();

    const json& p = c.at("physics");
    sc.physics.g0 = mhz(num(p, "g0_mhz"));
    sc.physics.kappa = khz(num(p, "kappa_khz"));
    sc.physics.fsr = ghz(num(p, "fsr_ghz"));
    sc.physics.waist_w0 = 1e-6 * num(p, "waist_um");
    sc.physics.length_l = 1e-2 * num(p, "length_cm");
    sc.physics.rayleigh_zr = 1e-2 * num(p, "rayleigh_cm");
    sc.physics.delta_c = mhz(num(p, "delta_c_mhz"));
    sc.physics.omega_hf = ghz(num(p, "omega_hf_ghz"));
    sc.physics.delta2 = mhz(num(p, "delta2_mhz"));
    sc.physics.delta1 = mhz(num(p, "delta1_mhz"));
    sc.physics.b3 = num(p, "b3");
    sc.physics.b2 = num(p, "b2");
    sc.physics.b1 = num(p, "b1");
    sc.physics.b2_down = num(p, "b2_down");
    sc.physics.b1_down = num(p, "b1_down");
    sc.physics.gamma = mhz(num(p, "gamma_mhz"));
    sc.physics.wavelength = 1e-9 * num(p, "wavelength_nm");
    sc.physics.mass = num(p, "mass_kg");
    sc.physics.gravity = num(p, "gravity");

    const json& g = c.at("geometry");
    sc.geometry.z0 = 1e-3 * num(g, "z0_mm");
    sc.geometry.sigma_z = 1e-3 * num(g, "sigma_z_mm");
    sc.geometry.r_rms = 1e-6 * num(g, "r_rms_um");

    const json& n = c.at("noise");
    sc.noise.quantum_efficiency = num(n, "quantum_efficiency");
    sc.noise.imprecision_coeff = num(n, "imprecision_coeff");
    sc.noise.scatter_coeff = num(n, "scatter_coeff");
    sc.noise.raman_decorrelation_fraction = num(n, "raman_decorrelation_fraction");
    sc.noise.readout_floor_db = num(n, "readout_floor_db");
    sc.noise.pulse_loss_prob = num(n, "pulse_loss_prob");
    sc.noise.dephasing_coeff = num(n, "dephasing_rad_per_ms");
    sc.noise.atom_number_cv = num(n, "atom_number_cv");
    sc.projection_noise = n.at("projection_noise").get<bool>();
    sc.readout_noise = n.at("readout_noise").get<bool>();

    const json& k = c.at("kinematics");
    sc.kinematics.pulse_rabi = khz(num(k, "pulse_rabi_khz"));
    sc.kinematics.doppler_contrast = k.at("doppler_contrast").get<bool>();
    sc.kinematics.momentum_fwhm = num(k, "momentum_fwhm_hbark");
    sc.kinematics.momentum_resolution = num(k, "momentum_resolution_hbark");
    sc.kinematics.spectrum_khz = k.at("spectrum_khz").get<std::vector<double>>();
    sc.kinematics.classes_hbark = k.at("classes_hbark").get<std::vector<double>>();
    sc.kinematics.class_weights = k.at("class_weights").get<std::vector<double>>();
    sc.kinematics.ladder_pulses = k.at("ladder_pulses").get<int>();

    const json& a = c.at("analysis");
    for (double deg : a.at("alpha_offsets_deg").get<std::vector<double>>()) {
      sc.analysis.alpha_offsets.push_back(deg * kPi / 180.0);
    }
    sc.analysis.bootstrap_resamples = a.at("bootstrap_resamples").get<int>();
    sc.analysis.bootstrap_seed = a.at("bootstrap_seed").get<std::uint64_t>();

    const json& seq = c.at("sequence");
    for (std::size_t i = 0; i < seq.size(); ++i) sc.sequence.push_back(parse_step(seq[i], i));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  check(sc.n_atoms >= 1, "n_atoms must be >= 1");
  check(sc.threads >= 0, "threads must be >= 0");
  check(sc.trials.signal >= 0 && sc.trials.fringe_points >= 0 && sc.trials.fringe_repeats >= 0 &&
            sc.trials.alpha_repeats >= 0,
        "trial counts must be non-negative");
  check(sc.analysis.bootstrap_resamples >= 10, "analysis.bootstrap_resamples must be >= 10");
  check(sc.kinematics.pulse_rabi > 0.0, "kinematics.pulse_rabi_khz must be positive");
  try {
    sc.physics.validate();
    sc.noise.validate();
    effective_coupling(sc.physics, sc.geometry);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  const bool spin_mode = sc.mode == Mode::Qnd || sc.mode == Mode::Oat || sc.mode == Mode::Mz;
  if (spin_mode) {
    check(!sc.sequence.empty(), "sequence must not be empty");
    check(sc.sequence.back().kind == StepKind::Readout, "sequence must end with a readout step");
    int readouts = 0;
    for (const auto& s : sc.sequence) readouts += s.kind == StepKind::Readout ? 1 : 0;
    check(readouts == 1, "sequence must contain exactly one readout step");
    check(sc.trials.fringe_points >= 5 && sc.trials.fringe_repeats >= 1,
          "trials.fringe_points must be >= 5 and fringe_repeats >= 1");
    bool has_alpha = false;
    for (const auto& s : sc.sequence) has_alpha |= s.kind == StepKind::Rotation && s.angle_ref == AngleRef::Alpha;
    if (sc.mode == Mode::Mz) {
      check(has_alpha || sc.analysis.alpha_offsets.empty(),
            "alpha offsets need a rotation step with angle 'alpha'");
    }
    if (sc.mode == Mode::Qnd) check(sc.find(StepKind::Qnd) != nullptr, "qnd mode needs a qnd step");
  } else if (sc.mode == Mode::Velocimetry) {
    check(!sc.kinematics.spectrum_khz.empty(), "velocimetry needs kinematics.spectrum_khz");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_scenario(j);
}

void set_param(json& config, const std::string& path, double value) {
  if (path.empty()) throw ConfigError("empty parameter path");
  config = canonical_config(config);
  json* node = &config;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& key = parts[i];
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ConfigError("parameter path '" + path + "': '" + key + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError("parameter path '" + path + "': index out of range");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      if (!node->contains(key)) throw ConfigError("parameter path '" + path + "' does not exist");
      node = &(*node)[key];
    } else {
      throw ConfigError("parameter path '" + path + "' descends into a scalar");
    }
  }
  if (!node->is_number()) throw ConfigError("parameter path '" + path + "' is not numeric");
  if (node->is_number_integer() || node->is_number_unsigned()) {
    if (value != std::floor(value)) throw ConfigError("parameter path '" + path + "' needs an integer");
    *node = static_cast<std::int64_t>(value);
  } else {
    *node = value;
  }
}

}  // namespace cavsqz
