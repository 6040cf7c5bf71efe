#include <string>
#include <vector>

#include "cavsqz/error.hpp"
#include "cavsqz/scenario.hpp"

namespace cavsqz {

using nlohmann::json;

namespace {

// Calibrated loss and noise profile shared by the spin-dynamics presets.
json calibrated_noise() {
  return {{"quantum_efficiency", 0.1},
          {"imprecision_coeff", 3708.0},
          {"scatter_coeff", 5.0e-4},
          {"raman_decorrelation_fraction", 1.0},
          {"readout_floor_db", 15.0},
          {"pulse_loss_prob", 0.002}};
}

json prep_steps() {
  return json::array({{{"step", "velocity_select"}, {"rabi_khz", 1.4}, {"passes", 2}},
                      {{"step", "rotation"}, {"angle_pi", 0.5}, {"axis", "y"}}});
}

json with_steps(json steps, std::initializer_list<json> more) {
  for (const auto& s : more) steps.push_back(s);
  return steps;
}

json qnd_vs_photons() {
  return {{"schema_version", kSchemaVersion},
          {"name", "qnd-vs-photons"},
          {"description", "QND squeezing with noise subtraction; scan sequence.2.photons for W versus probe photons"},
          {"mode", "qnd"},
          {"n_atoms", 1170},
          {"physics", {{"delta_c_mhz", 175.0}}},
          {"noise", calibrated_noise()},
          {"trials", {{"signal", 1000}, {"fringe_points", 16}, {"fringe_repeats", 4}}},
          {"sequence", with_steps(prep_steps(), {{{"step", "qnd"}, {"photons", 600.0}},
                                                 {{"step", "readout"}, {"style", "pumped_final"}, {"area_pi", 0.0}}})},
          {"metadata", {{"scan_param", "sequence.2.photons"},
                        {"scan_values", {50, 100, 200, 400, 600, 800, 1000, 1500}}}}};
}

// Incident probe photons during twisting and the detuning of the probe from
// cavity resonance in units of kappa / 2. Only the Lorentzian fraction of the
// photons builds up inside the cavity and scatters off the atoms.
constexpr double kTwistPhotons = 700.0;
constexpr double kTwistDetuning = 2.7;

json twist_step(double mu) {
  const double intracavity = kTwistPhotons / (1.0 + kTwistDetuning * kTwistDetuning);
  return {{"step", "twist"}, {"mu", mu}, {"chi_oat_hz", 10.0}, {"echo", true}, {"photons", intracavity}};
}

json oat_squeeze() {
  return {{"schema_version", kSchemaVersion},
          {"name", "oat-squeeze"},
          {"description", "Cavity-feedback one-axis twisting, population readout along the squeezed axis"},
          {"mode", "oat"},
          {"n_atoms", 730},
          {"physics", {{"delta_c_mhz", 350.0}}},
          {"noise", calibrated_noise()},
          {"trials", {{"signal", 1000}, {"fringe_points", 16}, {"fringe_repeats", 4}}},
          {"sequence", with_steps(prep_steps(), {twist_step(1.05e-3),
                                                 {{"step", "rotation"}, {"angle", "alpha0"}, {"axis", "bloch"}},
                                                 {{"step", "readout"}, {"style", "pumped_final"}, {"area_pi", 0.0}}})},
          {"metadata", {{"probe_photons", kTwistPhotons}, {"probe_detuning_half_linewidths", kTwistDetuning}}}};
}

json interferometer(const std::string& name, const std::string& description, double t_evol_ms, double area_pi,
                    bool alpha_scan) {
  json offsets = json::array();
  if (alpha_scan) {
    for (int d = -40; d <= 40; d += 10) offsets.push_back(d);
  }
  return {{"schema_version", kSchemaVersion},
          {"name", name},
          {"description", description},
          {"mode", "mz"},
          {"n_atoms", 660},
          {"physics", {{"delta_c_mhz", 350.0}}},
          {"noise", calibrated_noise()},
          {"trials",
           {{"signal", alpha_scan ? 0 : 1000}, {"fringe_points", 16}, {"fringe_repeats", 4}, {"alpha_repeats", 300}}},
          {"sequence",
           with_steps(prep_steps(),
                      {twist_step(0.9e-3),
                       {{"step", "rotation"}, {"angle", alpha_scan ? "alpha" : "alpha0"}, {"axis", "bloch"}},
                       {{"step", "evolve"}, {"t_evol_ms", t_evol_ms}, {"phase", 0.0}, {"echo_pulse", true}},
                       {{"step", "readout"}, {"style", "pumped_final"}, {"area_pi", area_pi}}})},
          {"analysis", {{"alpha_offsets_deg", offsets}}}};
}

json lifetime(bool population) {
  json cfg = interferometer(population ? "lifetime-scan-population" : "lifetime-scan",
                            population ? "Squeezed interferometer read out in the population basis; scan "
                                         "sequence.4.t_evol_ms"
                                       : "Squeezed interferometer read out in the phase basis; scan sequence.4.t_evol_ms",
                            0.112, population ? 0.0 : 0.5, false);
  cfg["noise"]["dephasing_rad_per_ms"] = 0.025;
  cfg["metadata"] = {{"scan_param", "sequence.4.t_evol_ms"},
                     {"scan_values", {0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3}}};
  return cfg;
}

json bragg_ladder() {
  return {{"schema_version", kSchemaVersion},
          {"name", "bragg-ladder"},
          {"description", "Raman pi/2 splitting followed by a ladder of Bragg pi pulses on the upper arm"},
          {"mode", "bragg"},
          {"noise", {{"pulse_loss_prob", 0.0}}},
          {"kinematics", {{"ladder_pulses", 4}}}};
}

json velocimetry() {
  json grid = json::array();
  for (int i = 0; i <= 160; ++i) grid.push_back(-20.0 + 0.5 * i);
  return {{"schema_version", kSchemaVersion},
          {"name", "velocimetry"},
          {"description", "Raman spectroscopy of a 0 / 4 hbar k momentum superposition"},
          {"mode", "velocimetry"},
          {"kinematics",
           {{"pulse_rabi_khz", 1.4}, {"classes_hbark", {0.0, 4.0}}, {"class_weights", {0.5, 0.5}}, {"spectrum_khz", grid}}}};
}

json sql_reference() {
  return {{"schema_version", kSchemaVersion},
          {"name", "sql-reference"},
          {"description", "Unentangled coherent spin state read out in the population basis"},
          {"mode", "oat"},
          {"n_atoms", 1000},
          {"noise", {{"pulse_loss_prob", 0.0}, {"readout_noise", false}}},
          {"kinematics", {{"doppler_contrast", false}}},
          {"trials", {{"signal", 10000}, {"fringe_points", 16}, {"fringe_repeats", 4}}},
          {"sequence", json::array({{{"step", "rotation"}, {"angle_pi", 0.5}, {"axis", "y"}},
                                    {{"step", "readout"}, {"style", "pumped_final"}, {"area_pi", 0.0}}})}};
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"qnd-vs-photons", "oat-squeeze",  "squeezed-mz",   "lifetime-scan", "lifetime-scan-population",
          "bragg-ladder",   "velocimetry", "sql-reference"};
}

json preset(const std::string& name) {
  if (name == "qnd-vs-photons") return qnd_vs_photons();
  if (name == "oat-squeeze") return oat_squeeze();
  if (name == "squeezed-mz") {
    return interferometer("squeezed-mz", "Squeezed Mach-Zehnder interferometer; variance versus readout angle",
                          0.112, 0.5, true);
  }
  if (name == "lifetime-scan") return lifetime(false);
  if (name == "lifetime-scan-population") return lifetime(true);
  if (name == "bragg-ladder") return bragg_ladder();
  if (name == "velocimetry") return velocimetry();
  if (name == "sql-reference") return sql_reference();
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace cavsqz
