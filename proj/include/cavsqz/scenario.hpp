#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cavsqz/analysis.hpp"
#include "cavsqz/cavity.hpp"
#include "cavsqz/dynamics.hpp"

namespace cavsqz {

inline constexpr int kSchemaVersion = 1;

enum class Mode { Qnd, Oat, Mz, Bragg, Velocimetry };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view s);

enum class StepKind { VelocitySelect, Rotation, Twist, Qnd, Evolve, Readout };

// Rotation angle source: a fixed value, the scanned readout angle of an alpha
// section, or the optimum computed from the noise-free sequence.
enum class AngleRef { Fixed, Alpha, Alpha0 };

struct Step {
  StepKind kind = StepKind::Rotation;

  // rotation
  AngleRef angle_ref = AngleRef::Fixed;
  double angle = 0.0;        // rad
  bool axis_bloch = false;   // rotate about the current Bloch vector
  bool axis_z = false;
  double axis_azimuth = 0.0; // rad, for equatorial axes

  // twist
  TwistSpec twist;

  // twist, qnd, readout (pre style)
  double photons = 0.0;

  // evolve
  double t_evol = 0.0;       // s
  double phase = 0.0;        // rad
  bool echo_pulse = true;

  // readout
  ShiftMode style = ShiftMode::PumpedFinal;
  double area = 0.0;         // rad, area of the readout pulse for signal shots

  // velocity_select
  double rabi = 0.0;         // rad/s
  int passes = 2;
  bool reduce_atom_number = false;
};

struct TrialCounts {
  int signal = 1000;
  int fringe_points = 16;
  int fringe_repeats = 4;
  int alpha_repeats = 300;
};

struct AnalysisConfig {
  std::vector<double> alpha_offsets;  // rad, relative to the optimum
  int bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 0x5eedULL;
};

struct KinematicsConfig {
  double pulse_rabi = khz(10.0);  // rad/s, Rabi frequency of the spin pulses
  bool doppler_contrast = true;
  double momentum_fwhm = 5.0;     // hbar k
  double momentum_resolution = 0.01;
  // bragg / velocimetry modes
  std::vector<double> spectrum_khz;     // detuning grid for velocimetry
  std::vector<double> classes_hbark;    // discrete superposition for velocimetry
  std::vector<double> class_weights;
  int ladder_pulses = 4;
};

struct Scenario {
  std::string name;
  std::string description;
  Mode mode = Mode::Qnd;
  int n_atoms = 1000;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: hardware concurrency
  TrialCounts trials;
  PhysicsParams physics;
  EnsembleGeometry geometry;
  NoiseConfig noise;
  bool projection_noise = true;  // false: expectation-valued readout
  bool readout_noise = true;     // false: no detection floor noise
  KinematicsConfig kinematics;
  std::vector<Step> sequence;
  AnalysisConfig analysis;

  nlohmann::json config;  // canonical, with defaults filled in
  std::string scenario_id;

  const Step* readout() const;
  const Step* find(StepKind kind) const;
};

// Fills defaults, validates and hashes. Throws ConfigError on unknown keys,
// wrong types, out-of-range values or an invalid sequence.
Scenario parse_scenario(const nlohmann::json& config);
Scenario load_scenario(const std::string& path);

// Config with every default made explicit.
nlohmann::json canonical_config(const nlohmann::json& config);

// FNV-1a 64 of the canonical dump, as 16 hex digits.
std::string scenario_hash(const nlohmann::json& canonical);
std::uint64_t fnv1a64(std::string_view data);

std::vector<std::string> preset_names();
nlohmann::json preset(const std::string& name);

// Sets a numeric value at a dotted path such as "noise.dephasing_rad_per_ms"
// or "sequence.2.photons". The config is first made canonical, so defaulted
// fields are addressable. Throws ConfigError when the path does not address
// an existing numeric field.
void set_param(nlohmann::json& config, const std::string& path, double value);

}  // namespace cavsqz
