#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cavsqz/error.hpp"
#include "cavsqz/harness.hpp"
#include "cavsqz/scenario.hpp"
#include "cavsqz/version.hpp"
#include "cavsqz/vibration.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string default_out_dir(const std::string& leaf) {
  const char* env = std::getenv("CAVSQZ_OUT_DIR");
  const fs::path base = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
  return (base / leaf).string();
}

json load_config(const std::string& config_path, const std::string& preset_name) {
  if (!config_path.empty() && !preset_name.empty()) throw cavsqz::ConfigError("give either --config or --preset");
  if (!preset_name.empty()) return cavsqz::preset(preset_name);
  if (config_path.empty()) throw cavsqz::ConfigError("--config or --preset is required");
  std::ifstream in(config_path);
  if (!in) throw cavsqz::ConfigError("cannot open config file " + config_path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw cavsqz::ConfigError("config " + config_path + " is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cavsqz::ConfigError("bad value '" + item + "' in --values");
    }
  }
  if (out.empty()) throw cavsqz::ConfigError("--values is empty");
  return out;
}

void print_report(const std::string& scenario_id, const cavsqz::AnalysisReport& report) {
  std::cout << cavsqz::summary_csv_header() << cavsqz::summary_csv_row(scenario_id, report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity-QED squeezed matter-wave interferometer simulator"};
  app.set_version_flag("--version", std::string(cavsqz::kVersion));
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir;
  std::uint64_t seed = 0;
  int threads = -1;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write records, summary and manifest");
  simulate->add_option("--config", config_path, "Scenario JSON file");
  simulate->add_option("--preset", preset_name, "Built-in scenario name");
  simulate->add_option("--seed", seed, "Master seed (overrides the config)");
  simulate->add_option("--out", out_dir, "Output directory (default $CAVSQZ_OUT_DIR/<scenario_id>)");
  simulate->add_option("--threads", threads, "Worker threads (0: all cores)");

  std::string param, values;
  auto* scan = app.add_subcommand("scan", "Run a scenario for each value of one numeric parameter");
  scan->add_option("--config", config_path, "Scenario JSON file");
  scan->add_option("--preset", preset_name, "Built-in scenario name");
  scan->add_option("--param", param, "Dotted parameter path, e.g. sequence.2.photons")->required();
  scan->add_option("--values", values, "Comma-separated values")->required();
  scan->add_option("--out", out_dir, "Output directory (default $CAVSQZ_OUT_DIR/scan_<param>)");
  scan->add_option("--threads", threads, "Worker threads (0: all cores)");

  std::string records_path, mode;
  auto* analyze = app.add_subcommand("analyze", "Analyze a records.jsonl file");
  analyze->add_option("--records", records_path, "JSON-lines trial records")->required();
  analyze->add_option("--mode", mode, "Estimator (default: from the scenario)")
      ->check(CLI::IsMember({"qnd", "oat", "mz"}));
  analyze->add_option("--config", config_path, "Scenario JSON file (default: manifest.json next to the records)");

  std::string psd_path;
  double tevol_ms = 0.0;
  int atoms = 0;
  auto* budget = app.add_subcommand("budget", "Vibration phase-noise budget from an acceleration PSD");
  budget->add_option("--psd", psd_path, "Two-column file: frequency (Hz), PSD ((m/s^2)^2/Hz)")->required();
  budget->add_option("--tevol", tevol_ms, "Interrogation time T (ms)")->required()->check(CLI::PositiveNumber);
  budget->add_option("--atoms", atoms, "Atom number for the SQL")->required()->check(CLI::PositiveNumber);
  bool extrapolate = false;
  budget->add_flag("--extrapolate", extrapolate, "Extend the PSD beyond its table by power laws");

  auto* presets = app.add_subcommand("presets", "List or print built-in scenarios");
  presets->require_subcommand(1);
  auto* presets_list = presets->add_subcommand("list", "List preset names");
  std::string dump_name;
  auto* presets_dump = presets->add_subcommand("dump", "Print a preset as JSON");
  presets_dump->add_option("name", dump_name, "Preset name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    cavsqz::RunOptions options;
    options.threads = threads;

    if (*simulate) {
      json cfg = load_config(config_path, preset_name);
      if (simulate->count("--seed") > 0) cfg["master_seed"] = seed;
      const cavsqz::Scenario sc = cavsqz::parse_scenario(cfg);
      const std::string dir = out_dir.empty() ? default_out_dir(sc.scenario_id) : out_dir;
      const cavsqz::RunResult result = cavsqz::run(sc, options);
      const bool spin_mode = sc.mode == cavsqz::Mode::Qnd || sc.mode == cavsqz::Mode::Oat ||
                             sc.mode == cavsqz::Mode::Mz;
      if (!spin_mode) {
        const auto written = cavsqz::write_run(result, nullptr, dir);
        std::cout << result.product_summary.dump(2) << "\nwrote " << written.manifest_path << "\n";
        return 0;
      }
      try {
        const cavsqz::AnalysisReport report = cavsqz::analyze(result.records, sc);
        const auto written = cavsqz::write_run(result, &report, dir);
        print_report(sc.scenario_id, report);
        std::cerr << "wrote " << written.records_path << "\n";
      } catch (const cavsqz::Error& e) {
        // Keep the records for inspection when the analysis fails.
        const auto written = cavsqz::write_run(result, nullptr, dir);
        std::cerr << "analysis failed: " << e.what() << "\nwrote " << written.records_path << "\n";
        return kExitRuntime;
      }
      return 0;
    }

    if (*scan) {
      const json cfg = load_config(config_path, preset_name);
      const std::string dir = out_dir.empty() ? default_out_dir("scan_" + param) : out_dir;
      const auto points = cavsqz::scan(cfg, param, parse_values(values), dir, options);
      std::cout << "value," << cavsqz::summary_csv_header();
      for (const auto& p : points) std::cout << p.value << ',' << cavsqz::summary_csv_row(p.scenario_id, p.report);
      std::cerr << "wrote " << (fs::path(dir) / "scan.csv").string() << "\n";
      return 0;
    }

    if (*analyze) {
      json cfg;
      if (!config_path.empty()) {
        cfg = load_config(config_path, "");
      } else {
        const fs::path manifest = fs::path(records_path).parent_path() / "manifest.json";
        std::ifstream in(manifest);
        if (!in) throw cavsqz::ConfigError("no manifest.json next to the records; pass --config");
        try {
          cfg = json::parse(in).at("config");
        } catch (const json::exception& e) {
          throw cavsqz::ConfigError("unreadable manifest " + manifest.string() + ": " + e.what());
        }
      }
      cavsqz::Scenario sc = cavsqz::parse_scenario(cfg);
      if (!mode.empty()) sc.mode = cavsqz::mode_from_string(mode);
      const auto records = cavsqz::read_records(records_path);
      const auto report = cavsqz::analyze(records, sc);
      print_report(sc.scenario_id, report);
      std::cout << cavsqz::report_to_json(report).dump(2) << "\n";
      return 0;
    }

    if (*budget) {
      const cavsqz::PsdTable psd = cavsqz::read_psd_file(psd_path);
      cavsqz::PhaseNoiseOptions opts;
      opts.extrapolate = extrapolate;
      const auto b = cavsqz::vibration_budget(psd, tevol_ms * 1e-3, atoms, cavsqz::PhysicsParams{}, opts);
      std::cout << "phi_rms_rad,sql_rad,db_below_sql\n" << b.phi_rms << ',' << b.sql << ',' << b.db_below_sql << "\n";
      return 0;
    }

    if (*presets_list) {
      for (const auto& name : cavsqz::preset_names()) std::cout << name << "\n";
      return 0;
    }
    if (*presets_dump) {
      std::cout << cavsqz::preset(dump_name).dump(2) << "\n";
      return 0;
    }
  } catch (const cavsqz::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
