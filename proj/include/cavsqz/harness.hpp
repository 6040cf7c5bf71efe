#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavsqz/analysis.hpp"
#include "cavsqz/kinematics.hpp"
#include "cavsqz/scenario.hpp"

namespace cavsqz {

struct RunOptions {
  int threads = -1;  // -1: use the scenario setting
};

// Quantities fixed before any trial runs, from the noise-free sequence at the
// nominal atom number.
struct SequencePlan {
  double contrast_factor = 1.0;   // Doppler-averaged pulse contrast
  double selection_survival = 1.0;
  double alpha_opt = 0.0;         // rotation that puts the optimal axis on the readout
  double alpha0 = 0.0;            // minimum-variance angle after squeezing
  double v_min = 1.0;             // its variance in units of N/4
  std::vector<double> bloch_azimuth_squeezed;  // per step, before the step
  std::vector<double> bloch_azimuth_plain;
};

struct RunResult {
  Scenario scenario;
  SequencePlan plan;
  std::vector<TrialRecord> records;
  std::string product_name;  // bragg / velocimetry output file
  std::string product_csv;
  nlohmann::json product_summary;
  std::string started;
  std::string finished;
};

SequencePlan plan_sequence(const Scenario& scenario);

RunResult run(const Scenario& scenario, const RunOptions& options = {});

struct AnalysisReport {
  Mode mode = Mode::Qnd;
  DispersiveShifts shifts;
  std::optional<WinelandResult> wineland;
  std::map<std::string, FringeFit> fringes;
  std::map<double, double> w_by_alpha;
  std::optional<EllipseFit> ellipse;
  std::optional<double> raw_variance_ratio;  // Var(theta) 2 J_s, the squeezing gain before contrast loss
};

AnalysisReport analyze(const std::vector<TrialRecord>& records, const Scenario& scenario);

nlohmann::json record_to_json(const TrialRecord& record);
TrialRecord record_from_json(const nlohmann::json& j);
std::vector<TrialRecord> read_records(const std::string& path);

std::string summary_csv_header();
std::string summary_csv_row(const std::string& scenario_id, const AnalysisReport& report);
nlohmann::json report_to_json(const AnalysisReport& report);

struct WrittenRun {
  std::string records_path;
  std::string manifest_path;
  std::string summary_path;
};

// Writes records.jsonl, summary.csv (spin modes) or the kinematics product,
// and manifest.json into out_dir. The manifest is written first with
// "complete": false and rewritten at the end.
WrittenRun write_run(const RunResult& result, const AnalysisReport* report, const std::string& out_dir);

struct ScanPoint {
  double value = 0.0;
  std::string scenario_id;
  AnalysisReport report;
};

// Runs and analyzes the scenario once per value of the numeric parameter at
// `path`. With an out_dir, every point is written under point_NNN/ and the
// table to scan.csv.
std::vector<ScanPoint> scan(const nlohmann::json& config, const std::string& path, const std::vector<double>& values,
                            const std::string& out_dir = "", const RunOptions& options = {});

std::string iso_timestamp();

}  // namespace cavsqz
