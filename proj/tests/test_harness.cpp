#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cavsqz/analysis.hpp"
#include "cavsqz/constants.hpp"
#include "cavsqz/error.hpp"
#include "cavsqz/harness.hpp"
#include "cavsqz/scenario.hpp"

using namespace cavsqz;
using nlohmann::json;

namespace {

json small_sql(int signal = 200) {
  json c = preset("sql-reference");
  c["trials"]["signal"] = signal;
  c["n_atoms"] = 200;
  c["analysis"] = {{"bootstrap_resamples", 200}};
  return c;
}

json noise_free_mz(double phase) {
  return {{"schema_version", kSchemaVersion},
          {"name", "mz-ideal"},
          {"mode", "mz"},
          {"n_atoms", 400},
          {"noise",
           {{"pulse_loss_prob", 0.0}, {"projection_noise", false}, {"readout_noise", false}, {"scatter_coeff", 0.0}}},
          {"kinematics", {{"doppler_contrast", false}}},
          {"trials", {{"signal", 40}, {"fringe_points", 8}, {"fringe_repeats", 1}}},
          {"sequence", json::array({{{"step", "rotation"}, {"angle_pi", 0.5}, {"axis", "y"}},
                                    {{"step", "evolve"}, {"t_evol_ms", 0.1}, {"phase", phase}},
                                    {{"step", "readout"}, {"area_pi", 0.5}}})}};
}

std::string dump_records(const std::vector<TrialRecord>& recs) {
  std::string out;
  for (const auto& r : recs) out += record_to_json(r).dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("presets echo their parameters") {
  for (const auto& name : preset_names()) {
    const Scenario s = parse_scenario(preset(name));
    CHECK(s.name == name);
    CHECK(s.scenario_id.size() == 16);
  }
  const Scenario mz = parse_scenario(preset("squeezed-mz"));
  CHECK(mz.n_atoms == 660);
  REQUIRE(mz.find(StepKind::Evolve) != nullptr);
  CHECK(mz.find(StepKind::Evolve)->t_evol == doctest::Approx(0.112e-3));
  CHECK(mz.analysis.alpha_offsets.size() == 9);

  const json oat = preset("oat-squeeze");
  CHECK(oat["metadata"]["probe_photons"].get<double>() == doctest::Approx(700.0));
  CHECK(oat["metadata"]["probe_detuning_half_linewidths"].get<double>() == doctest::Approx(2.7));

  const Scenario qnd = parse_scenario(preset("qnd-vs-photons"));
  CHECK(qnd.n_atoms == 1170);
  CHECK(to_hz(qnd.physics.delta_c) / 1e6 == doctest::Approx(175.0));
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("scenario validation") {
  json c = small_sql();
  SUBCASE("empty sequence") {
    c["sequence"] = json::array();
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("readout must be last and unique") {
    c["sequence"].push_back({{"step", "rotation"}, {"angle_pi", 0.1}, {"axis", "x"}});
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("unknown key") {
    c["noise"]["bogus"] = 1;
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("wrong type") {
    c["n_atoms"] = "many";
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("too few fringe points") {
    c["trials"]["fringe_points"] = 4;
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("qnd mode needs a qnd step") {
    c["mode"] = "qnd";
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
  SUBCASE("schema version") {
    c["schema_version"] = 99;
    CHECK_THROWS_AS(parse_scenario(c), ConfigError);
  }
}

TEST_CASE("scenario hash") {
  const json a = json::parse(R"({"schema_version":1,"mode":"oat","n_atoms":100,
      "sequence":[{"step":"rotation","axis":"y","angle_pi":0.5},{"step":"readout"}]})");
  const json b = json::parse(R"({"sequence":[{"angle_pi":0.5,"step":"rotation","axis":"y"},{"step":"readout"}],
      "n_atoms":100,"mode":"oat","schema_version":1})");
  CHECK(parse_scenario(a).scenario_id == parse_scenario(b).scenario_id);
  json c = a;
  c["n_atoms"] = 101;
  CHECK(parse_scenario(c).scenario_id != parse_scenario(a).scenario_id);
  // Spelling out a default does not change the identity.
  json d = a;
  d["master_seed"] = 1;
  CHECK(parse_scenario(d).scenario_id == parse_scenario(a).scenario_id);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("set_param") {
  json c = preset("qnd-vs-photons");
  set_param(c, "sequence.2.photons", 1234.0);
  CHECK(c["sequence"][2]["photons"].get<double>() == 1234.0);
  set_param(c, "noise.dephasing_rad_per_ms", 0.1);
  CHECK(parse_scenario(c).noise.dephasing_coeff == doctest::Approx(0.1));
  set_param(c, "n_atoms", 500);
  CHECK(parse_scenario(c).n_atoms == 500);
  CHECK_THROWS_AS(set_param(c, "sequence.9.photons", 1.0), ConfigError);
  CHECK_THROWS_AS(set_param(c, "sequence.2.step", 1.0), ConfigError);
  CHECK_THROWS_AS(set_param(c, "noise.nothing", 1.0), ConfigError);
  CHECK_THROWS_AS(set_param(c, "", 1.0), ConfigError);
}

TEST_CASE("runs are deterministic and thread independent") {
  const Scenario s = parse_scenario(small_sql());
  const auto a = run(s, RunOptions{1});
  const auto b = run(s, RunOptions{1});
  const auto c = run(s, RunOptions{3});
  CHECK(dump_records(a.records) == dump_records(b.records));
  CHECK(dump_records(a.records) == dump_records(c.records));
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].trial_id == i);

  json other = small_sql();
  other["master_seed"] = 2;
  const auto d = run(parse_scenario(other), RunOptions{1});
  CHECK(dump_records(a.records) != dump_records(d.records));
}

TEST_CASE("noise-free interferometer reproduces the signal phase") {
  for (double phi : {0.02, -0.3}) {
    const Scenario s = parse_scenario(noise_free_mz(phi));
    const auto r = run(s, RunOptions{1});
    const auto report = analyze(r.records, s);
    double sum = 0.0;
    int n = 0;
    for (const auto& rec : r.records) {
      if (rec.group != "signal") continue;
      sum += jz_from_shifts(rec, report.shifts, ShiftMode::PumpedFinal);
      ++n;
    }
    REQUIRE(n == 40);
    const double j = 0.5 * s.n_atoms;
    CHECK(std::abs(sum / n / j) == doctest::Approx(std::abs(std::sin(phi))).epsilon(1e-6));
  }
}

TEST_CASE("record JSON round trip") {
  TrialRecord r;
  r.trial_id = 42;
  r.seed = 7;
  r.scenario_id = "0123456789abcdef";
  r.group = "fringe_with_pumped_final";
  r.omega1f = 1.25;
  r.omega2f = -3.5e-7;
  r.phase = 0.3;
  r.alpha = -0.1;
  r.readout_azimuth = 3.0;
  r.ledger.coherent_fraction = 0.9;
  r.ledger.lost_atoms = 12.5;
  r.ledger.scatter_clipped = true;
  r.n_atoms_actual = 660;
  const TrialRecord back = record_from_json(json::parse(record_to_json(r).dump()));
  CHECK(record_to_json(back) == record_to_json(r));
  CHECK(!back.omega1p.has_value());
  CHECK(*back.omega2f == r.omega2f.value());
}

TEST_CASE("written runs and scans") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cavsqz_test_harness";
  fs::remove_all(dir);
  const json cfg = small_sql(100);
  const Scenario s = parse_scenario(cfg);
  const auto r = run(s, RunOptions{1});
  const auto report = analyze(r.records, s);
  const auto written = write_run(r, &report, (dir / "run").string());
  const auto back = read_records(written.records_path);
  CHECK(dump_records(back) == dump_records(r.records));
  std::ifstream mf(written.manifest_path);
  const json manifest = json::parse(mf);
  CHECK(manifest["complete"].get<bool>());
  CHECK(manifest["scenario_id"].get<std::string>() == s.scenario_id);

  const auto points = scan(cfg, "n_atoms", {200.0}, (dir / "scan").string(), RunOptions{1});
  REQUIRE(points.size() == 1);
  CHECK(points[0].scenario_id == s.scenario_id);
  REQUIRE(points[0].report.wineland.has_value());
  CHECK(points[0].report.wineland->w == report.wineland->w);
  CHECK(fs::exists(dir / "scan" / "scan.csv"));
  CHECK(fs::exists(dir / "scan" / "point_000" / "records.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("kinematics modes") {
  const auto bragg = run(parse_scenario(preset("bragg-ladder")), RunOptions{1});
  CHECK(bragg.product_summary["weight_0"].get<double>() == doctest::Approx(0.5));
  CHECK(bragg.product_summary["weight_top"].get<double>() == doctest::Approx(0.5));
  CHECK(bragg.product_summary["top_momentum_hbark"].get<double>() == doctest::Approx(10.0));
  CHECK(!bragg.product_csv.empty());
}
