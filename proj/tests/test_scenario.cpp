#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sqz/device.hpp"
#include "sqz/fit.hpp"
#include "sqz/noise.hpp"
#include "sqz/scenario.hpp"
#include "sqz/spectrum.hpp"
#include "sqz/trace.hpp"

using namespace sqz;
namespace fs = std::filesystem;

namespace {

const char* kWorkingConfig = R"json({
  "device": {
    "waveguide": {"wavelength_nm": 1550.0, "group_index": 1.88,
                  "nonlinear_index_m2_per_w": 2.4e-19, "effective_area_um2": 1.0},
    "ring": {"radius_um": 30.0, "escape_efficiency": 0.77, "loaded_q": 238000.0},
    "sagnac": {"splitter_transmission": 0.5, "contrast_db": 23.0}
  },
  "pump": {"power_on_chip_w": 0.080, "detuning_rad_per_s": -5.9231e9},
  "noise": {
    "thermo": {"amplitude_rel_shot_at_1mhz": 1.4e6},
    "chain": {"stages": [{"label": "collection_path", "efficiency": 0.5}]},
    "detection": {"detector_bandwidth_hz": 800e6, "dark_noise_clearance_db": 18.0,
                  "homodyne_visibility": 1.0, "detector_quantum_efficiency": 0.956}
  },
  "homodyne_angle_rad": 2.100180724223,
  "grid": {"freq_min_hz": 1e6, "freq_max_hz": 5e9, "freq_points": 13, "angle_points": 7},
  "calibrated": true,
  "outputs": ["spectrum", "summary"]
})json";

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path("scenario_test_work") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

bool has_tmp_files(const fs::path& dir) {
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".tmp") return true;
    }
    return false;
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
    const auto cfg = parse_scenario_config(
        R"({"device":{"waveguide":{},"ring":{}},)"
        R"("pump":{"power_on_chip_w":0.026,"detuning_rad_per_s":0.0},)"
        R"("outputs":["summary"]})");
    CHECK(cfg.device.waveguide.wavelength_nm == 1550.0);
    CHECK(cfg.device.ring.escape_efficiency == 0.77);
    CHECK(cfg.device.sagnac.splitter_transmission == 0.5);
    CHECK(cfg.pump.wavelength_nm == 1550.0);  // inherited from the waveguide
    CHECK(cfg.grid.freq_min_hz == 1e6);
    CHECK(cfg.grid.freq_max_hz == 5e9);
    CHECK(cfg.grid.freq_points == 400);
    CHECK(cfg.grid.angle_points == 181);
    CHECK(cfg.homodyne_angle_rad == 0.0);
    CHECK_FALSE(cfg.calibrated);
    CHECK(cfg.outputs == std::vector<std::string>{"summary"});
    CHECK(cfg.pump_powers_w.empty());
    CHECK(cfg.fit.signal_csv.empty());

    // The waveguide wavelength propagates unless the pump pins its own.
    const auto tuned = parse_scenario_config(
        R"({"device":{"waveguide":{"wavelength_nm":1552.0},"ring":{}},)"
        R"("pump":{"power_on_chip_w":0.026,"detuning_rad_per_s":0.0,"wavelength_nm":1549.0},)"
        R"("outputs":["summary"]})");
    CHECK(tuned.pump.wavelength_nm == 1549.0);
}

TEST_CASE("every violation is reported in one pass") {
    const std::string bad =
        R"({"device":{"waveguide":{"group_index":0.5},)"
        R"("ring":{"escape_efficiency":1.2}},)"
        R"("pump":{"detuning_rad_per_s":0.0},)"
        R"("grid":{"freq_points":1},)"
        R"("outputs":["telemetry"]})";
    try {
        parse_scenario_config(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const auto& v = e.violations();
        REQUIRE(v.size() == 5);
        CHECK(v[0] == "device.waveguide.group_index: must be >= 1, got 0.5");
        CHECK(v[1] == "device.ring.escape_efficiency: must be in (0, 1], got 1.2");
        CHECK(v[2] == "pump.power_on_chip_w: required key missing");
        CHECK(v[3] == "grid.freq_points: must be >= 2, got 1");
        CHECK(v[4] ==
              "outputs[0]: unknown artifact kind \"telemetry\" (expected spectrum, "
              "summary, sweep, prediction, fit)");
        // The what() string surfaces the first problem and the count.
        CHECK(std::string(e.what()).find("device.waveguide.group_index") !=
              std::string::npos);
        CHECK(std::string(e.what()).find("(+4 more)") != std::string::npos);
    }
}

TEST_CASE("malformed json and unknown keys") {
    try {
        parse_scenario_config("{nope");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0] == "config: not valid JSON");
    }

    try {
        parse_scenario_config("[1, 2]");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] == "config: top level must be an object");
    }

    try {
        parse_scenario_config(
            R"({"device":{"waveguide":{},"ring":{"quality":9}},)"
            R"("pump":{"power_on_chip_w":0.026,"detuning_rad_per_s":0.0},)"
            R"("outputs":["summary"],"comment":"hi"})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const auto& v = e.violations();
        REQUIRE(v.size() == 2);
        CHECK(v[0] == "config: unknown key \"comment\"");
        CHECK(v[1] == "device.ring: unknown key \"quality\"");
    }
}

TEST_CASE("cross field requirements") {
    const std::string base =
        R"("device":{"waveguide":{},"ring":{}},)"
        R"("pump":{"power_on_chip_w":0.026,"detuning_rad_per_s":0.0})";

    try {
        parse_scenario_config("{" + base + R"(,"outputs":["sweep"]})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0] ==
              "pump_powers_w: required when outputs includes \"sweep\"");
    }

    try {
        parse_scenario_config("{" + base + R"(,"outputs":["prediction"]})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] ==
              "calibrated: prediction output requires a calibrated parameter set");
    }

    try {
        parse_scenario_config("{" + base + R"(,"outputs":["fit"]})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] == "fit: required when outputs includes \"fit\"");
    }

    try {
        parse_scenario_config(
            "{" + base +
            R"(,"outputs":["fit"],"fit":{"signal_csv":["a.csv","b.csv"],)"
            R"("powers_w":[0.026],"shot_csv":"s.csv","dark_csv":"d.csv"}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] == "fit.powers_w: must match fit.signal_csv in length");
    }

    try {
        parse_scenario_config("{" + base + R"(,"outputs":[]})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] == "outputs: at least one artifact must be requested");
    }

    try {
        parse_scenario_config("{" + base + R"(,"outputs":["summary"],)" +
                              R"("pump_powers_w":[-0.01]})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations()[0] == "pump_powers_w[0]: must be >= 0, got -0.01");
    }
}

TEST_CASE("config echo is idempotent") {
    const auto cfg = parse_scenario_config(kWorkingConfig);
    const std::string echo = scenario_config_to_json(cfg);
    const auto reparsed = parse_scenario_config(echo);
    CHECK(scenario_config_to_json(reparsed) == echo);  // byte-stable round trip

    const auto j = nlohmann::json::parse(echo);
    CHECK(j["device"]["ring"]["loaded_q"].get<double>() == 238000.0);
    CHECK(j["pump"]["wavelength_nm"].get<double>() == 1550.0);
    CHECK(j["calibrated"].get<bool>() == true);
}

TEST_CASE("spectrum and summary artifacts") {
    const auto cfg = parse_scenario_config(kWorkingConfig);
    const fs::path out = fresh_dir("spectrum_summary");
    const auto names = run_scenario(cfg, ".", out.string());
    REQUIRE(names == std::vector<std::string>{"spectrum.csv", "spectrum.json",
                                              "detected.csv", "summary.json"});
    for (const auto& name : names) CHECK(fs::exists(out / name));
    CHECK_FALSE(has_tmp_files(out));

    // Reruns are deterministic byte for byte.
    const fs::path out2 = fresh_dir("spectrum_summary_rerun");
    run_scenario(cfg, ".", out2.string());
    for (const auto& name : names) CHECK(slurp(out / name) == slurp(out2 / name));

    // The grid written to spectrum.csv matches the requested 13 x 7 shape.
    const auto sg = spectrum_from_csv(slurp(out / "spectrum.csv"));
    REQUIRE(sg.frequencies_hz.size() == 13);
    REQUIRE(sg.angles_rad.size() == 7);
    CHECK(sg.frequencies_hz.front() == 1e6);
    CHECK(sg.frequencies_hz.back() == 5e9);

    // detected.csv locks to the grid angle nearest the requested homodyne angle.
    const std::string detected = slurp(out / "detected.csv");
    CHECK(detected.rfind("freq_hz,rel_shot_db\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : detected)
        if (c == '\n') ++rows;
    CHECK(rows == 14);  // header plus one row per frequency

    const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
    CHECK(summary["device"]["kappa_rad_per_s"].get<double>() ==
          doctest::Approx(5.10613057009718895e9).epsilon(1e-12));
    CHECK(summary["device"]["intrinsic_q"].get<double>() > 0.0);
    CHECK(summary["bistability"]["critical_power_w"].get<double>() ==
          doctest::Approx(0.024825455919129606).epsilon(1e-9));
    CHECK(summary["working_point"]["cw"]["branch"].get<std::string>() == "lower");
    CHECK(summary["working_point"]["cw"]["stable"].get<bool>());
    CHECK(summary["working_point"]["carrier_angle_rad"].get<double>() ==
          doctest::Approx(2.2843299522904896).epsilon(1e-12));
    // Balanced loop: both directions solve to the same point.
    CHECK(summary["working_point"]["cw"]["photon_number"].get<double>() ==
          summary["working_point"]["ccw"]["photon_number"].get<double>());
    const double locked = summary["detected"]["homodyne_angle_rad"].get<double>();
    CHECK(locked == doctest::Approx(sg.angles_rad[5]).epsilon(1e-12));
    CHECK(summary["detected"]["band_lo_hz"].get<double>() == 500e6);
    CHECK(summary["detected"]["band_hi_hz"].get<double>() == 800e6);
    const double band_min_f = summary["detected"]["band_min_frequency_hz"].get<double>();
    CHECK(band_min_f >= 500e6);
    CHECK(band_min_f <= 800e6);
    CHECK(std::isfinite(summary["detected"]["band_min_db"].get<double>()));
    CHECK(summary["pump"]["power_on_chip_w"].get<double>() == 0.080);
    CHECK(summary["outputs"] == nlohmann::json({"spectrum", "summary"}));
}

TEST_CASE("prediction artifact carries the cryo point") {
    auto j = nlohmann::json::parse(kWorkingConfig);
    j["noise"]["thermo"]["temperature_k"] = 3.0;
    j["noise"]["thermo"]["dndt_ratio_vs_reference"] = 0.316;
    j["outputs"] = {"prediction"};
    const auto cfg = parse_scenario_config(j.dump());
    const fs::path out = fresh_dir("prediction");
    const auto names = run_scenario(cfg, ".", out.string());
    REQUIRE(names == std::vector<std::string>{"prediction.json"});

    const auto p = nlohmann::json::parse(slurp(out / "prediction.json"));
    CHECK(p["frequency_hz"].get<double>() == 10e6);
    CHECK(p["s_min_normalized"].get<double>() ==
          doctest::Approx(0.7207439694084826).epsilon(1e-12));
    CHECK(p["squeezing_db"].get<double>() ==
          doctest::Approx(-1.422189827428425).epsilon(1e-12));
    CHECK(p["theta_min_rad"].get<double>() ==
          doctest::Approx(2.473510036666723).epsilon(1e-12));
    CHECK(p["thermo_rel_shot"].get<double>() ==
          doctest::Approx(0.1445774892272335).epsilon(1e-12));
    CHECK(p["temperature_k"].get<double>() == 3.0);
}

TEST_CASE("sweep artifact") {
    auto j = nlohmann::json::parse(kWorkingConfig);
    j["outputs"] = {"sweep"};
    j["pump_powers_w"] = {0.026, 0.039};
    const auto cfg = parse_scenario_config(j.dump());
    const fs::path out = fresh_dir("sweep");
    const auto names = run_scenario(cfg, ".", out.string());
    REQUIRE(names == std::vector<std::string>{"sweep.csv"});

    const std::string csv = slurp(out / "sweep.csv");
    CHECK(csv.rfind("power_w,freq_hz,s_min_rel_shot,s_max_rel_shot\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows == 1 + 2 * 13);  // header plus (powers x frequencies)
}

TEST_CASE("fit artifact end to end") {
    // Synthesize noiseless traces with known parameters, write them as ESA
    // CSVs, and check the scenario-driven fit recovers the generator inputs.
    // Device and detection mirror kWorkingConfig so the scenario's fit setup
    // matches the generator.
    const DeviceSpec device;
    const ThermoNoiseModel quiet;
    DetectionSpec detection;
    detection.detector_quantum_efficiency = 0.956;
    const auto grid = log_frequency_grid(1e6, 2e9, 40);
    const std::vector<double> powers{0.026, 0.039, 0.052};

    const fs::path base = fresh_dir("fit_inputs");
    std::vector<std::string> signal_names;
    std::uint64_t seed = 0;
    for (double p : powers) {
        PumpSpec pump;
        pump.power_on_chip_w = p;
        pump.detuning_rad_per_s = -5.9231e9;
        const auto set = make_synthetic_traces(device, pump, quiet, detection, 0.478,
                                               0.5, grid, std::nullopt, 0.0, seed++);
        const std::string name = "p" + std::to_string(seed) + ".csv";
        write_file_atomic((base / name).string(), serialize_trace(set.signal));
        signal_names.push_back(name);
        if (p == powers.back()) {
            write_file_atomic((base / "shot.csv").string(), serialize_trace(set.shot));
            write_file_atomic((base / "dark.csv").string(), serialize_trace(set.dark));
        }
    }

    auto j = nlohmann::json::parse(kWorkingConfig);
    j["outputs"] = {"fit"};
    j["fit"] = {{"signal_csv", signal_names},
                {"powers_w", powers},
                {"shot_csv", "shot.csv"},
                {"dark_csv", "dark.csv"}};
    const auto cfg = parse_scenario_config(j.dump());
    const fs::path out = fresh_dir("fit_out");
    const auto names = run_scenario(cfg, base.string(), out.string());
    REQUIRE(names == std::vector<std::string>{"normalized_0.csv", "normalized_1.csv",
                                              "normalized_2.csv", "fit.json"});

    const auto f = nlohmann::json::parse(slurp(out / "fit.json"));
    CHECK(f["kerr"]["converged"].get<bool>());
    double detuning = 0.0, kerr = 0.0, eta = 0.0;
    for (const auto& param : f["kerr"]["parameters"]) {
        const auto name = param["name"].get<std::string>();
        if (name == "detuning_rad_per_s") detuning = param["value"].get<double>();
        if (name == "kerr_rate_rad_per_s") kerr = param["value"].get<double>();
        if (name == "measurement_efficiency") eta = param["value"].get<double>();
    }
    CHECK(detuning == doctest::Approx(-5.9231e9).epsilon(1e-6));
    CHECK(kerr == doctest::Approx(16.820117684291173).epsilon(1e-6));
    CHECK(eta == doctest::Approx(0.478).epsilon(1e-6));
    CHECK(f["excess_noise"]["n_points"].get<int>() > 3);

    // Missing inputs are caught up front, before anything lands in out_dir.
    j["fit"]["dark_csv"] = "no_such_dark.csv";
    const auto broken = parse_scenario_config(j.dump());
    const fs::path out_none = fresh_dir("fit_missing");
    try {
        run_scenario(broken, base.string(), out_none.string());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0] == "fit.dark_csv: file not found: no_such_dark.csv");
    }
    CHECK(fs::is_empty(out_none));
}

TEST_CASE("write_file_atomic") {
    const fs::path dir = fresh_dir("atomic");
    const std::string path = (dir / "artifact.txt").string();
    write_file_atomic(path, "first\n");
    CHECK(slurp(path) == "first\n");
    write_file_atomic(path, "second\n");  // overwrite through the same temp path
    CHECK(slurp(path) == "second\n");
    CHECK_FALSE(has_tmp_files(dir));
}
