#include "sqz/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "sqz/constants.hpp"
#include "sqz/fit.hpp"
#include "sqz/spectrum.hpp"
#include "sqz/trace.hpp"

namespace sqz {

namespace {

using ojson = nlohmann::ordered_json;

std::string num_str(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

std::string join_path(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
}

// Schema walker. Each accessor records a violation and returns failure
// instead of throwing, so one pass reports every problem in the config.
struct Walker {
    std::vector<std::string>& violations;

    void fail(const std::string& key_path, const std::string& what) {
        violations.push_back(key_path + ": " + what);
    }

    const nlohmann::json* object(const nlohmann::json& parent, const std::string& path,
                                 const char* key, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return nullptr;
        }
        if (!it->is_object()) {
            fail(join_path(path, key), "expected an object");
            return nullptr;
        }
        return &*it;
    }

    const nlohmann::json* array(const nlohmann::json& parent, const std::string& path,
                                const char* key, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return nullptr;
        }
        if (!it->is_array()) {
            fail(join_path(path, key), "expected an array");
            return nullptr;
        }
        return &*it;
    }

    bool number(const nlohmann::json& parent, const std::string& path, const char* key,
                double& out, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return false;
        }
        if (!it->is_number()) {
            fail(join_path(path, key), "expected a number");
            return false;
        }
        const double v = it->get<double>();
        if (!std::isfinite(v)) {
            fail(join_path(path, key), "must be finite");
            return false;
        }
        out = v;
        return true;
    }

    bool integer(const nlohmann::json& parent, const std::string& path, const char* key,
                 int& out, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return false;
        }
        double v = 0.0;
        if (it->is_number_integer()) {
            v = static_cast<double>(it->get<long long>());
        } else if (it->is_number_float() &&
                   it->get<double>() == std::floor(it->get<double>())) {
            v = it->get<double>();
        } else {
            fail(join_path(path, key), "expected an integer");
            return false;
        }
        out = static_cast<int>(v);
        return true;
    }

    bool boolean(const nlohmann::json& parent, const std::string& path, const char* key,
                 bool& out, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return false;
        }
        if (!it->is_boolean()) {
            fail(join_path(path, key), "expected a boolean");
            return false;
        }
        out = it->get<bool>();
        return true;
    }

    bool text(const nlohmann::json& parent, const std::string& path, const char* key,
              std::string& out, bool required) {
        auto it = parent.find(key);
        if (it == parent.end()) {
            if (required) fail(join_path(path, key), "required key missing");
            return false;
        }
        if (!it->is_string()) {
            fail(join_path(path, key), "expected a string");
            return false;
        }
        out = it->get<std::string>();
        return true;
    }

    void only_keys(const nlohmann::json& obj, const std::string& path,
                   std::initializer_list<const char*> allowed) {
        for (const auto& item : obj.items()) {
            bool known = false;
            for (const char* k : allowed) {
                if (item.key() == k) {
                    known = true;
                    break;
                }
            }
            if (!known) {
                violations.push_back((path.empty() ? std::string("config") : path) +
                                     ": unknown key \"" + item.key() + "\"");
            }
        }
    }

    // Range check with the bound spelled out, e.g.
    //   device.ring.escape_efficiency: must be in (0, 1], got 1.2
    void require(bool ok, const std::string& key_path, const char* bound, double got) {
        if (!ok) fail(key_path, std::string("must be ") + bound + ", got " + num_str(got));
    }
};

void parse_common_mode(Walker& w, const nlohmann::json& obj, const std::string& path,
                       CommonModeNoise& out) {
    w.only_keys(obj, path, {"amplitude_rel_shot_at_1mhz", "exponent", "table"});
    if (w.number(obj, path, "amplitude_rel_shot_at_1mhz", out.amplitude_rel_shot_at_1mhz,
                 false)) {
        w.require(out.amplitude_rel_shot_at_1mhz >= 0.0,
                  join_path(path, "amplitude_rel_shot_at_1mhz"), ">= 0",
                  out.amplitude_rel_shot_at_1mhz);
    }
    if (w.number(obj, path, "exponent", out.exponent, false)) {
        w.require(out.exponent >= 0.0, join_path(path, "exponent"), ">= 0", out.exponent);
    }
    if (const auto* table = w.array(obj, path, "table", false)) {
        double prev = 0.0;
        for (std::size_t i = 0; i < table->size(); ++i) {
            const auto& el = (*table)[i];
            const std::string el_path = join_path(path, "table") + "[" + std::to_string(i) + "]";
            if (!el.is_array() || el.size() != 2 || !el[0].is_number() || !el[1].is_number()) {
                w.fail(el_path, "expected a [freq_hz, power_rel_shot] pair");
                continue;
            }
            const double f = el[0].get<double>();
            const double p = el[1].get<double>();
            w.require(f > prev, el_path, "strictly increasing in frequency with freq_hz > 0", f);
            w.require(p >= 0.0, el_path, ">= 0 in power", p);
            out.table.emplace_back(f, p);
            prev = f;
        }
    }
}

void parse_device(Walker& w, const nlohmann::json& obj, DeviceSpec& out) {
    w.only_keys(obj, "device", {"waveguide", "ring", "sagnac"});

    if (const auto* wg = w.object(obj, "device", "waveguide", true)) {
        const std::string p = "device.waveguide";
        w.only_keys(*wg, p,
                    {"wavelength_nm", "group_index", "nonlinear_index_m2_per_w",
                     "effective_area_um2", "propagation_loss_db_per_cm"});
        auto& v = out.waveguide;
        if (w.number(*wg, p, "wavelength_nm", v.wavelength_nm, false))
            w.require(v.wavelength_nm > 0.0, p + ".wavelength_nm", "> 0", v.wavelength_nm);
        if (w.number(*wg, p, "group_index", v.group_index, false))
            w.require(v.group_index >= 1.0, p + ".group_index", ">= 1", v.group_index);
        if (w.number(*wg, p, "nonlinear_index_m2_per_w", v.nonlinear_index_m2_per_w, false))
            w.require(v.nonlinear_index_m2_per_w >= 0.0, p + ".nonlinear_index_m2_per_w",
                      ">= 0", v.nonlinear_index_m2_per_w);
        if (w.number(*wg, p, "effective_area_um2", v.effective_area_um2, false))
            w.require(v.effective_area_um2 > 0.0, p + ".effective_area_um2", "> 0",
                      v.effective_area_um2);
        double loss = 0.0;
        if (w.number(*wg, p, "propagation_loss_db_per_cm", loss, false)) {
            w.require(loss >= 0.0, p + ".propagation_loss_db_per_cm", ">= 0", loss);
            v.propagation_loss_db_per_cm = loss;
        }
    }

    if (const auto* ring = w.object(obj, "device", "ring", true)) {
        const std::string p = "device.ring";
        w.only_keys(*ring, p, {"radius_um", "escape_efficiency", "loaded_q"});
        auto& r = out.ring;
        if (w.number(*ring, p, "radius_um", r.radius_um, false))
            w.require(r.radius_um > 0.0, p + ".radius_um", "> 0", r.radius_um);
        if (w.number(*ring, p, "escape_efficiency", r.escape_efficiency, false))
            w.require(r.escape_efficiency > 0.0 && r.escape_efficiency <= 1.0,
                      p + ".escape_efficiency", "in (0, 1]", r.escape_efficiency);
        if (w.number(*ring, p, "loaded_q", r.loaded_q, false))
            w.require(r.loaded_q > 0.0, p + ".loaded_q", "> 0", r.loaded_q);
    }

    if (const auto* sg = w.object(obj, "device", "sagnac", false)) {
        const std::string p = "device.sagnac";
        w.only_keys(*sg, p,
                    {"splitter_transmission", "contrast_db", "common_mode_noise_rel_shot"});
        auto& s = out.sagnac;
        if (w.number(*sg, p, "splitter_transmission", s.splitter_transmission, false))
            w.require(s.splitter_transmission >= 0.0 && s.splitter_transmission <= 1.0,
                      p + ".splitter_transmission", "in [0, 1]", s.splitter_transmission);
        if (w.number(*sg, p, "contrast_db", s.contrast_db, false))
            w.require(s.contrast_db >= 0.0, p + ".contrast_db", ">= 0", s.contrast_db);
        if (const auto* cm = w.object(*sg, p, "common_mode_noise_rel_shot", false)) {
            parse_common_mode(w, *cm, p + ".common_mode_noise_rel_shot",
                              s.common_mode_noise_rel_shot);
        }
    }
}

void parse_noise(Walker& w, const nlohmann::json& obj, ScenarioConfig& c) {
    w.only_keys(obj, "noise", {"thermo", "chain", "detection"});

    if (const auto* th = w.object(obj, "noise", "thermo", false)) {
        const std::string p = "noise.thermo";
        w.only_keys(*th, p,
                    {"amplitude_rel_shot_at_1mhz", "corner_frequency_hz", "temperature_k",
                     "reference_temperature_k", "dndt_ratio_vs_reference"});
        auto& t = c.thermo;
        if (w.number(*th, p, "amplitude_rel_shot_at_1mhz", t.amplitude_rel_shot_at_1mhz,
                     false))
            w.require(t.amplitude_rel_shot_at_1mhz >= 0.0, p + ".amplitude_rel_shot_at_1mhz",
                      ">= 0", t.amplitude_rel_shot_at_1mhz);
        double corner = 0.0;
        if (w.number(*th, p, "corner_frequency_hz", corner, false)) {
            w.require(corner > 0.0, p + ".corner_frequency_hz", "> 0", corner);
            t.corner_frequency_hz = corner;
        }
        if (w.number(*th, p, "temperature_k", t.temperature_k, false))
            w.require(t.temperature_k > 0.0, p + ".temperature_k", "> 0", t.temperature_k);
        if (w.number(*th, p, "reference_temperature_k", t.reference_temperature_k, false))
            w.require(t.reference_temperature_k > 0.0, p + ".reference_temperature_k", "> 0",
                      t.reference_temperature_k);
        if (w.number(*th, p, "dndt_ratio_vs_reference", t.dndt_ratio_vs_reference, false))
            w.require(t.dndt_ratio_vs_reference >= 0.0, p + ".dndt_ratio_vs_reference",
                      ">= 0", t.dndt_ratio_vs_reference);
    }

    if (const auto* ch = w.object(obj, "noise", "chain", false)) {
        w.only_keys(*ch, "noise.chain", {"stages"});
        if (const auto* stages = w.array(*ch, "noise.chain", "stages", true)) {
            for (std::size_t i = 0; i < stages->size(); ++i) {
                const std::string p = "noise.chain.stages[" + std::to_string(i) + "]";
                const auto& el = (*stages)[i];
                if (!el.is_object()) {
                    w.fail(p, "expected an object");
                    continue;
                }
                w.only_keys(el, p, {"label", "efficiency"});
                NoiseStage stage;
                if (w.text(el, p, "label", stage.label, true)) {
                    if (stage.label.empty()) w.fail(p + ".label", "must not be empty");
                }
                if (w.number(el, p, "efficiency", stage.efficiency, true))
                    w.require(stage.efficiency > 0.0 && stage.efficiency <= 1.0,
                              p + ".efficiency", "in (0, 1]", stage.efficiency);
                c.chain.stages.push_back(std::move(stage));
            }
        }
    }

    if (const auto* det = w.object(obj, "noise", "detection", false)) {
        const std::string p = "noise.detection";
        w.only_keys(*det, p,
                    {"detector_bandwidth_hz", "dark_noise_clearance_db",
                     "homodyne_visibility", "detector_quantum_efficiency"});
        auto& d = c.detection;
        if (w.number(*det, p, "detector_bandwidth_hz", d.detector_bandwidth_hz, false))
            w.require(d.detector_bandwidth_hz > 0.0, p + ".detector_bandwidth_hz", "> 0",
                      d.detector_bandwidth_hz);
        if (w.number(*det, p, "dark_noise_clearance_db", d.dark_noise_clearance_db, false))
            w.require(d.dark_noise_clearance_db >= 0.0, p + ".dark_noise_clearance_db",
                      ">= 0", d.dark_noise_clearance_db);
        if (w.number(*det, p, "homodyne_visibility", d.homodyne_visibility, false))
            w.require(d.homodyne_visibility > 0.0 && d.homodyne_visibility <= 1.0,
                      p + ".homodyne_visibility", "in (0, 1]", d.homodyne_visibility);
        if (w.number(*det, p, "detector_quantum_efficiency", d.detector_quantum_efficiency,
                     false))
            w.require(d.detector_quantum_efficiency > 0.0 &&
                          d.detector_quantum_efficiency <= 1.0,
                      p + ".detector_quantum_efficiency", "in (0, 1]",
                      d.detector_quantum_efficiency);
    }
}

void parse_fit_inputs(Walker& w, const nlohmann::json& obj, FitInputs& out) {
    w.only_keys(obj, "fit", {"signal_csv", "powers_w", "shot_csv", "dark_csv"});
    if (const auto* sig = w.array(obj, "fit", "signal_csv", true)) {
        for (std::size_t i = 0; i < sig->size(); ++i) {
            if (!(*sig)[i].is_string()) {
                w.fail("fit.signal_csv[" + std::to_string(i) + "]", "expected a string");
                continue;
            }
            out.signal_csv.push_back((*sig)[i].get<std::string>());
        }
        if (sig->empty()) w.fail("fit.signal_csv", "must not be empty");
    }
    if (const auto* pw = w.array(obj, "fit", "powers_w", true)) {
        for (std::size_t i = 0; i < pw->size(); ++i) {
            const std::string p = "fit.powers_w[" + std::to_string(i) + "]";
            if (!(*pw)[i].is_number()) {
                w.fail(p, "expected a number");
                continue;
            }
            const double val = (*pw)[i].get<double>();
            w.require(val > 0.0, p, "> 0", val);
            out.powers_w.push_back(val);
        }
        if (out.powers_w.size() != out.signal_csv.size()) {
            w.fail("fit.powers_w", "must match fit.signal_csv in length");
        }
    }
    w.text(obj, "fit", "shot_csv", out.shot_csv, true);
    w.text(obj, "fit", "dark_csv", out.dark_csv, true);
}

constexpr const char* kOutputKinds[] = {"spectrum", "summary", "sweep", "prediction", "fit"};

bool wants(const ScenarioConfig& c, const char* kind) {
    return std::find(c.outputs.begin(), c.outputs.end(), kind) != c.outputs.end();
}

ojson config_echo(const ScenarioConfig& c) {
    ojson wg{{"wavelength_nm", c.device.waveguide.wavelength_nm},
             {"group_index", c.device.waveguide.group_index},
             {"nonlinear_index_m2_per_w", c.device.waveguide.nonlinear_index_m2_per_w},
             {"effective_area_um2", c.device.waveguide.effective_area_um2}};
    if (c.device.waveguide.propagation_loss_db_per_cm) {
        wg["propagation_loss_db_per_cm"] = *c.device.waveguide.propagation_loss_db_per_cm;
    }
    ojson sagnac{{"splitter_transmission", c.device.sagnac.splitter_transmission},
                 {"contrast_db", c.device.sagnac.contrast_db}};
    const auto& cm = c.device.sagnac.common_mode_noise_rel_shot;
    if (cm.amplitude_rel_shot_at_1mhz != 0.0 || !cm.table.empty()) {
        ojson cmj{{"amplitude_rel_shot_at_1mhz", cm.amplitude_rel_shot_at_1mhz},
                  {"exponent", cm.exponent}};
        if (!cm.table.empty()) {
            ojson table = ojson::array();
            for (const auto& [f, p] : cm.table) table.push_back({f, p});
            cmj["table"] = std::move(table);
        }
        sagnac["common_mode_noise_rel_shot"] = std::move(cmj);
    }
    ojson thermo{{"amplitude_rel_shot_at_1mhz", c.thermo.amplitude_rel_shot_at_1mhz},
                 {"temperature_k", c.thermo.temperature_k},
                 {"reference_temperature_k", c.thermo.reference_temperature_k},
                 {"dndt_ratio_vs_reference", c.thermo.dndt_ratio_vs_reference}};
    if (c.thermo.corner_frequency_hz) {
        thermo["corner_frequency_hz"] = *c.thermo.corner_frequency_hz;
    }
    ojson stages = ojson::array();
    for (const auto& st : c.chain.stages) {
        stages.push_back(ojson{{"label", st.label}, {"efficiency", st.efficiency}});
    }
    ojson out{
        {"device",
         {{"waveguide", std::move(wg)},
          {"ring",
           {{"radius_um", c.device.ring.radius_um},
            {"escape_efficiency", c.device.ring.escape_efficiency},
            {"loaded_q", c.device.ring.loaded_q}}},
          {"sagnac", std::move(sagnac)}}},
        {"pump",
         {{"power_on_chip_w", c.pump.power_on_chip_w},
          {"detuning_rad_per_s", c.pump.detuning_rad_per_s},
          {"wavelength_nm", c.pump.wavelength_nm}}},
        {"noise",
         {{"thermo", std::move(thermo)},
          {"chain", {{"stages", std::move(stages)}}},
          {"detection",
           {{"detector_bandwidth_hz", c.detection.detector_bandwidth_hz},
            {"dark_noise_clearance_db", c.detection.dark_noise_clearance_db},
            {"homodyne_visibility", c.detection.homodyne_visibility},
            {"detector_quantum_efficiency", c.detection.detector_quantum_efficiency}}}}},
        {"homodyne_angle_rad", c.homodyne_angle_rad},
        {"grid",
         {{"freq_min_hz", c.grid.freq_min_hz},
          {"freq_max_hz", c.grid.freq_max_hz},
          {"freq_points", c.grid.freq_points},
          {"angle_points", c.grid.angle_points}}},
        {"calibrated", c.calibrated},
        {"outputs", c.outputs}};
    if (!c.pump_powers_w.empty()) out["pump_powers_w"] = c.pump_powers_w;
    if (!c.fit.signal_csv.empty()) {
        out["fit"] = ojson{{"signal_csv", c.fit.signal_csv},
                           {"powers_w", c.fit.powers_w},
                           {"shot_csv", c.fit.shot_csv},
                           {"dark_csv", c.fit.dark_csv}};
    }
    return out;
}

const CavitySolution& pick_stable(const std::vector<CavitySolution>& solutions,
                                  const char* direction) {
    for (const auto& s : solutions) {
        if (s.stable) return s;
    }
    throw std::runtime_error(std::string("run_scenario: no stable branch for the ") +
                             direction + " direction");
}

std::size_t nearest_index(const std::vector<double>& grid, double value) {
    std::size_t best = 0;
    double best_dist = std::abs(grid[0] - value);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double d = std::abs(grid[i] - value);
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(violations.empty()
                             ? std::string("config error")
                             : "config error: " + violations.front() +
                                   (violations.size() > 1
                                        ? " (+" + std::to_string(violations.size() - 1) +
                                              " more)"
                                        : "")),
      violations_(std::move(violations)) {}

ScenarioConfig parse_scenario_config(const std::string& json_text) {
    std::vector<std::string> violations;
    const nlohmann::json root = nlohmann::json::parse(json_text, nullptr, false);
    if (root.is_discarded()) {
        violations.push_back("config: not valid JSON");
        throw ConfigError(std::move(violations));
    }
    if (!root.is_object()) {
        violations.push_back("config: top level must be an object");
        throw ConfigError(std::move(violations));
    }

    Walker w{violations};
    ScenarioConfig c;

    w.only_keys(root, "",
                {"device", "pump", "pump_powers_w", "noise", "homodyne_angle_rad", "grid",
                 "calibrated", "outputs", "fit"});

    if (const auto* dev = w.object(root, "", "device", true)) parse_device(w, *dev, c.device);

    bool pump_wavelength_given = false;
    if (const auto* pump = w.object(root, "", "pump", true)) {
        const std::string p = "pump";
        w.only_keys(*pump, p, {"power_on_chip_w", "detuning_rad_per_s", "wavelength_nm"});
        if (w.number(*pump, p, "power_on_chip_w", c.pump.power_on_chip_w, true))
            w.require(c.pump.power_on_chip_w >= 0.0, "pump.power_on_chip_w", ">= 0",
                      c.pump.power_on_chip_w);
        w.number(*pump, p, "detuning_rad_per_s", c.pump.detuning_rad_per_s, true);
        if (w.number(*pump, p, "wavelength_nm", c.pump.wavelength_nm, false)) {
            pump_wavelength_given = true;
            w.require(c.pump.wavelength_nm > 0.0, "pump.wavelength_nm", "> 0",
                      c.pump.wavelength_nm);
        }
    }
    if (!pump_wavelength_given) c.pump.wavelength_nm = c.device.waveguide.wavelength_nm;

    if (const auto* powers = w.array(root, "", "pump_powers_w", false)) {
        for (std::size_t i = 0; i < powers->size(); ++i) {
            const std::string p = "pump_powers_w[" + std::to_string(i) + "]";
            if (!(*powers)[i].is_number()) {
                w.fail(p, "expected a number");
                continue;
            }
            const double val = (*powers)[i].get<double>();
            w.require(val >= 0.0, p, ">= 0", val);
            c.pump_powers_w.push_back(val);
        }
        if (powers->empty()) w.fail("pump_powers_w", "must not be empty");
    }

    if (const auto* noise = w.object(root, "", "noise", false)) parse_noise(w, *noise, c);

    w.number(root, "", "homodyne_angle_rad", c.homodyne_angle_rad, false);

    if (const auto* grid = w.object(root, "", "grid", false)) {
        const std::string p = "grid";
        w.only_keys(*grid, p, {"freq_min_hz", "freq_max_hz", "freq_points", "angle_points"});
        if (w.number(*grid, p, "freq_min_hz", c.grid.freq_min_hz, false))
            w.require(c.grid.freq_min_hz > 0.0, "grid.freq_min_hz", "> 0", c.grid.freq_min_hz);
        if (w.number(*grid, p, "freq_max_hz", c.grid.freq_max_hz, false))
            w.require(c.grid.freq_max_hz > c.grid.freq_min_hz, "grid.freq_max_hz",
                      "> freq_min_hz", c.grid.freq_max_hz);
        if (w.integer(*grid, p, "freq_points", c.grid.freq_points, false))
            w.require(c.grid.freq_points >= 2, "grid.freq_points", ">= 2",
                      c.grid.freq_points);
        if (w.integer(*grid, p, "angle_points", c.grid.angle_points, false))
            w.require(c.grid.angle_points >= 3, "grid.angle_points", ">= 3",
                      c.grid.angle_points);
    }

    w.boolean(root, "", "calibrated", c.calibrated, false);

    if (const auto* outputs = w.array(root, "", "outputs", true)) {
        for (std::size_t i = 0; i < outputs->size(); ++i) {
            const std::string p = "outputs[" + std::to_string(i) + "]";
            if (!(*outputs)[i].is_string()) {
                w.fail(p, "expected a string");
                continue;
            }
            const std::string kind = (*outputs)[i].get<std::string>();
            const bool known =
                std::find_if(std::begin(kOutputKinds), std::end(kOutputKinds),
                             [&](const char* k) { return kind == k; }) !=
                std::end(kOutputKinds);
            if (!known) {
                w.fail(p, "unknown artifact kind \"" + kind +
                               "\" (expected spectrum, summary, sweep, prediction, fit)");
                continue;
            }
            c.outputs.push_back(kind);
        }
        if (outputs->empty()) {
            w.fail("outputs", "at least one artifact must be requested");
        }
    }

    if (const auto* fit = w.object(root, "", "fit", false)) {
        parse_fit_inputs(w, *fit, c.fit);
    }

    // Cross-field requirements.
    if (wants(c, "sweep") && c.pump_powers_w.empty()) {
        w.fail("pump_powers_w", "required when outputs includes \"sweep\"");
    }
    if (wants(c, "fit") && c.fit.signal_csv.empty() && root.find("fit") == root.end()) {
        w.fail("fit", "required when outputs includes \"fit\"");
    }
    if (wants(c, "prediction") && !c.calibrated) {
        w.fail("calibrated", "prediction output requires a calibrated parameter set");
    }

    if (!violations.empty()) throw ConfigError(std::move(violations));
    return c;
}

std::string scenario_config_to_json(const ScenarioConfig& config) {
    return config_echo(config).dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        f.close();
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::string> run_scenario(const ScenarioConfig& config,
                                      const std::string& base_dir,
                                      const std::string& out_dir) {
    validate(config.device);
    validate(config.pump);
    validate(config.thermo);
    validate(config.chain);
    validate(config.detection);

    const bool want_spectrum = wants(config, "spectrum");
    const bool want_summary = wants(config, "summary");
    const bool want_sweep = wants(config, "sweep");
    const bool want_prediction = wants(config, "prediction");
    const bool want_fit = wants(config, "fit");
    if (!(want_spectrum || want_summary || want_sweep || want_prediction || want_fit)) {
        throw ConfigError({"outputs: at least one artifact must be requested"});
    }

    // Resolve fit inputs up front so a broken reference never leaves partial
    // artifacts behind.
    std::vector<std::string> resolved_signals;
    std::string resolved_shot;
    std::string resolved_dark;
    if (want_fit) {
        if (config.fit.signal_csv.empty() ||
            config.fit.powers_w.size() != config.fit.signal_csv.size()) {
            throw ConfigError({"fit.powers_w: must match fit.signal_csv in length"});
        }
        std::vector<std::string> missing;
        auto check = [&](const std::string& rel, const std::string& key) {
            std::string full = resolve_path(base_dir, rel);
            if (!std::filesystem::exists(full)) {
                missing.push_back(key + ": file not found: " + rel);
            }
            return full;
        };
        for (std::size_t i = 0; i < config.fit.signal_csv.size(); ++i) {
            resolved_signals.push_back(check(config.fit.signal_csv[i],
                                             "fit.signal_csv[" + std::to_string(i) + "]"));
        }
        resolved_shot = check(config.fit.shot_csv, "fit.shot_csv");
        resolved_dark = check(config.fit.dark_csv, "fit.dark_csv");
        if (!missing.empty()) throw ConfigError(std::move(missing));
    }

    std::filesystem::create_directories(out_dir);
    const auto out_path = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };
    std::vector<std::string> written;

    const double t = config.device.sagnac.splitter_transmission;

    // Shared spectral pipeline: per-direction Kerr spectra, Sagnac combine,
    // collection losses, detection.
    QuadratureSpectrum combined;
    QuadratureSpectrum normalized;
    CavitySolution sol_cw;
    CavitySolution sol_ccw;
    double theta_carrier = 0.0;
    std::size_t j_lock = 0;
    const std::vector<double> freqs =
        log_frequency_grid(config.grid.freq_min_hz, config.grid.freq_max_hz,
                           static_cast<std::size_t>(config.grid.freq_points));
    const std::vector<double> angles =
        angle_grid(static_cast<std::size_t>(config.grid.angle_points));
    if (want_spectrum || want_summary) {
        sol_cw = pick_stable(steady_state(config.device, config.pump, t), "cw");
        const QuadratureSpectrum s_cw =
            fluctuation_spectrum_parallel(config.device, config.pump, sol_cw, freqs, angles);
        QuadratureSpectrum s_ccw;
        if (t == 0.5) {
            // Balanced loop: both directions share the working point exactly.
            sol_ccw = sol_cw;
            s_ccw = s_cw;
        } else {
            sol_ccw = pick_stable(steady_state(config.device, config.pump, 1.0 - t), "ccw");
            s_ccw = fluctuation_spectrum_parallel(config.device, config.pump, sol_ccw, freqs,
                                                  angles);
        }
        combined = sagnac_output_spectrum(s_cw, s_ccw, config.device.sagnac);
        const QuadratureSpectrum after_chain =
            apply_loss(combined, config.chain.total_efficiency());
        // Carrier reference taken from the dominant (cw) arm; exact for the
        // balanced loop.
        theta_carrier = carrier_angle(sol_cw);
        const QuadratureSpectrum detected =
            detected_spectrum(after_chain, config.thermo, config.detection, theta_carrier);
        normalized = normalize_to_shot(detected, config.detection);

        double lock = std::fmod(config.homodyne_angle_rad, kPi);
        if (lock < 0.0) lock += kPi;
        j_lock = nearest_index(angles, lock);
    }

    if (want_spectrum) {
        write_file_atomic(out_path("spectrum.csv"), spectrum_to_csv(combined));
        written.push_back("spectrum.csv");

        ojson sj{{"config", config_echo(config)},
                 {"frequencies_hz", combined.frequencies_hz},
                 {"angles_rad", combined.angles_rad},
                 {"values_rel_shot", combined.values_rel_shot}};
        write_file_atomic(out_path("spectrum.json"), sj.dump(2) + "\n");
        written.push_back("spectrum.json");

        std::string det_csv = "freq_hz,rel_shot_db\n";
        for (std::size_t i = 0; i < normalized.n_freq(); ++i) {
            append_double(det_csv, normalized.frequencies_hz[i]);
            det_csv.push_back(',');
            append_double(det_csv, db_from_linear(normalized.at(i, j_lock)));
            det_csv.push_back('\n');
        }
        write_file_atomic(out_path("detected.csv"), det_csv);
        written.push_back("detected.csv");
    }

    if (want_sweep) {
        const auto rows =
            sweep(config.device, config.pump, config.pump_powers_w, freqs, angles, t);
        std::string csv = "power_w,freq_hz,s_min_rel_shot,s_max_rel_shot\n";
        for (const auto& r : rows) {
            append_double(csv, r.power_w);
            csv.push_back(',');
            append_double(csv, r.frequency_hz);
            csv.push_back(',');
            append_double(csv, r.s_min);
            csv.push_back(',');
            append_double(csv, r.s_max);
            csv.push_back('\n');
        }
        write_file_atomic(out_path("sweep.csv"), csv);
        written.push_back("sweep.csv");
    }

    if (want_prediction) {
        CryoInputs in;
        in.device = config.device;
        in.pump = config.pump;
        in.thermo = config.thermo;
        in.chain = config.chain;
        in.detection = config.detection;
        in.direction_power_fraction = t;
        in.calibrated = config.calibrated;
        const CryoPrediction p = cryogenic_prediction(in);
        ojson pj{{"frequency_hz", p.frequency_hz},
                 {"s_min_normalized", p.s_min_normalized},
                 {"squeezing_db", p.squeezing_db},
                 {"theta_min_rad", p.theta_min_rad},
                 {"thermo_rel_shot", p.thermo_rel_shot},
                 {"temperature_k", config.thermo.temperature_k}};
        write_file_atomic(out_path("prediction.json"), pj.dump(2) + "\n");
        written.push_back("prediction.json");
    }

    if (want_fit) {
        const EsaTrace shot = parse_trace_file(resolved_shot);
        const EsaTrace dark = parse_trace_file(resolved_dark);
        std::vector<KerrFitData> data;
        std::vector<NormalizedSpectrum> normalized_traces;
        for (std::size_t i = 0; i < resolved_signals.size(); ++i) {
            const EsaTrace sig = parse_trace_file(resolved_signals[i]);
            NormalizedSpectrum ns = normalize(sig, shot, dark);
            const std::string name = "normalized_" + std::to_string(i) + ".csv";
            write_file_atomic(out_path(name), normalized_to_csv(ns));
            written.push_back(name);
            data.push_back({config.fit.powers_w[i], ns});
            normalized_traces.push_back(std::move(ns));
        }

        // Low-frequency excess fit on the first trace; Kerr fit over the
        // shot-limited band across all traces jointly.
        const ExcessNoiseFit excess = fit_excess_noise(normalized_traces.front(), 1e6, 300e6);
        KerrFitSetup setup = default_kerr_fit_setup(config.device, config.detection);
        setup.direction_power_fraction = t;
        const FitResult kerr = fit_kerr_model(data, setup);

        ojson fj{{"excess_noise",
                  {{"amplitude_rel_shot_at_1mhz", excess.amplitude_rel_shot_at_1mhz},
                   {"floor_rel_shot", excess.floor_rel_shot},
                   {"residual_rms_db", excess.residual_rms_db},
                   {"n_points", excess.n_points},
                   {"covariance", excess.covariance}}},
                 {"kerr", ojson::parse(fit_result_to_json(kerr))}};
        write_file_atomic(out_path("fit.json"), fj.dump(2) + "\n");
        written.push_back("fit.json");
    }

    if (want_summary) {
        const auto bands = linewidth_from_q(config.device.waveguide.wavelength_nm,
                                            config.device.ring.loaded_q);
        const auto rates =
            split_decay_rates(bands.kappa_rad_per_s, config.device.ring.escape_efficiency);
        const auto iq = intrinsic_q_and_loss(
            config.device.ring.loaded_q, config.device.ring.escape_efficiency,
            config.device.waveguide.wavelength_nm, config.device.waveguide.group_index);
        const double g = kerr_rate(config.device.waveguide, config.device.ring);

        ojson dev{{"kappa_rad_per_s", bands.kappa_rad_per_s},
                  {"linewidth_hz", bands.linewidth_hz},
                  {"kappa_ext_rad_per_s", rates.kappa_ext},
                  {"kappa_int_rad_per_s", rates.kappa_int},
                  {"kerr_rate_rad_per_s", g},
                  {"intrinsic_q", iq.intrinsic_q},
                  {"propagation_loss_db_per_cm", iq.propagation_loss_db_per_cm},
                  {"free_spectral_range_hz",
                   free_spectral_range(config.device.ring, config.device.waveguide)},
                  {"loop_transmission", sagnac_loop_transmission(t)}};

        ojson summary{{"device", std::move(dev)}};
        if (g > 0.0) {
            const auto bt = bistability_threshold(config.device, config.pump.wavelength_nm);
            summary["bistability"] = ojson{
                {"critical_power_w", bt.critical_power_w},
                {"critical_detuning_rad_per_s", bt.critical_detuning_rad_per_s},
                {"critical_photon_number", bt.critical_photon_number}};
        }

        const auto branch_name = [](Branch b) {
            switch (b) {
                case Branch::lower: return "lower";
                case Branch::middle: return "middle";
                default: return "upper";
            }
        };
        summary["working_point"] =
            ojson{{"cw",
                   {{"photon_number", sol_cw.photon_number},
                    {"field_phase_rad", sol_cw.field_phase_rad},
                    {"effective_detuning_rad_per_s", sol_cw.effective_detuning_rad_per_s},
                    {"branch", branch_name(sol_cw.branch)},
                    {"stable", sol_cw.stable}}},
                  {"ccw",
                   {{"photon_number", sol_ccw.photon_number},
                    {"field_phase_rad", sol_ccw.field_phase_rad},
                    {"effective_detuning_rad_per_s", sol_ccw.effective_detuning_rad_per_s},
                    {"branch", branch_name(sol_ccw.branch)},
                    {"stable", sol_ccw.stable}}},
                  {"carrier_angle_rad", theta_carrier}};

        // Locked-quadrature metrics of the normalized detected trace.
        double band_min = std::numeric_limits<double>::infinity();
        double band_min_freq = 0.0;
        double crossing_hz = 0.0;
        bool crossed = false;
        for (std::size_t i = 0; i < normalized.n_freq(); ++i) {
            const double f = normalized.frequencies_hz[i];
            const double v = normalized.at(i, j_lock);
            if (f >= 500e6 && f <= 800e6 && v < band_min) {
                band_min = v;
                band_min_freq = f;
            }
            if (!crossed && v < 1.0) {
                crossing_hz = f;
                crossed = true;
            }
        }
        ojson det{{"homodyne_angle_rad", angles[j_lock]},
                  {"band_lo_hz", 500e6},
                  {"band_hi_hz", 800e6},
                  {"band_min_db", db_from_linear(band_min)},
                  {"band_min_frequency_hz", band_min_freq}};
        det["shot_crossing_hz"] = crossed ? ojson(crossing_hz) : ojson(nullptr);
        const std::size_t i1g = nearest_index(normalized.frequencies_hz, 1e9);
        det["value_near_1ghz_db"] = db_from_linear(normalized.at(i1g, j_lock));
        det["frequency_near_1ghz_hz"] = normalized.frequencies_hz[i1g];
        summary["detected"] = std::move(det);
        summary["pump"] = ojson{{"power_on_chip_w", config.pump.power_on_chip_w},
                                {"detuning_rad_per_s", config.pump.detuning_rad_per_s},
                                {"wavelength_nm", config.pump.wavelength_nm}};
        summary["outputs"] = config.outputs;

        write_file_atomic(out_path("summary.json"), summary.dump(2) + "\n");
        written.push_back("summary.json");
    }

    return written;
}

}  // namespace sqz
