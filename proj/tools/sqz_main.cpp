#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sqz/constants.hpp"
#include "sqz/explore.hpp"
#include "sqz/fit.hpp"
#include "sqz/noise.hpp"
#include "sqz/scenario.hpp"
#include "sqz/spectrum.hpp"
#include "sqz/trace.hpp"

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw sqz::ConfigError({"config: cannot read file " + path});
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

sqz::ScenarioConfig load_config(const std::string& config_path) {
    if (config_path.empty()) throw sqz::ConfigError({"--config: a config file is required"});
    return sqz::parse_scenario_config(read_file(config_path));
}

std::string config_base_dir(const std::string& config_path) {
    const std::string base = fs::path(config_path).parent_path().string();
    return base.empty() ? std::string(".") : base;
}

void report_written(const std::string& out_dir, const std::vector<std::string>& files) {
    for (const auto& f : files) {
        std::cout << "wrote " << (fs::path(out_dir) / f).string() << "\n";
    }
}

// Exit codes: 0 success, 1 model or data errors, 2 config and usage errors.
template <typename Body>
int guarded(Body&& body) {
    try {
        return body();
    } catch (const sqz::ConfigError& e) {
        ojson err{{"error", "config"}, {"violations", e.violations()}};
        std::cerr << err.dump(2) << std::endl;
        return 2;
    } catch (const std::invalid_argument& e) {
        ojson err{{"error", "config"}, {"violations", {std::string(e.what())}}};
        std::cerr << err.dump(2) << std::endl;
        return 2;
    } catch (const std::exception& e) {
        ojson err{{"error", "runtime"}, {"message", e.what()}};
        std::cerr << err.dump(2) << std::endl;
        return 1;
    }
}

sqz::DesignTemplate named_template(const std::string& name) {
    try {
        return sqz::reference_template(name);
    } catch (const std::invalid_argument& e) {
        throw sqz::ConfigError({e.what()});
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kerr ring squeezing simulator and measurement toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "Scenario config (JSON)");
    app.add_option("--out-dir", out_dir, "Directory for artifact files")
        ->capture_default_str();
    app.add_option("--seed", seed, "RNG seed for synthetic data")->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "Run a scenario and write its artifacts");

    auto* sweep_cmd =
        app.add_subcommand("sweep", "Squeezing vs pump power for the design templates");
    std::vector<std::string> template_names;
    double power_min = 1e-3;
    double power_max = 1.0;
    std::size_t power_points = 41;
    sweep_cmd->add_option("--template", template_names,
                          "Template name (repeatable; default: all)");
    sweep_cmd->add_option("--power-min", power_min, "Lowest pump power, W")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sweep_cmd->add_option("--power-max", power_max, "Highest pump power, W")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sweep_cmd->add_option("--power-points", power_points, "Grid size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    auto* search_cmd =
        app.add_subcommand("search", "Minimum pump power reaching a target squeezing");
    std::string search_template;
    double target_db = 0.0;
    search_cmd->add_option("--template", search_template, "Design template name")
        ->required();
    search_cmd
        ->add_option("--target-db", target_db,
                     "Target on-chip squeezing, dB relative to shot (negative)")
        ->required();

    auto* fit_cmd = app.add_subcommand("fit", "Fit the Kerr model to measured traces");
    std::vector<std::string> fit_signals;
    std::vector<double> fit_powers;
    std::string fit_shot;
    std::string fit_dark;
    fit_cmd->add_option("--signal", fit_signals, "Signal trace file (repeatable)")
        ->required();
    fit_cmd->add_option("--power-w", fit_powers, "On-chip pump power per signal trace, W")
        ->required();
    fit_cmd->add_option("--shot", fit_shot, "Shot-noise trace file")->required();
    fit_cmd->add_option("--dark", fit_dark, "Dark-noise trace file")->required();

    auto* norm_cmd =
        app.add_subcommand("normalize", "Shot-normalize a (signal, shot, dark) triple");
    std::string norm_signal;
    std::string norm_shot;
    std::string norm_dark;
    norm_cmd->add_option("--signal", norm_signal, "Signal trace file")->required();
    norm_cmd->add_option("--shot", norm_shot, "Shot-noise trace file")->required();
    norm_cmd->add_option("--dark", norm_dark, "Dark-noise trace file")->required();

    auto* cryo_cmd = app.add_subcommand(
        "predict-cryo", "Cryogenic squeezing prediction from a calibrated scenario");

    auto* gen_cmd =
        app.add_subcommand("gen-traces", "Generate synthetic analyzer traces from a scenario");
    double gen_noise_db = 0.0;
    bool gen_envelope = false;
    double gen_power_w = -1.0;
    std::string gen_prefix;
    gen_cmd->add_option("--noise-db", gen_noise_db, "Gaussian sigma added to the signal, dB")
        ->capture_default_str();
    gen_cmd->add_flag("--envelope", gen_envelope,
                      "Record the per-frequency minimum quadrature instead of the locked angle");
    gen_cmd->add_option("--power-w", gen_power_w,
                        "Override the config's on-chip pump power, W");
    gen_cmd->add_option("--prefix", gen_prefix, "Prefix for the emitted file names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        ojson err{{"error", "usage"}, {"message", e.what()}};
        std::cerr << err.dump(2) << std::endl;
        return 2;
    }

    if (sim->parsed()) {
        return guarded([&] {
            const auto cfg = load_config(config_path);
            const auto files = sqz::run_scenario(cfg, config_base_dir(config_path), out_dir);
            report_written(out_dir, files);
            return 0;
        });
    }

    if (sweep_cmd->parsed()) {
        return guarded([&] {
            std::vector<sqz::DesignTemplate> templates;
            if (template_names.empty()) {
                templates = sqz::reference_templates();
            } else {
                for (const auto& n : template_names) templates.push_back(named_template(n));
            }
            if (!(power_max > power_min)) {
                throw sqz::ConfigError({"--power-max: must exceed --power-min"});
            }
            const auto powers = sqz::log_frequency_grid(power_min, power_max, power_points);
            const auto result = sqz::sweep_power_q(templates, powers);

            std::string csv =
                "template,intrinsic_q,power_w,detuning_rad_per_s,photon_number,on_chip_db,"
                "detected_db,converged\n";
            ojson summary = ojson::array();
            for (const auto& t : result.templates) {
                for (const auto& p : t.points) {
                    csv += t.name + "," + std::to_string(t.intrinsic_q);
                    char buf[160];
                    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                                  p.power_w, p.detuning_rad_per_s, p.photon_number,
                                  p.on_chip_db, p.detected_db, p.converged ? 1 : 0);
                    csv += buf;
                }
                summary.push_back(ojson{{"template", t.name},
                                        {"intrinsic_q", t.intrinsic_q},
                                        {"escape_efficiency", t.escape_efficiency},
                                        {"asymptote_db", t.asymptote_db},
                                        {"threshold_power_w", t.threshold_power_w},
                                        {"power_within_1db_w", t.power_within_1db_w}});
            }
            fs::create_directories(out_dir);
            sqz::write_file_atomic((fs::path(out_dir) / "qsweep.csv").string(), csv);
            sqz::write_file_atomic((fs::path(out_dir) / "qsweep.dat").string(),
                                   sqz::emit_plot_data(result, "sweep"));
            sqz::write_file_atomic((fs::path(out_dir) / "qsweep_summary.json").string(),
                                   summary.dump(2) + "\n");
            report_written(out_dir, {"qsweep.csv", "qsweep.dat", "qsweep_summary.json"});
            std::cout << summary.dump(2) << std::endl;
            return 0;
        });
    }

    if (search_cmd->parsed()) {
        return guarded([&] {
            const auto tpl = named_template(search_template);
            const double power = sqz::design_search(tpl, target_db);
            ojson out{{"template", tpl.name},
                      {"intrinsic_q", tpl.intrinsic_q},
                      {"escape_efficiency", tpl.device.ring.escape_efficiency},
                      {"target_db", target_db},
                      {"power_w", power}};
            fs::create_directories(out_dir);
            sqz::write_file_atomic((fs::path(out_dir) / "search.json").string(),
                                   out.dump(2) + "\n");
            report_written(out_dir, {"search.json"});
            std::cout << out.dump(2) << std::endl;
            return 0;
        });
    }

    if (fit_cmd->parsed()) {
        return guarded([&] {
            if (fit_powers.size() != fit_signals.size()) {
                throw sqz::ConfigError({"--power-w: must be given once per --signal"});
            }
            auto cfg = load_config(config_path);
            cfg.outputs = {"fit"};
            cfg.fit.signal_csv = fit_signals;
            cfg.fit.powers_w = fit_powers;
            cfg.fit.shot_csv = fit_shot;
            cfg.fit.dark_csv = fit_dark;
            // Paths given on the command line resolve against the working
            // directory, not the config location.
            const auto files = sqz::run_scenario(cfg, ".", out_dir);
            report_written(out_dir, files);
            std::cout << read_file((fs::path(out_dir) / "fit.json").string());
            return 0;
        });
    }

    if (norm_cmd->parsed()) {
        return guarded([&] {
            const auto signal = sqz::parse_trace_file(norm_signal);
            const auto shot = sqz::parse_trace_file(norm_shot);
            const auto dark = sqz::parse_trace_file(norm_dark);
            const auto ns = sqz::normalize(signal, shot, dark);
            fs::create_directories(out_dir);
            sqz::write_file_atomic((fs::path(out_dir) / "normalized.csv").string(),
                                   sqz::normalized_to_csv(ns));
            sqz::write_file_atomic((fs::path(out_dir) / "normalized.dat").string(),
                                   sqz::emit_plot_data(ns, "normalized"));
            report_written(out_dir, {"normalized.csv", "normalized.dat"});
            return 0;
        });
    }

    if (cryo_cmd->parsed()) {
        return guarded([&] {
            auto cfg = load_config(config_path);
            if (!cfg.calibrated) {
                throw sqz::ConfigError(
                    {"calibrated: prediction output requires a calibrated parameter set"});
            }
            cfg.outputs = {"prediction"};
            const auto files = sqz::run_scenario(cfg, config_base_dir(config_path), out_dir);
            report_written(out_dir, files);
            std::cout << read_file((fs::path(out_dir) / "prediction.json").string());
            return 0;
        });
    }

    if (gen_cmd->parsed()) {
        return guarded([&] {
            auto cfg = load_config(config_path);
            if (gen_power_w >= 0.0) cfg.pump.power_on_chip_w = gen_power_w;
            const auto freqs = sqz::log_frequency_grid(
                cfg.grid.freq_min_hz, cfg.grid.freq_max_hz,
                static_cast<std::size_t>(cfg.grid.freq_points));
            const double eta_meas = cfg.chain.total_efficiency() *
                                    sqz::homodyne_efficiency(cfg.detection);
            std::optional<double> lock;
            if (!gen_envelope) lock = cfg.homodyne_angle_rad;
            const auto set = sqz::make_synthetic_traces(
                cfg.device, cfg.pump, cfg.thermo, cfg.detection, eta_meas,
                cfg.device.sagnac.splitter_transmission, freqs, lock, gen_noise_db, seed);
            fs::create_directories(out_dir);
            const std::vector<std::pair<std::string, const sqz::EsaTrace*>> parts = {
                {gen_prefix + "signal.csv", &set.signal},
                {gen_prefix + "shot.csv", &set.shot},
                {gen_prefix + "dark.csv", &set.dark}};
            std::vector<std::string> names;
            for (const auto& [name, trace] : parts) {
                sqz::write_file_atomic((fs::path(out_dir) / name).string(),
                                       sqz::serialize_trace(*trace));
                names.push_back(name);
            }
            report_written(out_dir, names);
            return 0;
        });
    }

    return 0;
}
