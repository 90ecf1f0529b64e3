#ifndef SQZ_SCENARIO_HPP
#define SQZ_SCENARIO_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"
#include "sqz/noise.hpp"

namespace sqz {

// All schema problems found in one pass, not first-error-only.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

  private:
    std::vector<std::string> violations_;
};

struct GridSpec {
    double freq_min_hz = 1e6;
    double freq_max_hz = 5e9;
    int freq_points = 400;
    int angle_points = 181;
};

// Trace files consumed by the "fit" artifact; paths are resolved relative to
// the config file location.
struct FitInputs {
    std::vector<std::string> signal_csv;
    std::vector<double> powers_w;  // on-chip pump power per signal trace
    std::string shot_csv;
    std::string dark_csv;
};

struct ScenarioConfig {
    DeviceSpec device;
    PumpSpec pump;
    std::vector<double> pump_powers_w;  // for the "sweep" artifact
    ThermoNoiseModel thermo;
    NoiseChain chain;
    DetectionSpec detection;
    double homodyne_angle_rad = 0.0;  // recording quadrature for "spectrum"
    GridSpec grid;
    bool calibrated = false;  // parameters traceable to a measurement fit
    std::vector<std::string> outputs;  // spectrum | summary | sweep | prediction | fit
    FitInputs fit;
};

// Strict parse: unknown keys rejected by name, every violation reported.
ScenarioConfig parse_scenario_config(const std::string& json_text);

// Deterministic re-serialization (provenance echo in artifacts).
std::string scenario_config_to_json(const ScenarioConfig& config);

// Execute a parsed scenario, writing the requested artifacts into out_dir
// (created if needed; writes are temp-file-then-rename). base_dir anchors
// relative trace paths. Returns the artifact file names written.
std::vector<std::string> run_scenario(const ScenarioConfig& config,
                                      const std::string& base_dir,
                                      const std::string& out_dir);

// Atomic file write used for every artifact.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace sqz

#endif
