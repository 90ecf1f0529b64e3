#ifndef SQZ_FIT_HPP
#define SQZ_FIT_HPP

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"
#include "sqz/noise.hpp"
#include "sqz/trace.hpp"

namespace sqz {

// Weighted least squares of the low-frequency excess noise,
//   N(f) = a (1 MHz / f)^2 + b in linear power relative to shot.
struct ExcessNoiseFit {
    double amplitude_rel_shot_at_1mhz = 0.0;  // a
    double floor_rel_shot = 0.0;              // b
    std::array<double, 4> covariance{};       // row-major 2x2, order (a, b)
    double residual_rms_db = 0.0;
    std::size_t n_points = 0;
};

ExcessNoiseFit fit_excess_noise(const NormalizedSpectrum& spectrum,
                                double band_lo_hz, double band_hi_hz);

struct FitParameter {
    std::string name;
    double value = 0.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    bool fixed = false;
    bool at_lower_bound = false;  // set by the fitter
    bool at_upper_bound = false;
};

struct FitResult {
    std::vector<FitParameter> parameters;  // all model parameters, fitted values
    std::vector<std::string> free_names;   // covariance row/column order
    std::vector<double> covariance;        // row-major over free parameters
    double residual_rms_db = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Thrown when damped least squares fails to converge; carries the best point
// visited so the caller can inspect how far the fit got.
class FitDivergence : public std::runtime_error {
  public:
    FitDivergence(const std::string& message, FitResult best_so_far)
        : std::runtime_error(message), best_(std::move(best_so_far)) {}
    const FitResult& best() const { return best_; }

  private:
    FitResult best_;
};

struct KerrFitData {
    double power_on_chip_w = 0.0;
    NormalizedSpectrum spectrum;
};

// Fixed priors plus the four model parameters. measurement_efficiency lumps
// every loss from the chip to the recorded photocurrent (collection path,
// homodyne visibility, quantum efficiency); the DetectionSpec here only
// contributes the dark floor and the roll-off shape.
struct KerrFitSetup {
    DeviceSpec device;        // geometry prior: kappa and escape efficiency
    DetectionSpec detection;  // dark-noise clearance; bandwidth starting point
    double direction_power_fraction = 0.5;
    double band_lo_hz = 500e6;  // thermo noise negligible above here
    double band_hi_hz = 2e9;
    FitParameter detuning{"detuning_rad_per_s", 0.0};
    FitParameter kerr_rate{"kerr_rate_rad_per_s", 0.0};
    FitParameter measurement_efficiency{"measurement_efficiency", 0.5, 1e-3, 1.0};
    FitParameter detector_bandwidth{"detector_bandwidth_hz", 800e6, 1e6,
                                    std::numeric_limits<double>::infinity(), true};
    int max_iterations = 100;
};

// Sensible bounds and starting values for the standard fit (detuning and
// Kerr rate free, detector bandwidth held at the detection prior).
KerrFitSetup default_kerr_fit_setup(const DeviceSpec& device,
                                    const DetectionSpec& detection);

// Damped least squares on dB residuals of the per-frequency minimum
// quadrature noise, restricted to the fit band; joint over all powers.
FitResult fit_kerr_model(const std::vector<KerrFitData>& data,
                         const KerrFitSetup& setup);

// The model curve the Kerr fit matches: recorded minimum-over-theta noise
// relative to recorded shot, in dB, at one frequency.
double kerr_model_min_db(const KerrFitSetup& setup, double detuning_rad_per_s,
                         double kerr_rate, double measurement_efficiency,
                         double detector_bandwidth_hz, double power_on_chip_w,
                         double frequency_hz);

std::string fit_result_to_json(const FitResult& result);

// Deterministic synthetic-data generators for self-consistency tests.
NormalizedSpectrum make_synthetic_excess_spectrum(
    double amplitude_rel_shot_at_1mhz, double floor_rel_shot,
    const std::vector<double>& frequencies_hz, double relative_noise,
    std::uint64_t seed);

struct SyntheticTraceSet {
    EsaTrace signal;
    EsaTrace shot;
    EsaTrace dark;
};

// ESA triple whose normalize() reproduces the detected model spectrum plus
// Gaussian dB noise on the signal. With a lock angle the signal is recorded
// at that fixed quadrature; without one it is the per-bin minimum over theta.
SyntheticTraceSet make_synthetic_traces(const DeviceSpec& device, const PumpSpec& pump,
                                        const ThermoNoiseModel& thermo,
                                        const DetectionSpec& detection,
                                        double measurement_efficiency,
                                        double direction_power_fraction,
                                        const std::vector<double>& frequencies_hz,
                                        std::optional<double> lock_angle_rad,
                                        double noise_db_sigma, std::uint64_t seed);

}  // namespace sqz

#endif
