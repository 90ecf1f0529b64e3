#ifndef SQZ_NOISE_HPP
#define SQZ_NOISE_HPP

#include <optional>
#include <string>
#include <vector>

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"
#include "sqz/spectrum.hpp"

namespace sqz {

struct NoiseStage {
    std::string label;        // e.g. "collection_path", "homodyne_visibility"
    double efficiency = 1.0;  // power transmission in (0, 1]
};

struct NoiseChain {
    std::vector<NoiseStage> stages;  // ordered, applied as one lumped loss

    double total_efficiency() const;
};

struct ThermoNoiseModel {
    double amplitude_rel_shot_at_1mhz = 0.0;    // noise power relative to shot at 1 MHz
    std::optional<double> corner_frequency_hz;  // flattening corner; none = pure power law
    double temperature_k = 295.0;               // operating temperature
    double reference_temperature_k = 295.0;     // temperature the amplitude was taken at
    double dndt_ratio_vs_reference = 1.0;       // thermo-optic coefficient ratio r(T)
};

struct DetectionSpec {
    double detector_bandwidth_hz = 800e6;       // single-pole -3 dB frequency
    double dark_noise_clearance_db = 18.0;      // shot-to-dark ratio at low frequency
    double homodyne_visibility = 1.0;           // fringe visibility V
    double detector_quantum_efficiency = 1.0;   // eta_qe
};

void validate(const NoiseChain& chain);
void validate(const ThermoNoiseModel& model);
void validate(const DetectionSpec& detection);

// Combine the two Sagnac directions on the splitter and add the
// contrast-suppressed common-mode classical noise. Grids must match.
QuadratureSpectrum sagnac_output_spectrum(const QuadratureSpectrum& s_cw,
                                          const QuadratureSpectrum& s_ccw,
                                          const SagnacSpec& sagnac);

// Beam-splitter loss map S' = eta S + (1 - eta); exact fixed point at S = 1.
double apply_loss(double s_rel_shot, double efficiency);
QuadratureSpectrum apply_loss(const QuadratureSpectrum& spectrum, double efficiency);

// Exact inverse of apply_loss; rejects values at or below the loss floor 1 - eta.
double infer_loss_corrected(double measured_rel_shot, double efficiency);

// Thermorefractive excess noise relative to shot:
//   N(f) = a (T/T_ref)^2 r^2 (1 MHz)^2 / (f^2 + f_c^2),
// a pure f^-2 law when no corner frequency is set.
double thermo_psd_at(const ThermoNoiseModel& model, double frequency_hz);
std::vector<double> thermo_psd(const ThermoNoiseModel& model,
                               const std::vector<double>& frequencies_hz);

// Detector response pieces.
double homodyne_efficiency(const DetectionSpec& detection);            // V^2 eta_qe
double detector_rolloff(const DetectionSpec& detection, double f_hz);  // |H(f)|^2
double dark_noise_floor(const DetectionSpec& detection);               // 10^(-clearance/10)
double shot_reference(const DetectionSpec& detection, double f_hz);    // dark + |H|^2

// What the analyzer records, relative to ideal low-frequency shot noise:
//   R = dark + |H|^2 (eta_h S + (1 - eta_h) + N_th sin^2(theta - theta_carrier)).
QuadratureSpectrum detected_spectrum(const QuadratureSpectrum& spectrum,
                                     const ThermoNoiseModel& thermo,
                                     const DetectionSpec& detection,
                                     double carrier_angle_rad);

// Divides a detected spectrum by the recorded shot level at each frequency,
// mirroring the trace-side (signal / shot) normalization.
QuadratureSpectrum normalize_to_shot(const QuadratureSpectrum& detected,
                                     const DetectionSpec& detection);

// Quadrature angle of the output carrier (the amplitude direction), from
// input-output a_out = sqrt(kappa_ext) alpha - a_in; folded into [0, pi).
// Pure phase noise on the carrier is invisible at this angle.
double carrier_angle(const CavitySolution& solution);

struct CryoPrediction {
    double frequency_hz = 10e6;     // evaluation sideband
    double s_min_normalized = 1.0;  // detected min over theta, relative to recorded shot
    double squeezing_db = 0.0;      // 10 log10(s_min_normalized)
    double theta_min_rad = 0.0;     // quadrature angle of the minimum
    double thermo_rel_shot = 0.0;   // excess noise at the evaluation frequency
};

struct CryoInputs {
    DeviceSpec device;
    PumpSpec pump;
    ThermoNoiseModel thermo;  // at the predicted operating temperature
    NoiseChain chain;
    DetectionSpec detection;
    double direction_power_fraction = 0.5;
    bool calibrated = false;  // parameters traceable to a measurement fit
};

// Detected minimum-noise quadrature at 10 MHz through the full Sagnac, loss,
// thermo and detector chain. Requires a calibrated parameter set.
CryoPrediction cryogenic_prediction(const CryoInputs& in);

}  // namespace sqz

#endif
