#include "sqz/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sqz/constants.hpp"

namespace sqz {

namespace {

void check_grids_match(const QuadratureSpectrum& a, const QuadratureSpectrum& b) {
    if (a.frequencies_hz != b.frequencies_hz || a.angles_rad != b.angles_rad) {
        throw std::invalid_argument("sagnac_output_spectrum: grid mismatch");
    }
}

double require_efficiency(double efficiency, const char* who) {
    if (!(efficiency > 0.0) || efficiency > 1.0 || !std::isfinite(efficiency)) {
        throw std::invalid_argument(std::string(who) +
                                    ": efficiency must be in (0, 1]");
    }
    return efficiency;
}

}  // namespace

double NoiseChain::total_efficiency() const {
    double product = 1.0;
    for (const auto& stage : stages) product *= stage.efficiency;
    return product;
}

void validate(const NoiseChain& chain) {
    for (const auto& stage : chain.stages) {
        if (!(stage.efficiency > 0.0) || stage.efficiency > 1.0 ||
            !std::isfinite(stage.efficiency)) {
            throw std::invalid_argument("NoiseChain: stage \"" + stage.label +
                                        "\" efficiency must be in (0, 1]");
        }
    }
}

void validate(const ThermoNoiseModel& model) {
    if (!(model.amplitude_rel_shot_at_1mhz >= 0.0) ||
        !std::isfinite(model.amplitude_rel_shot_at_1mhz)) {
        throw std::invalid_argument(
            "ThermoNoiseModel: amplitude_rel_shot_at_1mhz must be >= 0");
    }
    if (!(model.temperature_k > 0.0)) {
        throw std::invalid_argument("ThermoNoiseModel: temperature_k must be > 0");
    }
    if (!(model.reference_temperature_k > 0.0)) {
        throw std::invalid_argument(
            "ThermoNoiseModel: reference_temperature_k must be > 0");
    }
    if (!(model.dndt_ratio_vs_reference > 0.0)) {
        throw std::invalid_argument(
            "ThermoNoiseModel: dndt_ratio_vs_reference must be > 0");
    }
    if (model.corner_frequency_hz && !(*model.corner_frequency_hz > 0.0)) {
        throw std::invalid_argument("ThermoNoiseModel: corner_frequency_hz must be > 0");
    }
}

void validate(const DetectionSpec& detection) {
    if (!(detection.detector_bandwidth_hz > 0.0)) {
        throw std::invalid_argument("DetectionSpec: detector_bandwidth_hz must be > 0");
    }
    if (!std::isfinite(detection.dark_noise_clearance_db)) {
        throw std::invalid_argument(
            "DetectionSpec: dark_noise_clearance_db must be finite");
    }
    if (!(detection.homodyne_visibility > 0.0) || detection.homodyne_visibility > 1.0) {
        throw std::invalid_argument(
            "DetectionSpec: homodyne_visibility must be in (0, 1]");
    }
    if (!(detection.detector_quantum_efficiency > 0.0) ||
        detection.detector_quantum_efficiency > 1.0) {
        throw std::invalid_argument(
            "DetectionSpec: detector_quantum_efficiency must be in (0, 1]");
    }
}

QuadratureSpectrum sagnac_output_spectrum(const QuadratureSpectrum& s_cw,
                                          const QuadratureSpectrum& s_ccw,
                                          const SagnacSpec& sagnac) {
    validate(sagnac);
    check_grids_match(s_cw, s_ccw);
    const double t = sagnac.splitter_transmission;
    const double suppression = std::pow(10.0, -sagnac.contrast_db / 10.0);

    QuadratureSpectrum out;
    out.frequencies_hz = s_cw.frequencies_hz;
    out.angles_rad = s_cw.angles_rad;
    out.values_rel_shot.resize(s_cw.values_rel_shot.size());
    const std::size_t n_angle = out.n_angle();
    for (std::size_t i = 0; i < out.n_freq(); ++i) {
        const double residual =
            sagnac.common_mode_noise_rel_shot.eval(out.frequencies_hz[i]) * suppression;
        for (std::size_t j = 0; j < n_angle; ++j) {
            const std::size_t k = i * n_angle + j;
            out.values_rel_shot[k] =
                t * s_cw.values_rel_shot[k] + (1.0 - t) * s_ccw.values_rel_shot[k] +
                residual;
        }
    }
    return out;
}

double apply_loss(double s_rel_shot, double efficiency) {
    require_efficiency(efficiency, "apply_loss");
    return efficiency * s_rel_shot + (1.0 - efficiency);
}

QuadratureSpectrum apply_loss(const QuadratureSpectrum& spectrum, double efficiency) {
    require_efficiency(efficiency, "apply_loss");
    QuadratureSpectrum out = spectrum;
    for (double& v : out.values_rel_shot) {
        v = efficiency * v + (1.0 - efficiency);
    }
    return out;
}

double infer_loss_corrected(double measured_rel_shot, double efficiency) {
    require_efficiency(efficiency, "infer_loss_corrected");
    const double floor = 1.0 - efficiency;
    if (!(measured_rel_shot > floor)) {
        throw std::runtime_error("measurement below loss floor: unphysical");
    }
    return (measured_rel_shot - floor) / efficiency;
}

double thermo_psd_at(const ThermoNoiseModel& model, double frequency_hz) {
    validate(model);
    const double corner = model.corner_frequency_hz.value_or(0.0);
    if (frequency_hz == 0.0 && corner == 0.0) {
        throw std::invalid_argument(
            "thermo_psd: zero frequency diverges without a corner frequency");
    }
    if (frequency_hz < 0.0 || !std::isfinite(frequency_hz)) {
        throw std::invalid_argument("thermo_psd: frequency must be >= 0 and finite");
    }
    const double t_ratio = model.temperature_k / model.reference_temperature_k;
    const double scale = model.amplitude_rel_shot_at_1mhz * t_ratio * t_ratio *
                         model.dndt_ratio_vs_reference * model.dndt_ratio_vs_reference;
    return scale * 1e12 / (frequency_hz * frequency_hz + corner * corner);
}

std::vector<double> thermo_psd(const ThermoNoiseModel& model,
                               const std::vector<double>& frequencies_hz) {
    std::vector<double> out;
    out.reserve(frequencies_hz.size());
    for (double f : frequencies_hz) {
        out.push_back(thermo_psd_at(model, f));
    }
    return out;
}

double homodyne_efficiency(const DetectionSpec& detection) {
    validate(detection);
    return detection.homodyne_visibility * detection.homodyne_visibility *
           detection.detector_quantum_efficiency;
}

double detector_rolloff(const DetectionSpec& detection, double f_hz) {
    const double x = f_hz / detection.detector_bandwidth_hz;
    return 1.0 / (1.0 + x * x);
}

double dark_noise_floor(const DetectionSpec& detection) {
    return std::pow(10.0, -detection.dark_noise_clearance_db / 10.0);
}

double shot_reference(const DetectionSpec& detection, double f_hz) {
    return dark_noise_floor(detection) + detector_rolloff(detection, f_hz);
}

QuadratureSpectrum detected_spectrum(const QuadratureSpectrum& spectrum,
                                     const ThermoNoiseModel& thermo,
                                     const DetectionSpec& detection,
                                     double carrier_angle_rad) {
    validate(thermo);
    validate(detection);
    const double eta_h = homodyne_efficiency(detection);
    const double dark = dark_noise_floor(detection);

    QuadratureSpectrum out;
    out.frequencies_hz = spectrum.frequencies_hz;
    out.angles_rad = spectrum.angles_rad;
    out.values_rel_shot.resize(spectrum.values_rel_shot.size());
    const std::size_t n_angle = out.n_angle();
    for (std::size_t i = 0; i < out.n_freq(); ++i) {
        const double f = out.frequencies_hz[i];
        const double rolloff = detector_rolloff(detection, f);
        const double excess = thermo_psd_at(thermo, f);
        for (std::size_t j = 0; j < n_angle; ++j) {
            const double sine = std::sin(out.angles_rad[j] - carrier_angle_rad);
            const double quantum =
                eta_h * spectrum.values_rel_shot[i * n_angle + j] + (1.0 - eta_h);
            out.values_rel_shot[i * n_angle + j] =
                dark + rolloff * (quantum + excess * sine * sine);
        }
    }
    return out;
}

QuadratureSpectrum normalize_to_shot(const QuadratureSpectrum& detected,
                                     const DetectionSpec& detection) {
    validate(detection);
    QuadratureSpectrum out = detected;
    const std::size_t n_angle = out.n_angle();
    for (std::size_t i = 0; i < out.n_freq(); ++i) {
        const double shot = shot_reference(detection, out.frequencies_hz[i]);
        for (std::size_t j = 0; j < n_angle; ++j) {
            out.values_rel_shot[i * n_angle + j] /= shot;
        }
    }
    return out;
}

double carrier_angle(const CavitySolution& solution) {
    const double amplitude = std::sqrt(solution.photon_number);
    const double out_re = std::sqrt(solution.kappa_ext) * amplitude *
                              std::cos(solution.field_phase_rad) -
                          std::sqrt(solution.drive_photon_rate / solution.kappa_ext);
    const double out_im =
        std::sqrt(solution.kappa_ext) * amplitude * std::sin(solution.field_phase_rad);
    double angle = std::atan2(out_im, out_re);
    angle = std::fmod(angle, kPi);
    if (angle < 0.0) angle += kPi;
    return angle;
}

CryoPrediction cryogenic_prediction(const CryoInputs& in) {
    if (!in.calibrated) {
        throw std::runtime_error("cryogenic_prediction: uncalibrated model");
    }
    validate(in.device);
    validate(in.pump);
    validate(in.thermo);
    validate(in.detection);
    validate(in.chain);

    const auto solutions = steady_state(in.device, in.pump, in.direction_power_fraction);
    const CavitySolution* chosen = nullptr;
    for (const auto& s : solutions) {
        if (s.stable) {
            chosen = &s;
            break;
        }
    }
    if (chosen == nullptr) {
        throw std::runtime_error("cryogenic_prediction: no stable branch");
    }

    constexpr double kEvalFrequencyHz = 10e6;
    const LinearizedCavity lc = linearize(*chosen);
    const double omega = 2.0 * kPi * kEvalFrequencyHz;
    const double theta_c = carrier_angle(*chosen);
    const double suppression = std::pow(10.0, -in.device.sagnac.contrast_db / 10.0);
    const double common_mode =
        in.device.sagnac.common_mode_noise_rel_shot.eval(kEvalFrequencyHz) * suppression;
    const double eta_chain = in.chain.total_efficiency();
    const double eta_h = homodyne_efficiency(in.detection);
    const double dark = dark_noise_floor(in.detection);
    const double rolloff = detector_rolloff(in.detection, kEvalFrequencyHz);
    const double excess = thermo_psd_at(in.thermo, kEvalFrequencyHz);
    const double shot = dark + rolloff;

    // The detected noise power stays an exact sinusoid in 2 theta, so three
    // angle evaluations determine the minimum analytically.
    const double probes[3] = {0.0, 0.25 * kPi, 0.5 * kPi};
    double recorded[3];
    for (int k = 0; k < 3; ++k) {
        // Both directions share one working point, so the Sagnac combine
        // returns the single-arm spectrum plus the suppressed common mode.
        double s = spectrum_point(lc, omega, probes[k]) + common_mode;
        s = eta_chain * s + (1.0 - eta_chain);
        const double sine = std::sin(probes[k] - theta_c);
        const double quantum = eta_h * s + (1.0 - eta_h);
        recorded[k] = (dark + rolloff * (quantum + excess * sine * sine)) / shot;
    }
    const double mean = 0.5 * (recorded[0] + recorded[2]);
    const double cos_coeff = 0.5 * (recorded[0] - recorded[2]);
    const double sin_coeff = recorded[1] - mean;
    const double amp = std::hypot(cos_coeff, sin_coeff);

    CryoPrediction out;
    out.frequency_hz = kEvalFrequencyHz;
    out.s_min_normalized = mean - amp;
    out.squeezing_db = db_from_linear(out.s_min_normalized);
    double theta_min = 0.5 * std::atan2(-sin_coeff, -cos_coeff);
    if (theta_min < 0.0) theta_min += kPi;
    out.theta_min_rad = theta_min;
    out.thermo_rel_shot = excess;
    return out;
}

}  // namespace sqz
