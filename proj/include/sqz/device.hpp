#ifndef SQZ_DEVICE_HPP
#define SQZ_DEVICE_HPP

#include <optional>
#include <string>
#include <vector>

namespace sqz {

// Waveguide cross-section and material description. The propagation loss is
// descriptive metadata: coupling budgets are always derived from the ring's
// Q factors, never from this field.
struct WaveguideSpec {
    double wavelength_nm = 1550.0;          // pump wavelength
    double group_index = 1.88;              // n_g, measurable via the FSR
    double nonlinear_index_m2_per_w = 2.4e-19;  // Kerr coefficient n2; 0 = linear medium
    double effective_area_um2 = 1.0;        // modal area A_eff
    std::optional<double> propagation_loss_db_per_cm;  // informative only
};

// Ring resonator coupling description. Exactly one of loaded_q / intrinsic_q
// is given in configs; the constructor helpers fill in the other.
struct RingSpec {
    double radius_um = 30.0;
    double escape_efficiency = 0.77;        // kappa_ext / kappa, in (0,1]
    double loaded_q = 238000.0;             // Q_L
};

// Common-mode classical noise entering both Sagnac directions, relative to
// shot noise. Either a 1/f^exponent power law referenced at 1 MHz or a
// tabulated spectrum (log-log interpolated).
struct CommonModeNoise {
    double amplitude_rel_shot_at_1mhz = 0.0;
    double exponent = 2.0;
    std::vector<std::pair<double, double>> table;  // (freq_hz, power_rel_shot)

    double eval(double freq_hz) const;
};

struct SagnacSpec {
    double splitter_transmission = 0.5;     // power split t of the loop coupler
    double contrast_db = 23.0;              // dark-port rejection ratio
    CommonModeNoise common_mode_noise_rel_shot;
};

struct DeviceSpec {
    WaveguideSpec waveguide;
    RingSpec ring;
    SagnacSpec sagnac;
};

// Validation. Throws std::invalid_argument naming the offending field.
void validate(const WaveguideSpec& w);
void validate(const RingSpec& r);
void validate(const SagnacSpec& s);
void validate(const DeviceSpec& d);

// kappa = omega0 / Q_L, returned in rad/s; second value is kappa/2pi in Hz.
struct Linewidth {
    double kappa_rad_per_s = 0.0;
    double linewidth_hz = 0.0;
};
Linewidth linewidth_from_q(double wavelength_nm, double loaded_q);

// kappa_ext = eta * kappa, kappa_int = (1 - eta) * kappa; the partition is
// exact: kappa_ext + kappa_int == kappa.
struct DecayRates {
    double kappa_ext = 0.0;
    double kappa_int = 0.0;
};
DecayRates split_decay_rates(double kappa, double escape_efficiency);

// Q_int = Q_L / (1 - eta); alpha = 2 pi n_g / (lambda Q_int) converted to
// dB/cm. The inverse direction recovers Q_int from a loss figure.
struct IntrinsicQLoss {
    double intrinsic_q = 0.0;
    double propagation_loss_db_per_cm = 0.0;
};
IntrinsicQLoss intrinsic_q_and_loss(double loaded_q, double escape_efficiency,
                                    double wavelength_nm, double group_index);
double intrinsic_q_from_loss(double propagation_loss_db_per_cm,
                             double wavelength_nm, double group_index);

// Per-photon Kerr shift g = hbar omega0^2 c n2 / (n_g^2 A_eff L), L = 2 pi R.
double kerr_rate(const WaveguideSpec& w, const RingSpec& r);

// FSR = c / (n_g * 2 pi R), in Hz.
double free_spectral_range(const RingSpec& r, const WaveguideSpec& w);

// Loop-mirror output-port power fraction (1 - 2t)^2; lossless loop.
double sagnac_loop_transmission(double splitter_transmission);

// |1 - 2t| that a measured contrast figure implies: sqrt(10^(-C/10)).
double splitter_imbalance_from_contrast(double contrast_db);

}  // namespace sqz

#endif
