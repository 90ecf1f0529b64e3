#include "sqz/device.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sqz/constants.hpp"

namespace sqz {

double db_from_linear(double x) { return 10.0 * std::log10(x); }
double linear_from_db(double db) { return std::pow(10.0, db / 10.0); }

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double omega_from_wavelength(double wavelength_nm) {
    return 2.0 * kPi * kSpeedOfLight / (wavelength_nm * 1e-9);
}

}  // namespace

void validate(const WaveguideSpec& w) {
    require(w.wavelength_nm >= 400.0 && w.wavelength_nm <= 4000.0,
            "waveguide.wavelength_nm must lie in [400, 4000]");
    require(w.group_index >= 1.0 && w.group_index <= 10.0,
            "waveguide.group_index must lie in [1, 10]");
    // n2 = 0 describes a linear medium and is allowed; everything else must be
    // strictly positive.
    require(w.nonlinear_index_m2_per_w >= 0.0,
            "waveguide.nonlinear_index_m2_per_w must be >= 0");
    require(w.effective_area_um2 > 0.0,
            "waveguide.effective_area_um2 must be > 0");
    if (w.propagation_loss_db_per_cm)
        require(*w.propagation_loss_db_per_cm > 0.0,
                "waveguide.propagation_loss_db_per_cm must be > 0");
}

void validate(const RingSpec& r) {
    require(r.radius_um > 0.0, "ring.radius_um must be > 0");
    require(r.escape_efficiency > 0.0 && r.escape_efficiency <= 1.0,
            "ring.escape_efficiency must lie in (0, 1]");
    require(r.loaded_q > 1.0, "ring.loaded_q must be > 1");
}

void validate(const SagnacSpec& s) {
    require(s.splitter_transmission >= 0.0 && s.splitter_transmission <= 1.0,
            "sagnac.splitter_transmission must lie in [0, 1]");
    require(s.contrast_db >= 0.0, "sagnac.contrast_db must be >= 0");
    require(s.common_mode_noise_rel_shot.amplitude_rel_shot_at_1mhz >= 0.0,
            "sagnac.common_mode_noise.amplitude_rel_shot_at_1mhz must be >= 0");
    for (const auto& [f, v] : s.common_mode_noise_rel_shot.table) {
        require(f > 0.0 && v >= 0.0,
                "sagnac.common_mode_noise.table entries must have freq > 0 and power >= 0");
    }
}

void validate(const DeviceSpec& d) {
    validate(d.waveguide);
    validate(d.ring);
    validate(d.sagnac);
}

double CommonModeNoise::eval(double freq_hz) const {
    if (freq_hz <= 0.0)
        throw std::invalid_argument("common-mode noise requested at freq <= 0");
    if (!table.empty()) {
        // Log-log interpolation, clamped at the table edges.
        if (freq_hz <= table.front().first) return table.front().second;
        if (freq_hz >= table.back().first) return table.back().second;
        for (std::size_t i = 1; i < table.size(); ++i) {
            if (freq_hz <= table[i].first) {
                const auto& [f0, v0] = table[i - 1];
                const auto& [f1, v1] = table[i];
                if (v0 <= 0.0 || v1 <= 0.0) {  // linear fallback when a node is zero
                    const double t = (freq_hz - f0) / (f1 - f0);
                    return v0 + t * (v1 - v0);
                }
                const double t = std::log(freq_hz / f0) / std::log(f1 / f0);
                return v0 * std::pow(v1 / v0, t);
            }
        }
    }
    return amplitude_rel_shot_at_1mhz * std::pow(1e6 / freq_hz, exponent);
}

Linewidth linewidth_from_q(double wavelength_nm, double loaded_q) {
    if (wavelength_nm <= 0.0) throw std::invalid_argument("wavelength_nm must be > 0");
    if (loaded_q <= 0.0) throw std::invalid_argument("loaded_q must be > 0");
    Linewidth lw;
    lw.kappa_rad_per_s = omega_from_wavelength(wavelength_nm) / loaded_q;
    lw.linewidth_hz = lw.kappa_rad_per_s / (2.0 * kPi);
    return lw;
}

DecayRates split_decay_rates(double kappa, double escape_efficiency) {
    if (kappa <= 0.0) throw std::invalid_argument("kappa must be > 0");
    if (escape_efficiency <= 0.0 || escape_efficiency > 1.0)
        throw std::invalid_argument("escape_efficiency must lie in (0, 1]");
    DecayRates r;
    r.kappa_ext = escape_efficiency * kappa;
    // Computed as kappa - kappa_ext so the partition is exact in floating
    // point, not merely to rounding.
    r.kappa_int = kappa - r.kappa_ext;
    return r;
}

IntrinsicQLoss intrinsic_q_and_loss(double loaded_q, double escape_efficiency,
                                    double wavelength_nm, double group_index) {
    if (escape_efficiency >= 1.0)
        throw std::invalid_argument("escape_efficiency = 1 leaves no intrinsic loss to quote");
    if (escape_efficiency < 0.0 || loaded_q <= 0.0 || wavelength_nm <= 0.0 ||
        group_index <= 0.0)
        throw std::invalid_argument("intrinsic_q_and_loss: inputs must be positive");
    IntrinsicQLoss out;
    out.intrinsic_q = loaded_q / (1.0 - escape_efficiency);
    // alpha [1/m] = 2 pi n_g / (lambda Q_int); dB/cm = alpha * 10/ln10 / 100.
    const double alpha_per_m =
        2.0 * kPi * group_index / (wavelength_nm * 1e-9 * out.intrinsic_q);
    out.propagation_loss_db_per_cm = alpha_per_m * (10.0 / std::log(10.0)) / 100.0;
    return out;
}

double intrinsic_q_from_loss(double propagation_loss_db_per_cm,
                             double wavelength_nm, double group_index) {
    if (propagation_loss_db_per_cm <= 0.0)
        throw std::invalid_argument("propagation_loss_db_per_cm must be > 0");
    const double alpha_per_m =
        propagation_loss_db_per_cm * 100.0 * std::log(10.0) / 10.0;
    return 2.0 * kPi * group_index / (wavelength_nm * 1e-9 * alpha_per_m);
}

double kerr_rate(const WaveguideSpec& w, const RingSpec& r) {
    validate(w);
    validate(r);
    const double omega0 = omega_from_wavelength(w.wavelength_nm);
    const double a_eff = w.effective_area_um2 * 1e-12;
    const double circumference = 2.0 * kPi * r.radius_um * 1e-6;
    return kHbar * omega0 * omega0 * kSpeedOfLight * w.nonlinear_index_m2_per_w /
           (w.group_index * w.group_index * a_eff * circumference);
}

double free_spectral_range(const RingSpec& r, const WaveguideSpec& w) {
    validate(w);
    if (r.radius_um <= 0.0) throw std::invalid_argument("ring.radius_um must be > 0");
    return kSpeedOfLight / (w.group_index * 2.0 * kPi * r.radius_um * 1e-6);
}

double sagnac_loop_transmission(double splitter_transmission) {
    if (splitter_transmission < 0.0 || splitter_transmission > 1.0)
        throw std::invalid_argument("splitter_transmission must lie in [0, 1]");
    const double x = 1.0 - 2.0 * splitter_transmission;
    return x * x;
}

double splitter_imbalance_from_contrast(double contrast_db) {
    if (contrast_db < 0.0) throw std::invalid_argument("contrast_db must be >= 0");
    return std::sqrt(linear_from_db(-contrast_db));
}

}  // namespace sqz
