#include "sqz/explore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sqz/cavity.hpp"
#include "sqz/constants.hpp"
#include "sqz/noise.hpp"

namespace sqz {

namespace {

constexpr double kEvalFrequencyHz = 10e6;

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

DesignTemplate make_template(const std::string& name, double intrinsic_q) {
    DesignTemplate tpl;
    tpl.name = name;
    tpl.intrinsic_q = intrinsic_q;
    // Thin weakly confining SiN strip: low group index, large mode, large
    // ring. These four entries are calibration inputs, not quoted values.
    tpl.device.waveguide.wavelength_nm = 1550.0;
    tpl.device.waveguide.group_index = 1.75;
    tpl.device.waveguide.effective_area_um2 = 6.0;
    tpl.device.waveguide.nonlinear_index_m2_per_w = 2.4e-19;
    tpl.device.ring.radius_um = 800.0;
    tpl.device.ring.escape_efficiency = 0.95;
    // Q_int = Q_L / (1 - eta) inverted for the loaded Q.
    tpl.device.ring.loaded_q = intrinsic_q * (1.0 - tpl.device.ring.escape_efficiency);
    tpl.device.sagnac = SagnacSpec{};
    return tpl;
}

struct LocusContext {
    double kappa = 0.0;
    double kappa_ext = 0.0;
    double kerr_g = 0.0;
    double drive = 0.0;   // E = kappa_ext P_dir / (hbar omega)
    double n_max = 0.0;   // largest photon number on the locus
};

LocusContext locus_context(const DeviceSpec& device, double power_w,
                           double direction_power_fraction) {
    const Linewidth lw =
        linewidth_from_q(device.waveguide.wavelength_nm, device.ring.loaded_q);
    const DecayRates rates =
        split_decay_rates(lw.kappa_rad_per_s, device.ring.escape_efficiency);
    const double omega_p =
        2.0 * kPi * kSpeedOfLight / (device.waveguide.wavelength_nm * 1e-9);
    LocusContext ctx;
    ctx.kappa = lw.kappa_rad_per_s;
    ctx.kappa_ext = rates.kappa_ext;
    ctx.kerr_g = kerr_rate(device.waveguide, device.ring);
    ctx.drive = rates.kappa_ext * power_w * direction_power_fraction / (kHbar * omega_p);
    ctx.n_max = ctx.drive / (ctx.kappa * ctx.kappa / 4.0);
    return ctx;
}

// Evaluate both detuning branches of the locus at one photon number and fold
// the better stable candidate into the running best.
void consider_photon_number(const LocusContext& ctx, double n, double omega,
                            OperatingPoint& best) {
    const double rhs = ctx.drive / n - ctx.kappa * ctx.kappa / 4.0;
    if (rhs < 0.0) return;
    const double root = std::sqrt(rhs);
    for (int sign = -1; sign <= 1; sign += 2) {
        const double delta = -2.0 * ctx.kerr_g * n + sign * root;
        if (!is_stable(ctx.kappa, ctx.kerr_g, delta, n)) continue;
        LinearizedCavity lc;
        lc.kappa = ctx.kappa;
        lc.kappa_ext = ctx.kappa_ext;
        lc.kerr_g = ctx.kerr_g;
        lc.photon_number = n;
        lc.detuning_rad_per_s = delta;
        lc.field_phase_rad =
            -std::atan2(delta + 2.0 * ctx.kerr_g * n, ctx.kappa / 2.0);
        const QuadratureExtrema ext = quadrature_extrema(lc, omega);
        if (!best.found || ext.s_min < best.s_min) {
            best.found = true;
            best.detuning_rad_per_s = delta;
            best.photon_number = n;
            best.s_min = ext.s_min;
            best.s_max = ext.s_max;
            best.theta_min_rad = ext.theta_min_rad;
        }
    }
}

}  // namespace

std::vector<DesignTemplate> reference_templates() {
    return {make_template("q13m", 13e6), make_template("q37m", 37e6)};
}

DesignTemplate reference_template(const std::string& name) {
    for (auto& tpl : reference_templates()) {
        if (tpl.name == name) return tpl;
    }
    throw std::invalid_argument("unknown design template \"" + name +
                                "\" (available: q13m, q37m)");
}

OperatingPoint optimize_detuning(const DeviceSpec& device, double power_w,
                                 double direction_power_fraction,
                                 double eval_frequency_hz) {
    validate(device);
    if (power_w < 0.0) {
        throw std::invalid_argument("optimize_detuning: power must be >= 0");
    }
    if (!(eval_frequency_hz > 0.0)) {
        throw std::invalid_argument("optimize_detuning: eval frequency must be > 0");
    }

    OperatingPoint best;
    if (power_w == 0.0) {
        best.found = true;
        return best;  // vacuum: shot noise at every angle, any detuning
    }

    const LocusContext ctx = locus_context(device, power_w, direction_power_fraction);
    const double omega = 2.0 * kPi * eval_frequency_hz;

    constexpr int kCoarse = 240;
    const double n_lo = ctx.n_max * 1e-8;
    const double n_hi = ctx.n_max * (1.0 - 1e-12);
    const double log_lo = std::log(n_lo);
    const double log_hi = std::log(n_hi);
    double best_log_n = log_lo;
    for (int i = 0; i < kCoarse; ++i) {
        const double t = static_cast<double>(i) / (kCoarse - 1);
        const double n = std::exp(log_lo + t * (log_hi - log_lo));
        const double before = best.found ? best.s_min : 2.0;
        consider_photon_number(ctx, n, omega, best);
        if (best.found && best.s_min < before) best_log_n = std::log(n);
    }
    // Refine around the coarse winner.
    const double half_step = (log_hi - log_lo) / (kCoarse - 1);
    constexpr int kFine = 80;
    for (int i = 0; i < kFine; ++i) {
        const double t = static_cast<double>(i) / (kFine - 1);
        const double log_n =
            std::clamp(best_log_n - half_step + 2.0 * half_step * t, log_lo, log_hi);
        consider_photon_number(ctx, std::exp(log_n), omega, best);
    }
    return best;
}

std::vector<double> default_power_grid() {
    return log_frequency_grid(1e-3, 1.0, 41);  // reuse of the log-grid helper
}

SweepResult sweep_power_q(const std::vector<DesignTemplate>& templates,
                          const std::vector<double>& powers_w) {
    SweepResult result;
    for (const auto& tpl : templates) {
        validate(tpl.device);
        TemplateSweep sweep;
        sweep.name = tpl.name;
        sweep.intrinsic_q = tpl.intrinsic_q;
        sweep.escape_efficiency = tpl.device.ring.escape_efficiency;
        sweep.asymptote_db = db_from_linear(1.0 - tpl.device.ring.escape_efficiency);
        sweep.threshold_power_w =
            bistability_threshold(tpl.device, tpl.device.waveguide.wavelength_nm)
                .critical_power_w;
        for (double power : powers_w) {
            const OperatingPoint point =
                optimize_detuning(tpl.device, power, 1.0, kEvalFrequencyHz);
            SweepPoint row;
            row.power_w = power;
            row.converged = point.found;
            if (point.found) {
                row.detuning_rad_per_s = point.detuning_rad_per_s;
                row.photon_number = point.photon_number;
                row.on_chip_db = db_from_linear(point.s_min);
                row.detected_db = db_from_linear(
                    apply_loss(point.s_min, kDefaultMeasurementEfficiency));
            }
            sweep.points.push_back(row);
        }
        sweep.power_within_1db_w = design_search(tpl, sweep.asymptote_db + 1.0);
        result.templates.push_back(std::move(sweep));
    }
    return result;
}

double design_search(const DesignTemplate& tpl, double target_squeezing_db) {
    validate(tpl.device);
    if (target_squeezing_db >= 0.0) return 0.0;
    const double floor_db = db_from_linear(1.0 - tpl.device.ring.escape_efficiency);
    if (target_squeezing_db <= floor_db) {
        char tail[64];
        std::snprintf(tail, sizeof(tail), " = %.4f dB", floor_db);
        throw std::invalid_argument(
            std::string("target exceeds escape-efficiency limit 10*log10(1-eta_esc)") +
            tail);
    }

    auto best_db = [&](double power) {
        const OperatingPoint point =
            optimize_detuning(tpl.device, power, 1.0, kEvalFrequencyHz);
        return point.found ? db_from_linear(point.s_min) : 0.0;
    };

    // Bracket: squeezing at the evaluation sideband deepens monotonically
    // with power on the optimized locus.
    double lo = 0.0;
    double hi = 1e-6;
    while (best_db(hi) > target_squeezing_db) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) {
            throw std::runtime_error(
                "design_search: target not reached below 1e6 W");
        }
    }
    while (hi - lo > 0.01 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (best_db(mid) <= target_squeezing_db) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Direct verification of the returned power.
    if (best_db(hi) > target_squeezing_db) {
        throw std::runtime_error("design_search: verification failed at result power");
    }
    return hi;
}

std::string emit_plot_data(const QuadratureSpectrum& spectrum, const std::string& kind) {
    if (kind != "spectrum") {
        throw std::invalid_argument("emit_plot_data: unknown kind \"" + kind +
                                    "\" for a spectrum payload");
    }
    std::string out =
        "# quadrature noise extrema relative to shot\n"
        "# columns: freq_hz s_min_db s_max_db\n";
    for (double f : spectrum.frequencies_hz) {
        const QuadratureExtrema ext = optimal_quadrature(spectrum, f);
        append_double(out, f);
        out.push_back(' ');
        append_double(out, db_from_linear(ext.s_min));
        out.push_back(' ');
        append_double(out, db_from_linear(ext.s_max));
        out.push_back('\n');
    }
    return out;
}

std::string emit_plot_data(const SweepResult& result, const std::string& kind) {
    if (kind != "sweep") {
        throw std::invalid_argument("emit_plot_data: unknown kind \"" + kind +
                                    "\" for a sweep payload");
    }
    std::string out =
        "# optimized squeezing versus pump power, one block per template\n"
        "# columns: power_w on_chip_db detected_db\n";
    bool first = true;
    for (const auto& tpl : result.templates) {
        if (!first) out.push_back('\n');
        first = false;
        out += "# template " + tpl.name + " intrinsic_q ";
        append_double(out, tpl.intrinsic_q);
        out.push_back('\n');
        for (const auto& p : tpl.points) {
            if (!p.converged) continue;
            append_double(out, p.power_w);
            out.push_back(' ');
            append_double(out, p.on_chip_db);
            out.push_back(' ');
            append_double(out, p.detected_db);
            out.push_back('\n');
        }
    }
    return out;
}

std::string emit_plot_data(const NormalizedSpectrum& spectrum, const std::string& kind) {
    if (kind != "normalized") {
        throw std::invalid_argument("emit_plot_data: unknown kind \"" + kind +
                                    "\" for a normalized-trace payload");
    }
    std::string out =
        "# shot-normalized measurement\n"
        "# columns: freq_hz rel_shot_db\n";
    for (std::size_t i = 0; i < spectrum.frequencies_hz.size(); ++i) {
        append_double(out, spectrum.frequencies_hz[i]);
        out.push_back(' ');
        append_double(out, spectrum.rel_shot_db[i]);
        out.push_back('\n');
    }
    return out;
}

}  // namespace sqz
