#include "sqz/fit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "sqz/constants.hpp"
#include "sqz/spectrum.hpp"

namespace sqz {

namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994046;  // 10 / ln 10

// Gauss-Jordan solve of A x = b for small n; A and b are overwritten.
// Returns false when A is singular.
bool solve_inplace(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t row = col + 1; row < n; ++row) {
            if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) pivot = row;
        }
        if (a[pivot * n + col] == 0.0) return false;
        if (pivot != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t k = 0; k < n; ++k) a[col * n + k] *= inv;
        b[col] *= inv;
        for (std::size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            const double factor = a[row * n + col];
            if (factor == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) a[row * n + k] -= factor * a[col * n + k];
            b[row] -= factor * b[col];
        }
    }
    return true;
}

// Inverse of a small symmetric matrix; returns empty vector when singular.
std::vector<double> invert(const std::vector<double>& a, std::size_t n) {
    std::vector<double> work = a;
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t row = col + 1; row < n; ++row) {
            if (std::abs(work[row * n + col]) > std::abs(work[pivot * n + col]))
                pivot = row;
        }
        if (work[pivot * n + col] == 0.0) return {};
        if (pivot != col) {
            for (std::size_t k = 0; k < n; ++k) {
                std::swap(work[col * n + k], work[pivot * n + k]);
                std::swap(inv[col * n + k], inv[pivot * n + k]);
            }
        }
        const double scale = 1.0 / work[col * n + col];
        for (std::size_t k = 0; k < n; ++k) {
            work[col * n + k] *= scale;
            inv[col * n + k] *= scale;
        }
        for (std::size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            const double factor = work[row * n + col];
            if (factor == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) {
                work[row * n + k] -= factor * work[col * n + k];
                inv[row * n + k] -= factor * inv[col * n + k];
            }
        }
    }
    return inv;
}

}  // namespace

ExcessNoiseFit fit_excess_noise(const NormalizedSpectrum& spectrum,
                                double band_lo_hz, double band_hi_hz) {
    validate(spectrum);
    if (!(band_lo_hz > 0.0) || !(band_hi_hz > band_lo_hz)) {
        throw std::invalid_argument("fit_excess_noise: need 0 < band_lo < band_hi");
    }
    const bool weighted =
        spectrum.ratio_variance.size() == spectrum.frequencies_hz.size();

    std::vector<double> x, y, w;
    for (std::size_t i = 0; i < spectrum.frequencies_hz.size(); ++i) {
        const double f = spectrum.frequencies_hz[i];
        if (f < band_lo_hz || f > band_hi_hz) continue;
        const double basis = (1e6 / f) * (1e6 / f);
        x.push_back(basis);
        y.push_back(linear_from_db(spectrum.rel_shot_db[i]));
        double weight = 1.0;
        if (weighted && spectrum.ratio_variance[i] > 0.0) {
            weight = 1.0 / spectrum.ratio_variance[i];
        }
        w.push_back(weight);
    }
    if (x.size() < 4) {
        throw std::invalid_argument("fit_excess_noise: fewer than 4 points in fit band");
    }

    double sxx = 0, sx1 = 0, s11 = 0, sxy = 0, s1y = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * x[i] * x[i];
        sx1 += w[i] * x[i];
        s11 += w[i];
        sxy += w[i] * x[i] * y[i];
        s1y += w[i] * y[i];
    }
    const double det = sxx * s11 - sx1 * sx1;
    if (!(std::abs(det) > 1e-30 * std::max(1.0, sxx * s11))) {
        throw std::runtime_error("fit_excess_noise: singular normal equations");
    }

    ExcessNoiseFit out;
    out.amplitude_rel_shot_at_1mhz = (sxy * s11 - s1y * sx1) / det;
    out.floor_rel_shot = (sxx * s1y - sx1 * sxy) / det;
    out.n_points = x.size();

    double chi2 = 0.0;
    double rms = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double model = out.amplitude_rel_shot_at_1mhz * x[i] + out.floor_rel_shot;
        const double r = model - y[i];
        chi2 += w[i] * r * r;
        if (model > 0.0 && y[i] > 0.0) {
            const double r_db = db_from_linear(model) - db_from_linear(y[i]);
            rms += r_db * r_db;
        }
    }
    out.residual_rms_db = std::sqrt(rms / static_cast<double>(x.size()));
    const double sigma2 = chi2 / static_cast<double>(x.size() - 2);
    out.covariance[0] = sigma2 * s11 / det;
    out.covariance[1] = sigma2 * -sx1 / det;
    out.covariance[2] = sigma2 * -sx1 / det;
    out.covariance[3] = sigma2 * sxx / det;
    return out;
}

KerrFitSetup default_kerr_fit_setup(const DeviceSpec& device,
                                    const DetectionSpec& detection) {
    validate(device);
    validate(detection);
    KerrFitSetup setup;
    setup.device = device;
    setup.detection = detection;
    const double kappa =
        linewidth_from_q(device.waveguide.wavelength_nm, device.ring.loaded_q)
            .kappa_rad_per_s;
    const double g0 = kerr_rate(device.waveguide, device.ring);
    setup.detuning = {"detuning_rad_per_s", -kappa, -5.0 * kappa, 0.0};
    setup.kerr_rate = {"kerr_rate_rad_per_s", g0, g0 / 100.0, g0 * 100.0};
    setup.measurement_efficiency = {"measurement_efficiency", 0.5, 1e-3, 1.0};
    setup.detector_bandwidth = {"detector_bandwidth_hz",
                                detection.detector_bandwidth_hz, 1e6,
                                std::numeric_limits<double>::infinity(), true};
    return setup;
}

double kerr_model_min_db(const KerrFitSetup& setup, double detuning_rad_per_s,
                         double kerr_rate, double measurement_efficiency,
                         double detector_bandwidth_hz, double power_on_chip_w,
                         double frequency_hz) {
    const Linewidth lw = linewidth_from_q(setup.device.waveguide.wavelength_nm,
                                          setup.device.ring.loaded_q);
    const DecayRates rates =
        split_decay_rates(lw.kappa_rad_per_s, setup.device.ring.escape_efficiency);
    const double omega_p =
        2.0 * kPi * kSpeedOfLight / (setup.device.waveguide.wavelength_nm * 1e-9);
    const double drive = rates.kappa_ext * power_on_chip_w *
                         setup.direction_power_fraction / (kHbar * omega_p);

    const auto solutions = steady_state_rates(lw.kappa_rad_per_s, rates.kappa_ext,
                                              kerr_rate, detuning_rad_per_s, drive);
    const CavitySolution* chosen = nullptr;
    for (const auto& s : solutions) {
        if (s.stable) {
            chosen = &s;
            break;
        }
    }
    if (chosen == nullptr) {
        throw std::runtime_error("kerr_model_min_db: no stable branch");
    }

    const auto ext = quadrature_extrema(linearize(*chosen), 2.0 * kPi * frequency_hz);
    const double dark = dark_noise_floor(setup.detection);
    const double x = frequency_hz / detector_bandwidth_hz;
    const double rolloff = 1.0 / (1.0 + x * x);
    const double quantum =
        measurement_efficiency * ext.s_min + (1.0 - measurement_efficiency);
    return db_from_linear((dark + rolloff * quantum) / (dark + rolloff));
}

FitResult fit_kerr_model(const std::vector<KerrFitData>& data,
                         const KerrFitSetup& setup) {
    if (data.empty()) {
        throw std::invalid_argument("fit_kerr_model: no spectra provided");
    }
    for (const auto& d : data) {
        validate(d.spectrum);
        if (!(d.power_on_chip_w > 0.0)) {
            throw std::invalid_argument("fit_kerr_model: power must be > 0");
        }
    }
    if (!(setup.band_lo_hz > 0.0) || !(setup.band_hi_hz > setup.band_lo_hz)) {
        throw std::invalid_argument("fit_kerr_model: need 0 < band_lo < band_hi");
    }

    // Collect the residual bins once.
    struct Bin {
        std::size_t dataset;
        double frequency_hz;
        double data_db;
        double sqrt_w;
    };
    std::vector<Bin> bins;
    for (std::size_t d = 0; d < data.size(); ++d) {
        const auto& s = data[d].spectrum;
        const bool weighted = s.ratio_variance.size() == s.frequencies_hz.size();
        for (std::size_t i = 0; i < s.frequencies_hz.size(); ++i) {
            const double f = s.frequencies_hz[i];
            if (f < setup.band_lo_hz || f > setup.band_hi_hz) continue;
            Bin bin;
            bin.dataset = d;
            bin.frequency_hz = f;
            bin.data_db = s.rel_shot_db[i];
            bin.sqrt_w = 1.0;
            if (weighted && s.ratio_variance[i] > 0.0) {
                const double ratio = linear_from_db(s.rel_shot_db[i]);
                const double var_db =
                    kDbPerNeper * kDbPerNeper * s.ratio_variance[i] / (ratio * ratio);
                bin.sqrt_w = 1.0 / std::sqrt(var_db);
            }
            bins.push_back(bin);
        }
    }
    if (bins.empty()) {
        throw std::invalid_argument("fit_kerr_model: no data in fit band");
    }

    std::vector<FitParameter> params = {setup.detuning, setup.kerr_rate,
                                        setup.measurement_efficiency,
                                        setup.detector_bandwidth};
    std::vector<std::size_t> free_idx;
    for (std::size_t j = 0; j < params.size(); ++j) {
        if (params[j].fixed) continue;
        if (params[j].value == 0.0) {
            throw std::invalid_argument("fit_kerr_model: free parameter \"" +
                                        params[j].name +
                                        "\" needs a nonzero starting value");
        }
        if (!(params[j].lower <= params[j].value && params[j].value <= params[j].upper)) {
            throw std::invalid_argument("fit_kerr_model: starting value of \"" +
                                        params[j].name + "\" violates its bounds");
        }
        free_idx.push_back(j);
    }
    const std::size_t n_free = free_idx.size();
    const std::size_t n_res = bins.size();

    auto model_db = [&](const std::vector<FitParameter>& p, double power,
                        double f) -> double {
        return kerr_model_min_db(setup, p[0].value, p[1].value, p[2].value, p[3].value,
                                 power, f);
    };
    auto residuals = [&](const std::vector<FitParameter>& p, std::vector<double>& r) {
        r.resize(n_res);
        for (std::size_t i = 0; i < n_res; ++i) {
            const double m =
                model_db(p, data[bins[i].dataset].power_on_chip_w, bins[i].frequency_hz);
            r[i] = (m - bins[i].data_db) * bins[i].sqrt_w;
        }
    };
    auto cost_of = [&](const std::vector<FitParameter>& p, std::vector<double>& r,
                       bool& ok) -> double {
        try {
            residuals(p, r);
        } catch (const std::exception&) {
            ok = false;
            return std::numeric_limits<double>::infinity();
        }
        ok = true;
        double c = 0.0;
        for (double v : r) c += v * v;
        return 0.5 * c;
    };

    auto make_result = [&](const std::vector<FitParameter>& p,
                           const std::vector<double>& r, int iterations,
                           bool converged) {
        FitResult out;
        out.parameters = p;
        for (auto& parameter : out.parameters) {
            const double span = std::abs(parameter.upper - parameter.lower);
            const double tol =
                1e-10 * (std::isfinite(span) ? std::max(span, 1.0) :
                         std::max(std::abs(parameter.value), 1.0));
            parameter.at_lower_bound =
                !parameter.fixed && std::abs(parameter.value - parameter.lower) <= tol;
            parameter.at_upper_bound =
                !parameter.fixed && std::abs(parameter.value - parameter.upper) <= tol;
        }
        for (std::size_t j : free_idx) out.free_names.push_back(p[j].name);
        double ss = 0.0;
        for (std::size_t i = 0; i < n_res; ++i) {
            const double unweighted = r[i] / bins[i].sqrt_w;
            ss += unweighted * unweighted;
        }
        out.residual_rms_db = std::sqrt(ss / static_cast<double>(n_res));
        out.iterations = iterations;
        out.converged = converged;
        return out;
    };

    std::vector<double> r;
    bool ok = false;
    double cost = cost_of(params, r, ok);
    if (!ok) {
        throw std::invalid_argument(
            "fit_kerr_model: model undefined at the starting point");
    }

    std::vector<double> initial_scale(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        initial_scale[j] = std::abs(params[j].value);
    }

    // Central-difference Jacobian of the weighted residuals, bound-aware.
    std::vector<double> jac(n_res * n_free);
    auto fill_jacobian = [&](const std::vector<FitParameter>& p) -> bool {
        std::vector<FitParameter> probe = p;
        std::vector<double> r_hi, r_lo;
        for (std::size_t k = 0; k < n_free; ++k) {
            const std::size_t j = free_idx[k];
            const double h =
                1e-6 * std::max(std::abs(p[j].value), initial_scale[j]);
            const double hi = std::min(p[j].value + h, p[j].upper);
            const double lo = std::max(p[j].value - h, p[j].lower);
            if (hi == lo) {
                for (std::size_t i = 0; i < n_res; ++i) jac[i * n_free + k] = 0.0;
                continue;
            }
            probe[j].value = hi;
            bool ok_hi = false, ok_lo = false;
            cost_of(probe, r_hi, ok_hi);
            probe[j].value = lo;
            cost_of(probe, r_lo, ok_lo);
            probe[j].value = p[j].value;
            if (!ok_hi || !ok_lo) return false;
            const double inv = 1.0 / (hi - lo);
            for (std::size_t i = 0; i < n_res; ++i) {
                jac[i * n_free + k] = (r_hi[i] - r_lo[i]) * inv;
            }
        }
        return true;
    };

    double lambda = 1e-3;
    int iterations = 0;
    bool converged = n_free == 0;
    std::vector<FitParameter> best = params;
    std::vector<double> best_r = r;
    double best_cost = cost;

    while (!converged && iterations < setup.max_iterations) {
        ++iterations;
        if (!fill_jacobian(params)) {
            throw FitDivergence("fit_kerr_model: model undefined near current point",
                                make_result(best, best_r, iterations, false));
        }
        std::vector<double> jtj(n_free * n_free, 0.0);
        std::vector<double> jtr(n_free, 0.0);
        for (std::size_t i = 0; i < n_res; ++i) {
            for (std::size_t a = 0; a < n_free; ++a) {
                jtr[a] += jac[i * n_free + a] * r[i];
                for (std::size_t b = a; b < n_free; ++b) {
                    jtj[a * n_free + b] += jac[i * n_free + a] * jac[i * n_free + b];
                }
            }
        }
        for (std::size_t a = 0; a < n_free; ++a) {
            for (std::size_t b = 0; b < a; ++b) {
                jtj[a * n_free + b] = jtj[b * n_free + a];
            }
        }

        bool stepped = false;
        while (!stepped) {
            std::vector<double> lhs = jtj;
            std::vector<double> rhs(n_free);
            for (std::size_t a = 0; a < n_free; ++a) {
                const double diag = jtj[a * n_free + a];
                lhs[a * n_free + a] = diag + lambda * std::max(diag, 1e-30);
                rhs[a] = -jtr[a];
            }
            if (!solve_inplace(lhs, rhs, n_free)) {
                lambda *= 10.0;
                if (lambda > 1e14) {
                    throw FitDivergence(
                        "fit_kerr_model: diverged (singular normal equations)",
                        make_result(best, best_r, iterations, false));
                }
                continue;
            }
            std::vector<FitParameter> trial = params;
            double max_rel_step = 0.0;
            for (std::size_t k = 0; k < n_free; ++k) {
                const std::size_t j = free_idx[k];
                trial[j].value =
                    std::clamp(params[j].value + rhs[k], params[j].lower, params[j].upper);
                const double scale = std::max(std::abs(params[j].value), initial_scale[j]);
                max_rel_step =
                    std::max(max_rel_step, std::abs(trial[j].value - params[j].value) /
                                               std::max(scale, 1e-300));
            }
            std::vector<double> trial_r;
            bool trial_ok = false;
            const double trial_cost = cost_of(trial, trial_r, trial_ok);
            if (trial_ok && trial_cost < cost) {
                const double improvement = (cost - trial_cost) / std::max(cost, 1e-300);
                params = std::move(trial);
                r = std::move(trial_r);
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (cost < best_cost) {
                    best = params;
                    best_r = r;
                    best_cost = cost;
                }
                if (improvement < 1e-12 || max_rel_step < 1e-10 || cost < 1e-22) {
                    converged = true;
                }
            } else {
                lambda *= 10.0;
                if (lambda > 1e14) {
                    // No downhill direction left at any damping: treat the
                    // current point as the (local) solution.
                    converged = true;
                    stepped = true;
                }
            }
        }
    }

    if (!converged) {
        throw FitDivergence("fit_kerr_model: no convergence after max iterations",
                            make_result(best, best_r, iterations, false));
    }

    FitResult out = make_result(best, best_r, iterations, true);

    if (n_free > 0) {
        if (!fill_jacobian(best)) {
            return out;  // covariance left empty: model fragile at the solution
        }
        std::vector<double> jtj(n_free * n_free, 0.0);
        for (std::size_t i = 0; i < n_res; ++i) {
            for (std::size_t a = 0; a < n_free; ++a) {
                for (std::size_t b = a; b < n_free; ++b) {
                    jtj[a * n_free + b] += jac[i * n_free + a] * jac[i * n_free + b];
                }
            }
        }
        for (std::size_t a = 0; a < n_free; ++a) {
            for (std::size_t b = 0; b < a; ++b) {
                jtj[a * n_free + b] = jtj[b * n_free + a];
            }
        }
        std::vector<double> inv = invert(jtj, n_free);
        if (!inv.empty()) {
            const double dof =
                n_res > n_free ? static_cast<double>(n_res - n_free) : 1.0;
            const double sigma2 = 2.0 * best_cost / dof;
            for (double& v : inv) v *= sigma2;
            out.covariance = std::move(inv);
        }
    }
    return out;
}

std::string fit_result_to_json(const FitResult& result) {
    nlohmann::ordered_json j;
    j["converged"] = result.converged;
    j["iterations"] = result.iterations;
    j["residual_rms_db"] = result.residual_rms_db;
    j["parameters"] = nlohmann::ordered_json::array();
    for (const auto& p : result.parameters) {
        nlohmann::ordered_json entry;
        entry["name"] = p.name;
        entry["value"] = p.value;
        entry["lower"] = p.lower;
        entry["upper"] = p.upper;
        entry["fixed"] = p.fixed;
        entry["at_lower_bound"] = p.at_lower_bound;
        entry["at_upper_bound"] = p.at_upper_bound;
        j["parameters"].push_back(entry);
    }
    j["covariance_order"] = result.free_names;
    const std::size_t n = result.free_names.size();
    nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
    if (result.covariance.size() == n * n) {
        for (std::size_t a = 0; a < n; ++a) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (std::size_t b = 0; b < n; ++b) row.push_back(result.covariance[a * n + b]);
            matrix.push_back(row);
        }
    }
    j["covariance"] = matrix;
    return j.dump(2) + "\n";
}

NormalizedSpectrum make_synthetic_excess_spectrum(
    double amplitude_rel_shot_at_1mhz, double floor_rel_shot,
    const std::vector<double>& frequencies_hz, double relative_noise,
    std::uint64_t seed) {
    if (amplitude_rel_shot_at_1mhz < 0.0 || floor_rel_shot <= 0.0) {
        throw std::invalid_argument(
            "make_synthetic_excess_spectrum: need amplitude >= 0 and floor > 0");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    NormalizedSpectrum out;
    out.frequencies_hz = frequencies_hz;
    out.rel_shot_db.reserve(frequencies_hz.size());
    out.ratio_variance.reserve(frequencies_hz.size());
    for (double f : frequencies_hz) {
        if (!(f > 0.0)) {
            throw std::invalid_argument(
                "make_synthetic_excess_spectrum: frequencies must be > 0");
        }
        const double clean =
            amplitude_rel_shot_at_1mhz * (1e6 / f) * (1e6 / f) + floor_rel_shot;
        double value = clean;
        if (relative_noise > 0.0) {
            value = clean * (1.0 + relative_noise * gauss(rng));
            value = std::max(value, 1e-6 * clean);
        }
        out.rel_shot_db.push_back(db_from_linear(value));
        out.ratio_variance.push_back(relative_noise > 0.0
                                         ? relative_noise * relative_noise * clean * clean
                                         : 0.0);
    }
    if (relative_noise <= 0.0) out.ratio_variance.clear();
    out.n_averaged = 1;
    return out;
}

SyntheticTraceSet make_synthetic_traces(const DeviceSpec& device, const PumpSpec& pump,
                                        const ThermoNoiseModel& thermo,
                                        const DetectionSpec& detection,
                                        double measurement_efficiency,
                                        double direction_power_fraction,
                                        const std::vector<double>& frequencies_hz,
                                        std::optional<double> lock_angle_rad,
                                        double noise_db_sigma, std::uint64_t seed) {
    validate(device);
    validate(pump);
    validate(thermo);
    validate(detection);
    if (!(measurement_efficiency > 0.0) || measurement_efficiency > 1.0) {
        throw std::invalid_argument(
            "make_synthetic_traces: measurement_efficiency must be in (0, 1]");
    }
    if (frequencies_hz.empty()) {
        throw std::invalid_argument("make_synthetic_traces: empty frequency grid");
    }

    const auto solutions = steady_state(device, pump, direction_power_fraction);
    const CavitySolution* chosen = nullptr;
    for (const auto& s : solutions) {
        if (s.stable) {
            chosen = &s;
            break;
        }
    }
    if (chosen == nullptr) {
        throw std::runtime_error("make_synthetic_traces: no stable branch");
    }
    const LinearizedCavity lc = linearize(*chosen);
    const double theta_c = carrier_angle(*chosen);
    const double dark = dark_noise_floor(detection);
    const double eta = measurement_efficiency;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    EsaTrace base;
    base.frequencies_hz = frequencies_hz;
    base.power_dbm.resize(frequencies_hz.size());
    base.rbw_hz = 100000.0;
    base.vbw_hz = 20.0;
    base.sweep_time_s = 10.0;

    SyntheticTraceSet out{base, base, base};
    out.signal.label = TraceLabel::signal;
    out.shot.label = TraceLabel::shot;
    out.dark.label = TraceLabel::dark;

    for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
        const double f = frequencies_hz[i];
        const double omega = 2.0 * kPi * f;
        const double rolloff = detector_rolloff(detection, f);
        const double excess = thermo_psd_at(thermo, f);

        // The recorded noise is a sinusoid in 2 theta: project the quantum
        // part and the thermo phase noise onto (mean, cos, sin) coefficients.
        const double s0 = spectrum_point(lc, omega, 0.0);
        const double s45 = spectrum_point(lc, omega, 0.25 * kPi);
        const double s90 = spectrum_point(lc, omega, 0.5 * kPi);
        const double q_mean = 0.5 * (s0 + s90);
        const double q_cos = 0.5 * (s0 - s90);
        const double q_sin = s45 - q_mean;

        double mean = eta * q_mean + (1.0 - eta) + 0.5 * excess;
        double cos_c = eta * q_cos - 0.5 * excess * std::cos(2.0 * theta_c);
        double sin_c = eta * q_sin - 0.5 * excess * std::sin(2.0 * theta_c);

        double combined;
        if (lock_angle_rad) {
            combined = mean + cos_c * std::cos(2.0 * *lock_angle_rad) +
                       sin_c * std::sin(2.0 * *lock_angle_rad);
        } else {
            combined = mean - std::hypot(cos_c, sin_c);
        }
        const double normalized_db =
            db_from_linear((dark + rolloff * combined) / (dark + rolloff));
        const double noisy_db =
            normalized_db + (noise_db_sigma > 0.0 ? noise_db_sigma * gauss(rng) : 0.0);

        // Recorded levels in mW with the ideal low-frequency shot power as
        // the 1 mW reference; normalize() recovers noisy_db exactly.
        const double dark_mw = dark;
        const double shot_mw = dark + rolloff;
        const double signal_mw = dark_mw + rolloff * linear_from_db(noisy_db);
        out.dark.power_dbm[i] = db_from_linear(dark_mw);
        out.shot.power_dbm[i] = db_from_linear(shot_mw);
        out.signal.power_dbm[i] = db_from_linear(signal_mw);
    }
    return out;
}

}  // namespace sqz
