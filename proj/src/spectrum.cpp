#include "sqz/spectrum.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

#include "sqz/constants.hpp"

namespace sqz {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(const std::string& token, std::size_t line_no) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw std::runtime_error("spectrum_from_csv: bad number at line " +
                                 std::to_string(line_no));
    }
    return v;
}

// Least-squares sinusoid S(theta) = m + A cos(2 theta) + B sin(2 theta)
// through sample pairs; exact for model output since S is that sinusoid.
struct Sinusoid {
    double mean = 0.0;
    double cos_coeff = 0.0;
    double sin_coeff = 0.0;
};

Sinusoid fit_sinusoid(const std::vector<double>& angles, const double* values) {
    double s11 = 0, s12 = 0, s13 = 0, s22 = 0, s23 = 0, s33 = 0;
    double r1 = 0, r2 = 0, r3 = 0;
    for (std::size_t k = 0; k < angles.size(); ++k) {
        const double c = std::cos(2.0 * angles[k]);
        const double s = std::sin(2.0 * angles[k]);
        s11 += 1.0;
        s12 += c;
        s13 += s;
        s22 += c * c;
        s23 += c * s;
        s33 += s * s;
        r1 += values[k];
        r2 += values[k] * c;
        r3 += values[k] * s;
    }
    const double det = s11 * (s22 * s33 - s23 * s23) - s12 * (s12 * s33 - s23 * s13) +
                       s13 * (s12 * s23 - s22 * s13);
    if (std::abs(det) < 1e-12 * std::max(1.0, s11 * s22 * s33)) {
        throw std::invalid_argument(
            "optimal_quadrature: angle grid does not determine the quadrature sinusoid");
    }
    Sinusoid out;
    out.mean = (r1 * (s22 * s33 - s23 * s23) - s12 * (r2 * s33 - s23 * r3) +
                s13 * (r2 * s23 - s22 * r3)) /
               det;
    out.cos_coeff = (s11 * (r2 * s33 - s23 * r3) - r1 * (s12 * s33 - s23 * s13) +
                     s13 * (s12 * r3 - r2 * s13)) /
                    det;
    out.sin_coeff = (s11 * (s22 * r3 - r2 * s23) - s12 * (s12 * r3 - r2 * s13) +
                     r1 * (s12 * s23 - s22 * s13)) /
                    det;
    return out;
}

QuadratureExtrema extrema_from_sinusoid(const Sinusoid& fit) {
    QuadratureExtrema out;
    const double amp = std::hypot(fit.cos_coeff, fit.sin_coeff);
    out.s_min = fit.mean - amp;
    out.s_max = fit.mean + amp;
    double theta_min = 0.5 * std::atan2(-fit.sin_coeff, -fit.cos_coeff);
    if (theta_min < 0.0) theta_min += kPi;
    double theta_max = theta_min + 0.5 * kPi;
    if (theta_max >= kPi) theta_max -= kPi;
    out.theta_min_rad = theta_min;
    out.theta_max_rad = theta_max;
    return out;
}

}  // namespace

namespace detail {

void check_spectrum_inputs(const DeviceSpec& device, const PumpSpec& pump,
                           const CavitySolution& solution,
                           const std::vector<double>& frequencies_hz,
                           const std::vector<double>& angles_rad) {
    validate(device);
    validate(pump);
    if (!solution.stable) {
        throw std::runtime_error("linearization invalid on unstable branch");
    }
    if (frequencies_hz.empty()) {
        throw std::invalid_argument("fluctuation_spectrum: empty frequency grid");
    }
    if (angles_rad.empty()) {
        throw std::invalid_argument("fluctuation_spectrum: empty angle grid");
    }
    for (double f : frequencies_hz) {
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw std::invalid_argument(
                "fluctuation_spectrum: frequencies must be positive and finite");
        }
    }
}

}  // namespace detail

std::vector<double> log_frequency_grid(double f_min_hz, double f_max_hz, std::size_t n) {
    if (!(f_min_hz > 0.0) || !(f_max_hz > f_min_hz)) {
        throw std::invalid_argument("log_frequency_grid: need 0 < f_min < f_max");
    }
    if (n < 2) {
        throw std::invalid_argument("log_frequency_grid: need at least 2 points");
    }
    std::vector<double> grid(n);
    const double log_min = std::log(f_min_hz);
    const double log_max = std::log(f_max_hz);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        grid[i] = std::exp(log_min + t * (log_max - log_min));
    }
    grid.front() = f_min_hz;
    grid.back() = f_max_hz;
    return grid;
}

std::vector<double> angle_grid(std::size_t n) {
    if (n < 3) {
        throw std::invalid_argument("angle_grid: need at least 3 angles");
    }
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = kPi * static_cast<double>(i) / static_cast<double>(n);
    }
    return grid;
}

std::vector<double> default_frequency_grid() { return log_frequency_grid(1e6, 5e9, 400); }

std::vector<double> default_angle_grid() { return angle_grid(181); }

QuadratureSpectrum fluctuation_spectrum(const DeviceSpec& device, const PumpSpec& pump,
                                        const CavitySolution& solution,
                                        const std::vector<double>& frequencies_hz,
                                        const std::vector<double>& angles_rad) {
    detail::check_spectrum_inputs(device, pump, solution, frequencies_hz, angles_rad);

    const LinearizedCavity lc = linearize(solution);
    QuadratureSpectrum out;
    out.frequencies_hz = frequencies_hz;
    out.angles_rad = angles_rad;
    out.values_rel_shot.resize(frequencies_hz.size() * angles_rad.size());
    for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
        const double omega = 2.0 * kPi * frequencies_hz[i];
        double* row = out.values_rel_shot.data() + i * angles_rad.size();
        for (std::size_t j = 0; j < angles_rad.size(); ++j) {
            row[j] = spectrum_point(lc, omega, angles_rad[j]);
        }
    }
    return out;
}

QuadratureExtrema optimal_quadrature(const QuadratureSpectrum& spectrum,
                                     double frequency_hz) {
    if (spectrum.n_freq() == 0 || spectrum.n_angle() < 3) {
        throw std::invalid_argument("optimal_quadrature: spectrum grid too small");
    }
    const auto& freqs = spectrum.frequencies_hz;
    const double lo = *std::min_element(freqs.begin(), freqs.end());
    const double hi = *std::max_element(freqs.begin(), freqs.end());
    if (!(frequency_hz >= lo && frequency_hz <= hi)) {
        throw std::out_of_range("optimal_quadrature: frequency outside spectrum grid");
    }
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double dist = std::abs(freqs[i] - frequency_hz);
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    const double* row = spectrum.values_rel_shot.data() + best * spectrum.n_angle();
    QuadratureExtrema out = extrema_from_sinusoid(fit_sinusoid(spectrum.angles_rad, row));
    // Guard the grid bound against rounding in the reconstruction.
    const double row_min = *std::min_element(row, row + spectrum.n_angle());
    const double row_max = *std::max_element(row, row + spectrum.n_angle());
    out.s_min = std::min(out.s_min, row_min);
    out.s_max = std::max(out.s_max, row_max);
    return out;
}

QuadratureExtrema quadrature_extrema(const LinearizedCavity& lc,
                                     double omega_rad_per_s) {
    const double s0 = spectrum_point(lc, omega_rad_per_s, 0.0);
    const double s45 = spectrum_point(lc, omega_rad_per_s, 0.25 * kPi);
    const double s90 = spectrum_point(lc, omega_rad_per_s, 0.5 * kPi);
    Sinusoid fit;
    fit.mean = 0.5 * (s0 + s90);
    fit.cos_coeff = 0.5 * (s0 - s90);
    fit.sin_coeff = s45 - fit.mean;
    return extrema_from_sinusoid(fit);
}

std::vector<SweepRow> sweep(const DeviceSpec& device, const PumpSpec& pump_template,
                            const std::vector<double>& powers_w,
                            const std::vector<double>& frequencies_hz,
                            const std::vector<double>& angles_rad,
                            double direction_power_fraction) {
    std::vector<SweepRow> rows;
    rows.reserve(powers_w.size() * frequencies_hz.size());
    for (double power : powers_w) {
        PumpSpec pump = pump_template;
        pump.power_on_chip_w = power;
        try {
            const auto solutions = steady_state(device, pump, direction_power_fraction);
            const CavitySolution* chosen = nullptr;
            for (const auto& s : solutions) {
                if (s.stable) {
                    chosen = &s;
                    break;
                }
            }
            if (chosen == nullptr) {
                throw std::runtime_error("no stable branch");
            }
            const auto spectrum =
                fluctuation_spectrum(device, pump, *chosen, frequencies_hz, angles_rad);
            for (double f : frequencies_hz) {
                const auto ext = optimal_quadrature(spectrum, f);
                SweepRow row;
                row.power_w = power;
                row.frequency_hz = f;
                row.s_min = ext.s_min;
                row.s_max = ext.s_max;
                rows.push_back(row);
            }
        } catch (const std::exception& e) {
            char head[64];
            std::snprintf(head, sizeof(head), "sweep at P = %.6g W: ", power);
            throw std::runtime_error(std::string(head) + e.what());
        }
    }
    return rows;
}

std::string spectrum_to_csv(const QuadratureSpectrum& s) {
    std::string out = "freq_hz,theta_rad,s_rel_shot\n";
    for (std::size_t i = 0; i < s.n_freq(); ++i) {
        for (std::size_t j = 0; j < s.n_angle(); ++j) {
            append_double(out, s.frequencies_hz[i]);
            out.push_back(',');
            append_double(out, s.angles_rad[j]);
            out.push_back(',');
            append_double(out, s.at(i, j));
            out.push_back('\n');
        }
    }
    return out;
}

QuadratureSpectrum spectrum_from_csv(const std::string& text) {
    QuadratureSpectrum out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "freq_hz,theta_rad,s_rel_shot") {
                throw std::runtime_error("spectrum_from_csv: bad header at line 1");
            }
            header_seen = true;
            continue;
        }
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = (c1 == std::string::npos) ? std::string::npos
                                                         : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos) {
            throw std::runtime_error("spectrum_from_csv: expected 3 columns at line " +
                                     std::to_string(line_no));
        }
        const double f = parse_double(line.substr(0, c1), line_no);
        const double theta = parse_double(line.substr(c1 + 1, c2 - c1 - 1), line_no);
        const double value = parse_double(line.substr(c2 + 1), line_no);
        if (out.frequencies_hz.empty() || out.frequencies_hz.back() != f) {
            out.frequencies_hz.push_back(f);
        }
        if (out.frequencies_hz.size() == 1) {
            out.angles_rad.push_back(theta);
        }
        out.values_rel_shot.push_back(value);
    }
    if (!header_seen) {
        throw std::runtime_error("spectrum_from_csv: empty input");
    }
    if (out.angles_rad.empty() ||
        out.values_rel_shot.size() != out.n_freq() * out.n_angle()) {
        throw std::runtime_error("spectrum_from_csv: ragged grid");
    }
    return out;
}

}  // namespace sqz
