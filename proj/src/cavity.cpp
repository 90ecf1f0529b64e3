#include "sqz/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sqz/constants.hpp"

namespace sqz {

void validate(const PumpSpec& p) {
    if (p.power_on_chip_w < 0.0)
        throw std::invalid_argument("pump.power_on_chip_w must be >= 0");
    if (p.wavelength_nm <= 0.0)
        throw std::invalid_argument("pump.wavelength_nm must be > 0");
}

namespace {

struct Cubic {
    // f(N) = a3 N^3 + a2 N^2 + a1 N - drive
    double a3, a2, a1, drive;

    double operator()(double n) const { return ((a3 * n + a2) * n + a1) * n - drive; }
    double deriv(double n) const { return (3.0 * a3 * n + 2.0 * a2) * n + a1; }
};

double newton_polish(const Cubic& f, double n) {
    // Cardano in doubles leaves a few ulp of slack at these magnitudes; a
    // couple of Newton steps pins the residual far below the 1e-10 contract.
    const double scale = std::max(std::abs(f.drive), 1e-300);
    for (int i = 0; i < 3; ++i) {
        const double fx = f(n);
        if (std::abs(fx) <= 1e-13 * scale) break;
        const double d = f.deriv(n);
        if (d == 0.0) break;
        const double step = fx / d;
        n -= step;
        if (std::abs(step) <= 1e-16 * std::abs(n)) break;
    }
    return n;
}

// Real roots of the monic depressed cubic t^3 + p t + q, ascending.
std::vector<double> depressed_roots(double p, double q) {
    const double disc = -4.0 * p * p * p - 27.0 * q * q;
    std::vector<double> out;
    if (disc > 0.0) {
        // Three distinct real roots: trigonometric form (p < 0 guaranteed).
        const double m = 2.0 * std::sqrt(-p / 3.0);
        double arg = 3.0 * q / (p * m);
        arg = std::clamp(arg, -1.0, 1.0);
        const double phi = std::acos(arg);
        for (int k = 0; k < 3; ++k)
            out.push_back(m * std::cos((phi - 2.0 * kPi * k) / 3.0));
    } else {
        // Single real root: Cardano with the cancellation-safe branch.
        if (p == 0.0 && q == 0.0) {
            out.push_back(0.0);
        } else {
            const double s = std::sqrt(std::max(q * q / 4.0 + p * p * p / 27.0, 0.0));
            const double w = -q / 2.0 - std::copysign(s, q);
            const double u = std::cbrt(w);
            out.push_back(u == 0.0 ? 0.0 : u - p / (3.0 * u));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

bool is_stable(double kappa, double kerr_g, double detuning_rad_per_s,
               double photon_number) {
    const double d2 = detuning_rad_per_s + 4.0 * kerr_g * photon_number;
    const double coupling = 2.0 * kerr_g * photon_number;
    // Eigenvalues are -kappa/2 +- sqrt(coupling^2 - d2^2); both real parts
    // negative iff coupling^2 < d2^2 + (kappa/2)^2.
    return coupling * coupling < d2 * d2 + kappa * kappa / 4.0;
}

std::vector<CavitySolution> steady_state(const DeviceSpec& device,
                                         const PumpSpec& pump,
                                         double direction_power_fraction) {
    validate(device);
    validate(pump);
    if (direction_power_fraction < 0.0 || direction_power_fraction > 1.0)
        throw std::invalid_argument("direction_power_fraction must lie in [0, 1]");

    const Linewidth lw = linewidth_from_q(device.waveguide.wavelength_nm,
                                          device.ring.loaded_q);
    const DecayRates rates = split_decay_rates(lw.kappa_rad_per_s,
                                               device.ring.escape_efficiency);
    const double g = kerr_rate(device.waveguide, device.ring);
    const double p_dir = pump.power_on_chip_w * direction_power_fraction;
    const double omega_p = 2.0 * kPi * kSpeedOfLight / (pump.wavelength_nm * 1e-9);
    const double drive = rates.kappa_ext * p_dir / (kHbar * omega_p);
    return steady_state_rates(lw.kappa_rad_per_s, rates.kappa_ext, g,
                              pump.detuning_rad_per_s, drive);
}

std::vector<CavitySolution> steady_state_rates(double kappa, double kappa_ext,
                                               double kerr_g,
                                               double detuning_rad_per_s,
                                               double drive_photon_rate) {
    if (!(kappa > 0.0))
        throw std::invalid_argument("steady_state: kappa must be > 0");
    if (kappa_ext < 0.0 || kappa_ext > kappa)
        throw std::invalid_argument("steady_state: kappa_ext must lie in [0, kappa]");
    if (kerr_g < 0.0)
        throw std::invalid_argument("steady_state: kerr_g must be >= 0");
    if (drive_photon_rate < 0.0)
        throw std::invalid_argument("steady_state: drive must be >= 0");

    const double g = kerr_g;
    const double delta = detuning_rad_per_s;
    const double drive = drive_photon_rate;
    const double lorentz = kappa * kappa / 4.0 + delta * delta;

    std::vector<double> roots;
    if (drive == 0.0) {
        roots.push_back(0.0);
    } else if (g == 0.0) {
        roots.push_back(drive / lorentz);
    } else {
        // Monic form N^3 + B N^2 + C N + D with the photon number as unknown.
        const double a3 = 4.0 * g * g;
        const double b = delta / g;               // (4 g Delta) / (4 g^2)
        const double c = lorentz / a3;
        const double d = -drive / a3;
        const double p = c - b * b / 3.0;
        const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        const Cubic f{a3, 4.0 * g * delta, lorentz, drive};
        for (double t : depressed_roots(p, q)) {
            double n = t - b / 3.0;
            if (n < 0.0) continue;  // photon numbers only
            roots.push_back(newton_polish(f, n));
        }
        if (roots.empty())
            throw std::runtime_error("steady_state: no physical root found");
        std::sort(roots.begin(), roots.end());
    }

    std::vector<CavitySolution> solutions;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        CavitySolution s;
        s.photon_number = roots[i];
        s.effective_detuning_rad_per_s = delta + 2.0 * g * roots[i];
        // (i Deff + kappa/2) alpha = sqrt(kappa_ext) A_in with real A_in, so
        // arg(alpha) = -arg(kappa/2 + i Deff).
        s.field_phase_rad = -std::atan2(s.effective_detuning_rad_per_s, kappa / 2.0);
        s.branch = roots.size() == 3
                       ? (i == 0 ? Branch::lower : (i == 1 ? Branch::middle : Branch::upper))
                       : Branch::lower;
        s.stable = is_stable(kappa, g, delta, roots[i]) && s.branch != Branch::middle;
        s.kappa = kappa;
        s.kappa_ext = kappa_ext;
        s.kerr_g = g;
        s.detuning_rad_per_s = delta;
        s.drive_photon_rate = drive;
        solutions.push_back(s);
    }
    return solutions;
}

double steady_state_residual(const CavitySolution& s) {
    const double d1 = s.detuning_rad_per_s + 2.0 * s.kerr_g * s.photon_number;
    const double lhs = s.photon_number * (s.kappa * s.kappa / 4.0 + d1 * d1);
    if (s.drive_photon_rate == 0.0) return std::abs(lhs);
    return std::abs(lhs - s.drive_photon_rate) / s.drive_photon_rate;
}

BistabilityThreshold bistability_threshold(const DeviceSpec& device,
                                           double wavelength_nm) {
    validate(device);
    const double g = kerr_rate(device.waveguide, device.ring);
    if (g == 0.0)
        throw std::invalid_argument("no bistability in linear cavity");
    const Linewidth lw = linewidth_from_q(device.waveguide.wavelength_nm,
                                          device.ring.loaded_q);
    const DecayRates rates = split_decay_rates(lw.kappa_rad_per_s,
                                               device.ring.escape_efficiency);
    const double kappa = lw.kappa_rad_per_s;
    const double omega_p = 2.0 * kPi * kSpeedOfLight / (wavelength_nm * 1e-9);

    BistabilityThreshold t;
    t.critical_detuning_rad_per_s = -std::sqrt(3.0) * kappa / 2.0;
    t.critical_photon_number = -t.critical_detuning_rad_per_s / (3.0 * g);
    const double critical_drive = std::sqrt(3.0) * kappa * kappa * kappa / (18.0 * g);
    t.critical_power_w = critical_drive * kHbar * omega_p / rates.kappa_ext;
    return t;
}

}  // namespace sqz
