#ifndef SQZ_CAVITY_HPP
#define SQZ_CAVITY_HPP

#include <vector>

#include "sqz/device.hpp"

namespace sqz {

struct PumpSpec {
    double power_on_chip_w = 0.0;       // in the input waveguide, before the loop splitter
    double detuning_rad_per_s = 0.0;    // Delta = omega_pump - omega_cavity
    double wavelength_nm = 1550.0;
};

void validate(const PumpSpec& p);

enum class Branch { lower, middle, upper };

// One real root of the steady-state cubic for the pumped Kerr ring.
struct CavitySolution {
    double photon_number = 0.0;              // |alpha|^2
    double field_phase_rad = 0.0;            // arg(alpha)
    double effective_detuning_rad_per_s = 0.0;  // Delta + 2 g |alpha|^2
    Branch branch = Branch::lower;
    bool stable = true;

    // Working-point context carried along so downstream spectra need no
    // re-derivation.
    double kappa = 0.0;
    double kappa_ext = 0.0;
    double kerr_g = 0.0;
    double detuning_rad_per_s = 0.0;
    double drive_photon_rate = 0.0;           // E = kappa_ext P_dir / (hbar omega_p)
};

// Solve |a|^2 [ (kappa/2)^2 + (Delta + 2 g |a|^2)^2 ] = kappa_ext P_dir /
// (hbar omega_p) for all real roots, ordered by photon number ascending.
// direction_power_fraction scales the on-chip power to the share one Sagnac
// direction receives (0.5 for a balanced loop).
std::vector<CavitySolution> steady_state(const DeviceSpec& device,
                                         const PumpSpec& pump,
                                         double direction_power_fraction);

// Same solver on bare rates; the device overload delegates here. Used where
// g and Delta are fit parameters rather than device-derived quantities.
std::vector<CavitySolution> steady_state_rates(double kappa, double kappa_ext,
                                               double kerr_g,
                                               double detuning_rad_per_s,
                                               double drive_photon_rate);

// Residual of the defining cubic, relative to the drive term. Every returned
// solution keeps this below 1e-10.
double steady_state_residual(const CavitySolution& s);

// Stability from the eigenvalues of the linearized 2x2 fluctuation matrix at
// Omega = 0: stable iff both real parts are negative.
bool is_stable(double kappa, double kerr_g, double detuning_rad_per_s,
               double photon_number);

struct BistabilityThreshold {
    double critical_power_w = 0.0;        // per-direction drive power at the knee
    double critical_detuning_rad_per_s = 0.0;  // -sqrt(3) kappa / 2
    double critical_photon_number = 0.0;
};

// Parameters where the cubic's discriminant first vanishes. Below the
// critical power there is exactly one real root at every detuning.
BistabilityThreshold bistability_threshold(const DeviceSpec& device,
                                           double wavelength_nm);

}  // namespace sqz

#endif
