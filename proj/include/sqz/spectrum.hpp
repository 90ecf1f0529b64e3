#ifndef SQZ_SPECTRUM_HPP
#define SQZ_SPECTRUM_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"

namespace sqz {

// Working point of the linearized fluctuation model, fully determined by a
// stable steady state.
struct LinearizedCavity {
    double kappa = 0.0;                // total decay rate, rad/s
    double kappa_ext = 0.0;            // external coupling rate, rad/s
    double kerr_g = 0.0;               // single photon Kerr shift, rad/s
    double photon_number = 0.0;        // |alpha|^2
    double detuning_rad_per_s = 0.0;   // pump detuning Delta
    double field_phase_rad = 0.0;      // arg(alpha)
};

LinearizedCavity linearize(const CavitySolution& solution);

// Output quadrature noise power S(Omega, theta) relative to shot noise for
// one sideband frequency (rad/s) and one quadrature angle. Defined in a
// single translation unit so the serial and parallel evaluators execute the
// exact same instruction sequence per point (bit-identical results).
double spectrum_point(const LinearizedCavity& lc, double omega_rad_per_s,
                      double theta_rad);

struct QuadratureSpectrum {
    std::vector<double> frequencies_hz;   // sideband grid, Omega / 2 pi
    std::vector<double> angles_rad;       // quadrature angle grid
    std::vector<double> values_rel_shot;  // row-major: [i_freq * n_angles + i_angle]

    std::size_t n_freq() const { return frequencies_hz.size(); }
    std::size_t n_angle() const { return angles_rad.size(); }
    double at(std::size_t i_freq, std::size_t i_angle) const {
        return values_rel_shot[i_freq * angles_rad.size() + i_angle];
    }
};

// Default grids: logarithmic 1 MHz - 5 GHz, 400 points; 181 angles over [0, pi).
std::vector<double> default_frequency_grid();
std::vector<double> default_angle_grid();
std::vector<double> log_frequency_grid(double f_min_hz, double f_max_hz, std::size_t n);
std::vector<double> angle_grid(std::size_t n);

// Serial reference evaluator. The working point is taken from the solution,
// which carries the rates it was solved with; device and pump are validated
// for consistency of the call.
QuadratureSpectrum fluctuation_spectrum(const DeviceSpec& device, const PumpSpec& pump,
                                        const CavitySolution& solution,
                                        const std::vector<double>& frequencies_hz,
                                        const std::vector<double>& angles_rad);

// OpenMP evaluator; falls back to the serial loop when OpenMP is absent.
// Produces bit-identical values to fluctuation_spectrum for all inputs.
QuadratureSpectrum fluctuation_spectrum_parallel(const DeviceSpec& device,
                                                 const PumpSpec& pump,
                                                 const CavitySolution& solution,
                                                 const std::vector<double>& frequencies_hz,
                                                 const std::vector<double>& angles_rad);

struct QuadratureExtrema {
    double theta_min_rad = 0.0;  // angle of minimum noise, in [0, pi)
    double s_min = 1.0;
    double theta_max_rad = 0.0;  // theta_min + pi/2 folded into [0, pi)
    double s_max = 1.0;
};

// Extrema over theta at one frequency of the spectrum. S(theta) is an exact
// sinusoid in 2 theta, so the extrema come from the least-squares sinusoid
// through the sampled angles rather than the coarser grid minimum.
QuadratureExtrema optimal_quadrature(const QuadratureSpectrum& spectrum,
                                     double frequency_hz);

// Same extrema straight from the model, using three exact angle evaluations.
QuadratureExtrema quadrature_extrema(const LinearizedCavity& lc,
                                     double omega_rad_per_s);

struct SweepRow {
    double power_w = 0.0;
    double frequency_hz = 0.0;
    double s_min = 1.0;
    double s_max = 1.0;
};

// Batch steady_state + fluctuation_spectrum over a power list; rows ordered
// by (P, Omega). Simulates the lowest stable branch. Element failures are
// rethrown with the offending power attached.
std::vector<SweepRow> sweep(const DeviceSpec& device, const PumpSpec& pump_template,
                            const std::vector<double>& powers_w,
                            const std::vector<double>& frequencies_hz,
                            const std::vector<double>& angles_rad,
                            double direction_power_fraction);

// CSV round-trip (columns freq_hz,theta_rad,s_rel_shot); shortest-round-trip
// number formatting, bit-exact on reparse.
std::string spectrum_to_csv(const QuadratureSpectrum& s);
QuadratureSpectrum spectrum_from_csv(const std::string& text);

namespace detail {
// Shared input validation for both spectrum evaluators.
void check_spectrum_inputs(const DeviceSpec& device, const PumpSpec& pump,
                           const CavitySolution& solution,
                           const std::vector<double>& frequencies_hz,
                           const std::vector<double>& angles_rad);
}  // namespace detail

}  // namespace sqz

#endif
