#include "sqz/spectrum.hpp"

#include <cstddef>

#include "sqz/constants.hpp"

// The parallel evaluator writes each (frequency, angle) slot independently
// through the shared spectrum_point kernel: no reductions, no shared mutable
// state, static schedule. Values are therefore bit-identical to the serial
// evaluator for any thread count.

namespace sqz {

QuadratureSpectrum fluctuation_spectrum_parallel(const DeviceSpec& device,
                                                 const PumpSpec& pump,
                                                 const CavitySolution& solution,
                                                 const std::vector<double>& frequencies_hz,
                                                 const std::vector<double>& angles_rad) {
#ifndef _OPENMP
    return fluctuation_spectrum(device, pump, solution, frequencies_hz, angles_rad);
#else
    detail::check_spectrum_inputs(device, pump, solution, frequencies_hz, angles_rad);

    const LinearizedCavity lc = linearize(solution);
    QuadratureSpectrum out;
    out.frequencies_hz = frequencies_hz;
    out.angles_rad = angles_rad;
    out.values_rel_shot.resize(frequencies_hz.size() * angles_rad.size());
    const std::ptrdiff_t n_freq = static_cast<std::ptrdiff_t>(frequencies_hz.size());
    const std::ptrdiff_t n_angle = static_cast<std::ptrdiff_t>(angles_rad.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n_freq; ++i) {
        const double omega = 2.0 * kPi * frequencies_hz[static_cast<std::size_t>(i)];
        double* row = out.values_rel_shot.data() + i * n_angle;
        for (std::ptrdiff_t j = 0; j < n_angle; ++j) {
            row[j] = spectrum_point(lc, omega, angles_rad[static_cast<std::size_t>(j)]);
        }
    }
    return out;
#endif
}

}  // namespace sqz
