#include <chrono>
#include <cstdio>
#include <cstring>

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"
#include "sqz/spectrum.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main() {
    sqz::DeviceSpec device;  // defaults: the 30 um SiN ring
    sqz::PumpSpec pump;
    pump.power_on_chip_w = 0.080;
    pump.detuning_rad_per_s = -5.9231e9;

    const auto solutions = sqz::steady_state(device, pump, 0.5);
    const sqz::CavitySolution* working = nullptr;
    for (const auto& s : solutions) {
        if (s.stable) {
            working = &s;
            break;
        }
    }
    if (working == nullptr) {
        std::fprintf(stderr, "no stable working point\n");
        return 1;
    }

    const auto freqs = sqz::default_frequency_grid();
    const auto angles = sqz::default_angle_grid();
    const int repeats = 5;

#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; parallel path falls back to serial\n");
#endif
    std::printf("grid: %zu frequencies x %zu angles = %zu points, %d repeats\n",
                freqs.size(), angles.size(), freqs.size() * angles.size(), repeats);

    sqz::QuadratureSpectrum serial;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) {
        serial = sqz::fluctuation_spectrum(device, pump, *working, freqs, angles);
    }
    const double serial_ms = elapsed_ms(t0) / repeats;

    sqz::QuadratureSpectrum parallel;
    t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) {
        parallel = sqz::fluctuation_spectrum_parallel(device, pump, *working, freqs, angles);
    }
    const double parallel_ms = elapsed_ms(t0) / repeats;

    const bool identical =
        serial.values_rel_shot.size() == parallel.values_rel_shot.size() &&
        std::memcmp(serial.values_rel_shot.data(), parallel.values_rel_shot.data(),
                    serial.values_rel_shot.size() * sizeof(double)) == 0;

    std::printf("serial:   %9.3f ms/eval\n", serial_ms);
    std::printf("parallel: %9.3f ms/eval\n", parallel_ms);
    std::printf("speedup:  %9.2fx\n", parallel_ms > 0.0 ? serial_ms / parallel_ms : 0.0);
    std::printf("bit-identical: %s\n", identical ? "yes" : "NO");
    return identical ? 0 : 1;
}
