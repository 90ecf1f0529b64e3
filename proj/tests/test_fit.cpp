#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "sqz/cavity.hpp"
#include "sqz/device.hpp"
#include "sqz/fit.hpp"
#include "sqz/noise.hpp"
#include "sqz/spectrum.hpp"
#include "sqz/trace.hpp"

using namespace sqz;

namespace {

constexpr double kDetuningTrue = -5.9231e9;
constexpr double kEtaMeasTrue = 0.478;

PumpSpec pump_at(double power_w) {
    PumpSpec p;
    p.power_on_chip_w = power_w;
    p.detuning_rad_per_s = kDetuningTrue;
    return p;
}

// Noise-free measurement set at the given powers; per-bin minimum over theta.
std::vector<KerrFitData> synthetic_data(const std::vector<double>& powers_w,
                                        double noise_db, std::uint64_t seed0) {
    const DeviceSpec device;
    const DetectionSpec detection;
    const ThermoNoiseModel quiet;
    const auto freqs = log_frequency_grid(500e6, 2e9, 60);
    std::vector<KerrFitData> data;
    std::uint64_t seed = seed0;
    for (double p : powers_w) {
        const auto set =
            make_synthetic_traces(device, pump_at(p), quiet, detection, kEtaMeasTrue,
                                  0.5, freqs, std::nullopt, noise_db, seed++);
        KerrFitData d;
        d.power_on_chip_w = p;
        d.spectrum = normalize(set.signal, set.shot, set.dark);
        data.push_back(std::move(d));
    }
    return data;
}

double fitted(const FitResult& r, const std::string& name) {
    for (const auto& p : r.parameters) {
        if (p.name == name) return p.value;
    }
    throw std::logic_error("missing parameter " + name);
}

}  // namespace

TEST_CASE("excess noise fit recovers the generator") {
    const auto freqs = log_frequency_grid(1e6, 3e8, 80);

    const auto clean = make_synthetic_excess_spectrum(1.4e6, 1.0, freqs, 0.0, 5);
    const auto fit = fit_excess_noise(clean, 1e6, 3e8);
    CHECK(fit.amplitude_rel_shot_at_1mhz == doctest::Approx(1.4e6).epsilon(1e-9));
    CHECK(fit.floor_rel_shot == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.n_points == 80);
    CHECK(fit.residual_rms_db < 1e-9);

    const auto noisy = make_synthetic_excess_spectrum(1.4e6, 1.0, freqs, 0.02, 5);
    const auto nfit = fit_excess_noise(noisy, 1e6, 3e8);
    CHECK(nfit.amplitude_rel_shot_at_1mhz ==
          doctest::Approx(1.4e6).epsilon(0.05));
    CHECK(nfit.floor_rel_shot == doctest::Approx(1.0).epsilon(0.05));
    CHECK(nfit.covariance[0] > 0.0);
    CHECK(nfit.covariance[3] > 0.0);
    CHECK(nfit.covariance[1] == nfit.covariance[2]);

    // Band restriction drops points outside it.
    const auto banded = fit_excess_noise(noisy, 2e6, 1e8);
    CHECK(banded.n_points < 80);

    CHECK_THROWS_WITH_AS(fit_excess_noise(clean, 3e8, 1e6),
                         "fit_excess_noise: need 0 < band_lo < band_hi",
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(fit_excess_noise(clean, 2.9e8, 3.0e8),
                         "fit_excess_noise: fewer than 4 points in fit band",
                         std::invalid_argument);
}

TEST_CASE("synthetic traces reproduce the fit model exactly") {
    const DeviceSpec device;
    const DetectionSpec detection;
    const ThermoNoiseModel quiet;
    const auto freqs = log_frequency_grid(500e6, 2e9, 25);
    const auto set = make_synthetic_traces(device, pump_at(0.026), quiet, detection,
                                           kEtaMeasTrue, 0.5, freqs, std::nullopt, 0.0, 1);
    const auto norm = normalize(set.signal, set.shot, set.dark);

    const auto setup = default_kerr_fit_setup(device, detection);
    const double g0 = kerr_rate(device.waveguide, device.ring);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        const double model =
            kerr_model_min_db(setup, kDetuningTrue, g0, kEtaMeasTrue,
                              detection.detector_bandwidth_hz, 0.026, freqs[i]);
        CHECK(norm.rel_shot_db[i] == doctest::Approx(model).epsilon(1e-10));
    }
}

TEST_CASE("kerr fit recovers exact parameters from clean data") {
    const auto data = synthetic_data({0.026, 0.039, 0.052}, 0.0, 1);
    const DeviceSpec device;
    auto setup = default_kerr_fit_setup(device, DetectionSpec{});
    const double g0 = kerr_rate(device.waveguide, device.ring);
    // Start away from the truth in every free direction (but within the
    // basin; the cubic response surface has genuine local minima further out).
    setup.detuning.value = -5.5e9;
    setup.kerr_rate.value = 1.3 * g0;
    setup.measurement_efficiency.value = 0.6;

    const auto result = fit_kerr_model(data, setup);
    CHECK(result.converged);
    CHECK(result.iterations > 0);
    CHECK(fitted(result, "detuning_rad_per_s") ==
          doctest::Approx(kDetuningTrue).epsilon(1e-8));
    CHECK(fitted(result, "kerr_rate_rad_per_s") == doctest::Approx(g0).epsilon(1e-8));
    CHECK(fitted(result, "measurement_efficiency") ==
          doctest::Approx(kEtaMeasTrue).epsilon(1e-8));
    CHECK(result.residual_rms_db < 1e-8);

    // The detector bandwidth was held fixed at its prior.
    for (const auto& p : result.parameters) {
        if (p.name == "detector_bandwidth_hz") {
            CHECK(p.fixed);
            CHECK(p.value == DetectionSpec{}.detector_bandwidth_hz);
        }
    }
    REQUIRE(result.free_names.size() == 3);
    REQUIRE(result.covariance.size() == 9);
    CHECK(result.covariance[0] >= 0.0);
    CHECK(result.covariance[4] >= 0.0);
    CHECK(result.covariance[8] >= 0.0);
}

TEST_CASE("kerr fit from a single power") {
    const auto data = synthetic_data({0.026}, 0.0, 9);
    const auto setup = default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{});
    const auto result = fit_kerr_model(data, setup);
    CHECK(result.converged);
    const double g0 = kerr_rate(DeviceSpec{}.waveguide, DeviceSpec{}.ring);
    CHECK(fitted(result, "detuning_rad_per_s") ==
          doctest::Approx(kDetuningTrue).epsilon(1e-6));
    CHECK(fitted(result, "kerr_rate_rad_per_s") == doctest::Approx(g0).epsilon(1e-6));
    CHECK(fitted(result, "measurement_efficiency") ==
          doctest::Approx(kEtaMeasTrue).epsilon(1e-6));
}

TEST_CASE("kerr fit stays within stated noise tolerances") {
    const auto data = synthetic_data({0.026, 0.039, 0.052}, 0.005, 11);
    const auto setup = default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{});
    const auto result = fit_kerr_model(data, setup);
    CHECK(result.converged);
    const double g0 = kerr_rate(DeviceSpec{}.waveguide, DeviceSpec{}.ring);
    CHECK(fitted(result, "detuning_rad_per_s") ==
          doctest::Approx(kDetuningTrue).epsilon(0.10));
    CHECK(fitted(result, "kerr_rate_rad_per_s") == doctest::Approx(g0).epsilon(0.10));
    CHECK(fitted(result, "measurement_efficiency") ==
          doctest::Approx(kEtaMeasTrue).epsilon(0.10));
}

TEST_CASE("bounded parameter lands on its bound with the flag set") {
    const auto data = synthetic_data({0.026, 0.039, 0.052}, 0.0, 1);
    auto setup = default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{});
    setup.measurement_efficiency = {"measurement_efficiency", 0.25, 1e-3, 0.3};
    setup.max_iterations = 300;

    // The unconstrained optimum (0.478) lies outside the box, so the fit may
    // settle on the boundary or exhaust its iterations crawling along it;
    // either way the returned point must flag the active bound.
    FitResult result;
    try {
        result = fit_kerr_model(data, setup);
    } catch (const FitDivergence& e) {
        result = e.best();
    }
    bool saw = false;
    for (const auto& p : result.parameters) {
        if (p.name != "measurement_efficiency") continue;
        saw = true;
        CHECK(p.value == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(p.at_upper_bound);
        CHECK_FALSE(p.at_lower_bound);
    }
    CHECK(saw);
}

TEST_CASE("divergence carries the best point visited") {
    const auto data = synthetic_data({0.026}, 0.0, 2);
    auto setup = default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{});
    setup.detuning.value = -4.9 * linewidth_from_q(1550.0, 238000.0).kappa_rad_per_s;
    setup.kerr_rate.value = 50.0 * kerr_rate(DeviceSpec{}.waveguide, DeviceSpec{}.ring);
    setup.measurement_efficiency.value = 0.99;
    setup.max_iterations = 1;

    try {
        fit_kerr_model(data, setup);
        FAIL("expected FitDivergence");
    } catch (const FitDivergence& e) {
        CHECK(std::string(e.what()) ==
              "fit_kerr_model: no convergence after max iterations");
        CHECK_FALSE(e.best().converged);
        CHECK(e.best().parameters.size() == 4);
        CHECK(e.best().residual_rms_db > 0.0);
    }
}

TEST_CASE("kerr fit input validation") {
    const auto data = synthetic_data({0.026}, 0.0, 3);
    const auto setup = default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{});

    CHECK_THROWS_WITH_AS(fit_kerr_model({}, setup), "fit_kerr_model: no spectra provided",
                         std::invalid_argument);

    auto bad_power = data;
    bad_power[0].power_on_chip_w = 0.0;
    CHECK_THROWS_WITH_AS(fit_kerr_model(bad_power, setup),
                         "fit_kerr_model: power must be > 0", std::invalid_argument);

    auto bad_band = setup;
    bad_band.band_lo_hz = 2e9;
    bad_band.band_hi_hz = 5e8;
    CHECK_THROWS_WITH_AS(fit_kerr_model(data, bad_band),
                         "fit_kerr_model: need 0 < band_lo < band_hi",
                         std::invalid_argument);

    auto off_band = setup;
    off_band.band_lo_hz = 3e9;
    off_band.band_hi_hz = 4e9;
    CHECK_THROWS_WITH_AS(fit_kerr_model(data, off_band),
                         "fit_kerr_model: no data in fit band", std::invalid_argument);

    auto zero_start = setup;
    zero_start.detuning.value = 0.0;
    CHECK_THROWS_WITH_AS(
        fit_kerr_model(data, zero_start),
        "fit_kerr_model: free parameter \"detuning_rad_per_s\" needs a nonzero starting value",
        std::invalid_argument);

    auto oob_start = setup;
    oob_start.kerr_rate.value = 1000.0 * kerr_rate(DeviceSpec{}.waveguide, DeviceSpec{}.ring);
    CHECK_THROWS_WITH_AS(
        fit_kerr_model(data, oob_start),
        "fit_kerr_model: starting value of \"kerr_rate_rad_per_s\" violates its bounds",
        std::invalid_argument);
}

TEST_CASE("fit result serializes to parseable json") {
    const auto data = synthetic_data({0.026}, 0.0, 4);
    const auto result = fit_kerr_model(data, default_kerr_fit_setup(DeviceSpec{}, DetectionSpec{}));
    const auto j = nlohmann::json::parse(fit_result_to_json(result));
    CHECK(j["converged"].get<bool>() == result.converged);
    CHECK(j["iterations"].get<int>() == result.iterations);
    CHECK(j["residual_rms_db"].get<double>() == result.residual_rms_db);
    REQUIRE(j["parameters"].is_array());
    CHECK(j["parameters"].size() == 4);
    CHECK(j["parameters"][0]["name"].get<std::string>() == result.parameters[0].name);
    CHECK(j["parameters"][0]["value"].get<double>() == result.parameters[0].value);
    REQUIRE(j["covariance_order"].is_array());
    CHECK(j["covariance_order"].size() == result.free_names.size());
    CHECK(j["covariance_order"][0].get<std::string>() == result.free_names[0]);
    REQUIRE(j["covariance"].is_array());  // nested rows over the free parameters
    REQUIRE(j["covariance"].size() == result.free_names.size());
    CHECK(j["covariance"][0].size() == result.free_names.size());
    CHECK(j["covariance"][0][0].get<double>() == result.covariance[0]);
}

TEST_CASE("synthetic generator validation") {
    CHECK_THROWS_AS(make_synthetic_excess_spectrum(-1.0, 1.0, {1e6, 2e6}, 0.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_synthetic_excess_spectrum(1.0, 0.0, {1e6, 2e6}, 0.0, 1),
                    std::invalid_argument);

    const DeviceSpec device;
    const DetectionSpec detection;
    const ThermoNoiseModel quiet;
    CHECK_THROWS_AS(make_synthetic_traces(device, pump_at(0.026), quiet, detection, 0.0,
                                          0.5, {1e6}, std::nullopt, 0.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS(make_synthetic_traces(device, pump_at(0.026), quiet, detection,
                                               0.5, 0.5, {}, std::nullopt, 0.0, 1),
                         "make_synthetic_traces: empty frequency grid",
                         std::invalid_argument);

    // A locked angle records that quadrature rather than the minimum.
    const auto freqs = log_frequency_grid(5e8, 2e9, 10);
    const auto locked = make_synthetic_traces(device, pump_at(0.026), quiet, detection,
                                              0.478, 0.5, freqs, 1.0, 0.0, 1);
    const auto roaming = make_synthetic_traces(device, pump_at(0.026), quiet, detection,
                                               0.478, 0.5, freqs, std::nullopt, 0.0, 1);
    const auto n_locked = normalize(locked.signal, locked.shot, locked.dark);
    const auto n_roaming = normalize(roaming.signal, roaming.shot, roaming.dark);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        CHECK(n_roaming.rel_shot_db[i] <= n_locked.rel_shot_db[i] + 1e-12);
    }
}
