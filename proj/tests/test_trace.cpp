#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sqz/constants.hpp"
#include "sqz/trace.hpp"

using namespace sqz;

namespace {

EsaTrace make_trace(TraceLabel label, std::vector<double> powers) {
    EsaTrace t;
    t.label = label;
    t.rbw_hz = 1e5;
    t.vbw_hz = 20.0;
    t.sweep_time_s = 10.0;
    t.power_dbm = std::move(powers);
    t.frequencies_hz.resize(t.power_dbm.size());
    for (std::size_t i = 0; i < t.frequencies_hz.size(); ++i) {
        t.frequencies_hz[i] = 1e6 * static_cast<double>(i + 1);
    }
    return t;
}

}  // namespace

TEST_CASE("trace labels") {
    CHECK(to_string(TraceLabel::signal) == "signal");
    CHECK(to_string(TraceLabel::shot) == "shot");
    CHECK(to_string(TraceLabel::dark) == "dark");
    CHECK(trace_label_from_string("signal") == TraceLabel::signal);
    CHECK(trace_label_from_string("shot") == TraceLabel::shot);
    CHECK(trace_label_from_string("dark") == TraceLabel::dark);
    CHECK_THROWS_WITH_AS(trace_label_from_string("noise"),
                         "trace label must be one of signal, shot, dark; got \"noise\"",
                         std::runtime_error);
}

TEST_CASE("serialize then parse is the identity") {
    EsaTrace t = make_trace(TraceLabel::shot, {-47.25, -47.0, -46.875e0, -12.3456789e1});
    t.frequencies_hz = {1e6, 2.345678912345e6, 1e8, 4.9e9};
    t.n_averaged = 7;

    const std::string text = serialize_trace(t);
    const EsaTrace back = parse_trace(text);
    CHECK(back.frequencies_hz == t.frequencies_hz);  // bit exact
    CHECK(back.power_dbm == t.power_dbm);
    CHECK(back.rbw_hz == t.rbw_hz);
    CHECK(back.vbw_hz == t.vbw_hz);
    CHECK(back.sweep_time_s == t.sweep_time_s);
    CHECK(back.label == t.label);
    CHECK(back.n_averaged == 7);

    // The variance annotation is in-memory only.
    EsaTrace annotated = t;
    annotated.variance_mw2.assign(t.frequencies_hz.size(), 1e-6);
    CHECK(parse_trace(serialize_trace(annotated)).variance_mw2.empty());

    // n_averaged == 1 stays implicit.
    EsaTrace single = make_trace(TraceLabel::dark, {-60.0, -60.5});
    CHECK(serialize_trace(single).find("n_averaged") == std::string::npos);
    CHECK(parse_trace(serialize_trace(single)).n_averaged == 1);
}

TEST_CASE("parse errors name the problem and the line") {
    const std::string good =
        "#rbw_hz=1e+05\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n1e+06,-47\n2e+06,-47.5\n";
    CHECK_NOTHROW(parse_trace(good));

    CHECK_THROWS_WITH(parse_trace("#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n1e6,-47\n"),
                      "parse_trace: missing metadata key \"rbw_hz\"");
    CHECK_THROWS_WITH(parse_trace("#rbw_hz=1e5\n#sweep_time_s=10\n#label=shot\n1e6,-47\n"),
                      "parse_trace: missing metadata key \"vbw_hz\"");
    CHECK_THROWS_WITH(parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#label=shot\n1e6,-47\n"),
                      "parse_trace: missing metadata key \"sweep_time_s\"");
    CHECK_THROWS_WITH(parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n1e6,-47\n"),
                      "parse_trace: missing metadata key \"label\"");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "#pilot=3\n1e6,-47\n"),
        "parse_trace: unknown metadata key \"pilot\" at line 5");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "1e6,-47\n#n_averaged=2\n"),
        "parse_trace: metadata after data rows at line 6");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz 1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n1e6,-47\n"),
        "parse_trace: malformed metadata line 1");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=wide\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n1e6,-47\n"),
        "parse_trace: non-numeric value for metadata key \"rbw_hz\" at line 1");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "#n_averaged=2.5\n1e6,-47\n"),
        "parse_trace: n_averaged must be a positive integer at line 5");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "1e6,-47,9\n"),
        "parse_trace: expected freq_hz,power_dbm at line 5");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "1e6,tall\n"),
        "parse_trace: non-numeric row at line 5");
    CHECK_THROWS_WITH(
        parse_trace("#rbw_hz=1e5\n#vbw_hz=20\n#sweep_time_s=10\n#label=shot\n"
                    "2e6,-47\n1e6,-47\n"),
        "parse_trace: non-monotone grid at line 6");
}

TEST_CASE("trace file io") {
    const std::string path = "trace_io_roundtrip.csv";
    EsaTrace t = make_trace(TraceLabel::signal, {-46.5, -46.25, -46.125});
    {
        std::ofstream out(path, std::ios::binary);
        out << serialize_trace(t);
    }
    const EsaTrace back = parse_trace_file(path);
    CHECK(back.power_dbm == t.power_dbm);
    std::remove(path.c_str());

    CHECK_THROWS_WITH(parse_trace_file("no_such_trace.csv"),
                      "cannot open trace file: no_such_trace.csv");
}

TEST_CASE("trace validation") {
    EsaTrace t = make_trace(TraceLabel::signal, {-47.0, -46.0});
    CHECK_NOTHROW(validate(t));

    EsaTrace bad = t;
    bad.power_dbm.pop_back();
    CHECK_THROWS_WITH_AS(validate(bad), "EsaTrace: frequency and power lengths differ",
                         std::invalid_argument);
    bad = t;
    bad.frequencies_hz.clear();
    bad.power_dbm.clear();
    CHECK_THROWS_WITH_AS(validate(bad), "EsaTrace: empty trace", std::invalid_argument);
    bad = t;
    bad.frequencies_hz[1] = bad.frequencies_hz[0];
    CHECK_THROWS_WITH_AS(validate(bad), "EsaTrace: non-monotone grid at index 1",
                         std::invalid_argument);
    bad = t;
    bad.rbw_hz = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = t;
    bad.n_averaged = 0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = t;
    bad.variance_mw2 = {1e-6};
    CHECK_THROWS_WITH_AS(validate(bad), "EsaTrace: variance length mismatch",
                         std::invalid_argument);
}

TEST_CASE("averaging works in linear power") {
    const EsaTrace a = make_trace(TraceLabel::shot, {0.0, 0.0});
    const EsaTrace b = make_trace(TraceLabel::shot, {-10.0, -10.0});
    const EsaTrace mean = average_traces({a, b});
    // (1 mW + 0.1 mW) / 2 = 0.55 mW, not the -5 dBm a dB-domain average gives.
    CHECK(mean.power_dbm[0] == doctest::Approx(-2.5963731051).epsilon(1e-9));
    CHECK(mean.n_averaged == 2);
    CHECK(mean.variance_mw2.empty());  // needs at least three single sweeps

    // Prior averages enter with their weight.
    EsaTrace a2 = a;
    a2.n_averaged = 2;
    const EsaTrace weighted = average_traces({a2, b});
    CHECK(linear_from_db(weighted.power_dbm[0]) ==
          doctest::Approx((2.0 * 1.0 + 0.1) / 3.0).epsilon(1e-12));
    CHECK(weighted.n_averaged == 3);
    CHECK(weighted.variance_mw2.empty());  // mixed weights carry no sample variance

    const EsaTrace c = make_trace(TraceLabel::shot, {-3.0, -3.0});
    const EsaTrace three = average_traces({a, b, c});
    CHECK(three.n_averaged == 3);
    REQUIRE(three.variance_mw2.size() == 2);
    // Sample variance of the mean over {1, 0.1, 10^-0.3} mW.
    const double m = (1.0 + 0.1 + std::pow(10.0, -0.3)) / 3.0;
    double ss = 0.0;
    for (double p : {1.0, 0.1, std::pow(10.0, -0.3)}) ss += (p - m) * (p - m);
    CHECK(three.variance_mw2[0] == doctest::Approx(ss / (2.0 * 3.0)).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(average_traces({}), "average_traces: empty trace list",
                         std::invalid_argument);
    EsaTrace shifted = b;
    shifted.frequencies_hz[0] *= 1.5;
    CHECK_THROWS_WITH_AS(average_traces({a, shifted}), "average_traces: grid mismatch",
                         std::invalid_argument);
    EsaTrace relabeled = b;
    relabeled.label = TraceLabel::dark;
    CHECK_THROWS_WITH_AS(average_traces({a, relabeled}), "average_traces: label mismatch",
                         std::invalid_argument);
    EsaTrace retuned = b;
    retuned.rbw_hz = 2e5;
    CHECK_THROWS_WITH_AS(average_traces({a, retuned}),
                         "average_traces: analyzer settings mismatch",
                         std::invalid_argument);
}

TEST_CASE("shot noise normalization") {
    // Construct a triple whose ratio is exactly -0.45 dB in every bin.
    const double dark_mw = 1e-3;
    const double den_mw = 1.0;
    const double ratio = linear_from_db(-0.45);
    EsaTrace dark = make_trace(TraceLabel::dark, {});
    EsaTrace shot = make_trace(TraceLabel::shot, {});
    EsaTrace signal = make_trace(TraceLabel::signal, {});
    dark.power_dbm = {db_from_linear(dark_mw), db_from_linear(dark_mw)};
    dark.frequencies_hz = {1e6, 2e6};
    shot.power_dbm = {db_from_linear(den_mw + dark_mw), db_from_linear(den_mw + dark_mw)};
    shot.frequencies_hz = dark.frequencies_hz;
    signal.power_dbm = {db_from_linear(ratio * den_mw + dark_mw),
                        db_from_linear(ratio * den_mw + dark_mw)};
    signal.frequencies_hz = dark.frequencies_hz;

    const auto norm = normalize(signal, shot, dark);
    REQUIRE(norm.frequencies_hz.size() == 2);
    CHECK(norm.rel_shot_db[0] == doctest::Approx(-0.45).epsilon(1e-12));
    CHECK(norm.rel_shot_db[1] == doctest::Approx(-0.45).epsilon(1e-12));
    CHECK(norm.n_averaged == 1);
    CHECK(norm.ratio_variance.empty());

    // The signal's variance annotation propagates as var / den^2.
    EsaTrace annotated = signal;
    annotated.variance_mw2 = {4e-6, 9e-6};
    const auto with_var = normalize(annotated, shot, dark);
    REQUIRE(with_var.ratio_variance.size() == 2);
    CHECK(with_var.ratio_variance[0] ==
          doctest::Approx(4e-6 / (den_mw * den_mw)).epsilon(1e-12));
    CHECK(with_var.ratio_variance[1] ==
          doctest::Approx(9e-6 / (den_mw * den_mw)).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(normalize(shot, shot, dark),
                         "normalize: first argument must be labeled signal",
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(normalize(signal, dark, dark),
                         "normalize: second argument must be labeled shot",
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(normalize(signal, shot, signal),
                         "normalize: third argument must be labeled dark",
                         std::invalid_argument);
    EsaTrace offgrid = shot;
    offgrid.frequencies_hz[1] = 3e6;
    CHECK_THROWS_WITH_AS(normalize(signal, offgrid, dark), "normalize: grid mismatch",
                         std::invalid_argument);

    // Shot at the dark level has no clearance.
    EsaTrace buried = shot;
    buried.power_dbm = dark.power_dbm;
    CHECK_THROWS_WITH_AS(normalize(signal, buried, dark),
                         "insufficient dark-noise clearance at bin 0", std::runtime_error);
    EsaTrace weak = signal;
    weak.power_dbm = {db_from_linear(0.5 * dark_mw), db_from_linear(0.5 * dark_mw)};
    CHECK_THROWS_WITH_AS(normalize(weak, shot, dark),
                         "normalize: signal not above dark noise at bin 0",
                         std::runtime_error);
}

TEST_CASE("normalized spectrum csv") {
    NormalizedSpectrum n;
    n.frequencies_hz = {1e6, 2e6};
    n.rel_shot_db = {-0.45, 0.25};
    CHECK(normalized_to_csv(n) == "freq_hz,rel_shot_db\n1e+06,-0.45\n2e+06,0.25\n");

    n.ratio_variance = {1e-6, 2e-6};
    CHECK(normalized_to_csv(n) ==
          "freq_hz,rel_shot_db,ratio_variance\n1e+06,-0.45,1e-06\n2e+06,0.25,2e-06\n");

    NormalizedSpectrum bad = n;
    bad.rel_shot_db.pop_back();
    CHECK_THROWS_AS(normalized_to_csv(bad), std::invalid_argument);
    bad = n;
    bad.rel_shot_db[0] = std::nan("");
    CHECK_THROWS_WITH_AS(validate(bad), "NormalizedSpectrum: non-finite value",
                         std::invalid_argument);
}
