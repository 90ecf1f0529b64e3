#ifndef SQZ_TRACE_HPP
#define SQZ_TRACE_HPP

#include <string>
#include <vector>

namespace sqz {

enum class TraceLabel { signal, shot, dark };

std::string to_string(TraceLabel label);
TraceLabel trace_label_from_string(const std::string& text);

// One analyzer sweep. The variance vector is an in-memory annotation filled
// by average_traces (per-bin sample variance of the mean, linear mW domain);
// it does not survive serialization.
struct EsaTrace {
    std::vector<double> frequencies_hz;      // strictly increasing
    std::vector<double> power_dbm;           // same length as frequencies
    double rbw_hz = 0.0;                     // resolution bandwidth
    double vbw_hz = 0.0;                     // video bandwidth
    double sweep_time_s = 0.0;               // sweep duration
    TraceLabel label = TraceLabel::signal;
    int n_averaged = 1;                      // how many sweeps went into this trace
    std::vector<double> variance_mw2;        // empty unless computed by averaging
};

void validate(const EsaTrace& trace);

// Trace file grammar: '#key=value' metadata lines (rbw_hz, vbw_hz,
// sweep_time_s, label; optional n_averaged), then 'freq_hz,power_dbm' rows.
// Numbers use shortest round-trip formatting; parse(serialize(t)) == t.
EsaTrace parse_trace(const std::string& text);
EsaTrace parse_trace_file(const std::string& path);
std::string serialize_trace(const EsaTrace& trace);

// Per-bin average in linear power (mW), reconverted to dBm. Inputs must share
// grid, label and analyzer settings. Sample variance of the mean is recorded
// when at least three single sweeps are combined.
EsaTrace average_traces(const std::vector<EsaTrace>& traces);

struct NormalizedSpectrum {
    std::vector<double> frequencies_hz;
    std::vector<double> rel_shot_db;      // 10 log10((P_sig - P_dark) / (P_shot - P_dark))
    int n_averaged = 1;                   // from the signal trace
    std::vector<double> ratio_variance;   // per-bin variance of the linear ratio; may be empty
};

void validate(const NormalizedSpectrum& spectrum);

// Dark-corrected shot-noise normalization of a (signal, shot, dark) triple.
NormalizedSpectrum normalize(const EsaTrace& signal, const EsaTrace& shot,
                             const EsaTrace& dark);

// CSV rendering (freq_hz,rel_shot_db, plus ratio_variance when present).
std::string normalized_to_csv(const NormalizedSpectrum& spectrum);

}  // namespace sqz

#endif
