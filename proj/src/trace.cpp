#include "sqz/trace.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "sqz/constants.hpp"

namespace sqz {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

std::optional<double> try_parse_double(const std::string& token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    return v;
}

double metadata_number(const std::string& key, const std::string& value,
                       std::size_t line_no) {
    auto parsed = try_parse_double(value);
    if (!parsed) {
        throw std::runtime_error("parse_trace: non-numeric value for metadata key \"" +
                                 key + "\" at line " + std::to_string(line_no));
    }
    return *parsed;
}

}  // namespace

std::string to_string(TraceLabel label) {
    switch (label) {
        case TraceLabel::signal: return "signal";
        case TraceLabel::shot: return "shot";
        case TraceLabel::dark: return "dark";
    }
    throw std::logic_error("unreachable trace label");
}

TraceLabel trace_label_from_string(const std::string& text) {
    if (text == "signal") return TraceLabel::signal;
    if (text == "shot") return TraceLabel::shot;
    if (text == "dark") return TraceLabel::dark;
    throw std::runtime_error("trace label must be one of signal, shot, dark; got \"" +
                             text + "\"");
}

void validate(const EsaTrace& trace) {
    if (trace.frequencies_hz.size() != trace.power_dbm.size()) {
        throw std::invalid_argument("EsaTrace: frequency and power lengths differ");
    }
    if (trace.frequencies_hz.empty()) {
        throw std::invalid_argument("EsaTrace: empty trace");
    }
    for (std::size_t i = 1; i < trace.frequencies_hz.size(); ++i) {
        if (!(trace.frequencies_hz[i] > trace.frequencies_hz[i - 1])) {
            throw std::invalid_argument("EsaTrace: non-monotone grid at index " +
                                        std::to_string(i));
        }
    }
    if (!(trace.rbw_hz > 0.0)) {
        throw std::invalid_argument("EsaTrace: rbw_hz must be > 0");
    }
    if (!(trace.vbw_hz > 0.0)) {
        throw std::invalid_argument("EsaTrace: vbw_hz must be > 0");
    }
    if (!(trace.sweep_time_s > 0.0)) {
        throw std::invalid_argument("EsaTrace: sweep_time_s must be > 0");
    }
    if (trace.n_averaged < 1) {
        throw std::invalid_argument("EsaTrace: n_averaged must be >= 1");
    }
    if (!trace.variance_mw2.empty() &&
        trace.variance_mw2.size() != trace.frequencies_hz.size()) {
        throw std::invalid_argument("EsaTrace: variance length mismatch");
    }
}

EsaTrace parse_trace(const std::string& text) {
    EsaTrace trace;
    bool have_rbw = false, have_vbw = false, have_sweep = false, have_label = false;
    bool in_data = false;
    double previous_freq = 0.0;

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;

        if (line[0] == '#') {
            if (in_data) {
                throw std::runtime_error(
                    "parse_trace: metadata after data rows at line " +
                    std::to_string(line_no));
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error("parse_trace: malformed metadata line " +
                                         std::to_string(line_no));
            }
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "rbw_hz") {
                trace.rbw_hz = metadata_number(key, value, line_no);
                have_rbw = true;
            } else if (key == "vbw_hz") {
                trace.vbw_hz = metadata_number(key, value, line_no);
                have_vbw = true;
            } else if (key == "sweep_time_s") {
                trace.sweep_time_s = metadata_number(key, value, line_no);
                have_sweep = true;
            } else if (key == "label") {
                trace.label = trace_label_from_string(value);
                have_label = true;
            } else if (key == "n_averaged") {
                const double n = metadata_number(key, value, line_no);
                trace.n_averaged = static_cast<int>(n);
                if (trace.n_averaged < 1 || static_cast<double>(trace.n_averaged) != n) {
                    throw std::runtime_error(
                        "parse_trace: n_averaged must be a positive integer at line " +
                        std::to_string(line_no));
                }
            } else {
                throw std::runtime_error("parse_trace: unknown metadata key \"" + key +
                                         "\" at line " + std::to_string(line_no));
            }
            continue;
        }

        in_data = true;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
            throw std::runtime_error("parse_trace: expected freq_hz,power_dbm at line " +
                                     std::to_string(line_no));
        }
        const auto freq = try_parse_double(line.substr(0, comma));
        const auto power = try_parse_double(line.substr(comma + 1));
        if (!freq || !power) {
            throw std::runtime_error("parse_trace: non-numeric row at line " +
                                     std::to_string(line_no));
        }
        if (!trace.frequencies_hz.empty() && !(*freq > previous_freq)) {
            throw std::runtime_error("parse_trace: non-monotone grid at line " +
                                     std::to_string(line_no));
        }
        previous_freq = *freq;
        trace.frequencies_hz.push_back(*freq);
        trace.power_dbm.push_back(*power);
    }

    if (!have_rbw) throw std::runtime_error("parse_trace: missing metadata key \"rbw_hz\"");
    if (!have_vbw) throw std::runtime_error("parse_trace: missing metadata key \"vbw_hz\"");
    if (!have_sweep) {
        throw std::runtime_error("parse_trace: missing metadata key \"sweep_time_s\"");
    }
    if (!have_label) throw std::runtime_error("parse_trace: missing metadata key \"label\"");
    validate(trace);
    return trace;
}

EsaTrace parse_trace_file(const std::string& path) {
    std::ifstream stream(path, std::ios::binary);
    if (!stream) {
        throw std::runtime_error("cannot open trace file: " + path);
    }
    std::ostringstream buffer;
    buffer << stream.rdbuf();
    return parse_trace(buffer.str());
}

std::string serialize_trace(const EsaTrace& trace) {
    validate(trace);
    std::string out;
    out += "#rbw_hz=";
    append_double(out, trace.rbw_hz);
    out += "\n#vbw_hz=";
    append_double(out, trace.vbw_hz);
    out += "\n#sweep_time_s=";
    append_double(out, trace.sweep_time_s);
    out += "\n#label=" + to_string(trace.label) + "\n";
    if (trace.n_averaged != 1) {
        out += "#n_averaged=" + std::to_string(trace.n_averaged) + "\n";
    }
    for (std::size_t i = 0; i < trace.frequencies_hz.size(); ++i) {
        append_double(out, trace.frequencies_hz[i]);
        out.push_back(',');
        append_double(out, trace.power_dbm[i]);
        out.push_back('\n');
    }
    return out;
}

EsaTrace average_traces(const std::vector<EsaTrace>& traces) {
    if (traces.empty()) {
        throw std::invalid_argument("average_traces: empty trace list");
    }
    const EsaTrace& first = traces.front();
    validate(first);
    for (const EsaTrace& t : traces) {
        validate(t);
        if (t.frequencies_hz != first.frequencies_hz) {
            throw std::invalid_argument("average_traces: grid mismatch");
        }
        if (t.label != first.label) {
            throw std::invalid_argument("average_traces: label mismatch");
        }
        if (t.rbw_hz != first.rbw_hz || t.vbw_hz != first.vbw_hz ||
            t.sweep_time_s != first.sweep_time_s) {
            throw std::invalid_argument("average_traces: analyzer settings mismatch");
        }
    }

    const std::size_t n_bins = first.frequencies_hz.size();
    EsaTrace out = first;
    out.variance_mw2.clear();

    int total = 0;
    bool all_single = true;
    for (const EsaTrace& t : traces) {
        total += t.n_averaged;
        if (t.n_averaged != 1) all_single = false;
    }
    out.n_averaged = total;

    std::vector<double> mean_mw(n_bins, 0.0);
    for (std::size_t i = 0; i < n_bins; ++i) {
        double sum = 0.0;
        for (const EsaTrace& t : traces) {
            sum += t.n_averaged * linear_from_db(t.power_dbm[i]);
        }
        mean_mw[i] = sum / total;
        out.power_dbm[i] = db_from_linear(mean_mw[i]);
    }

    // Sample variance of the mean, defined only for a set of single sweeps.
    if (all_single && traces.size() >= 3) {
        const double n = static_cast<double>(traces.size());
        out.variance_mw2.resize(n_bins);
        for (std::size_t i = 0; i < n_bins; ++i) {
            double ss = 0.0;
            for (const EsaTrace& t : traces) {
                const double d = linear_from_db(t.power_dbm[i]) - mean_mw[i];
                ss += d * d;
            }
            out.variance_mw2[i] = ss / ((n - 1.0) * n);
        }
    }
    return out;
}

void validate(const NormalizedSpectrum& spectrum) {
    if (spectrum.frequencies_hz.size() != spectrum.rel_shot_db.size()) {
        throw std::invalid_argument("NormalizedSpectrum: length mismatch");
    }
    if (spectrum.n_averaged < 1) {
        throw std::invalid_argument("NormalizedSpectrum: n_averaged must be >= 1");
    }
    for (double v : spectrum.rel_shot_db) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("NormalizedSpectrum: non-finite value");
        }
    }
}

NormalizedSpectrum normalize(const EsaTrace& signal, const EsaTrace& shot,
                             const EsaTrace& dark) {
    validate(signal);
    validate(shot);
    validate(dark);
    if (signal.label != TraceLabel::signal) {
        throw std::invalid_argument("normalize: first argument must be labeled signal");
    }
    if (shot.label != TraceLabel::shot) {
        throw std::invalid_argument("normalize: second argument must be labeled shot");
    }
    if (dark.label != TraceLabel::dark) {
        throw std::invalid_argument("normalize: third argument must be labeled dark");
    }
    if (signal.frequencies_hz != shot.frequencies_hz ||
        signal.frequencies_hz != dark.frequencies_hz) {
        throw std::invalid_argument("normalize: grid mismatch");
    }

    NormalizedSpectrum out;
    out.frequencies_hz = signal.frequencies_hz;
    out.rel_shot_db.resize(signal.frequencies_hz.size());
    out.n_averaged = signal.n_averaged;
    const bool have_variance =
        signal.variance_mw2.size() == signal.frequencies_hz.size();
    if (have_variance) out.ratio_variance.resize(signal.frequencies_hz.size());

    for (std::size_t i = 0; i < signal.frequencies_hz.size(); ++i) {
        const double dark_mw = linear_from_db(dark.power_dbm[i]);
        const double den = linear_from_db(shot.power_dbm[i]) - dark_mw;
        if (!(den > 0.0)) {
            throw std::runtime_error("insufficient dark-noise clearance at bin " +
                                     std::to_string(i));
        }
        const double num = linear_from_db(signal.power_dbm[i]) - dark_mw;
        if (!(num > 0.0)) {
            throw std::runtime_error("normalize: signal not above dark noise at bin " +
                                     std::to_string(i));
        }
        out.rel_shot_db[i] = db_from_linear(num / den);
        if (have_variance) {
            out.ratio_variance[i] = signal.variance_mw2[i] / (den * den);
        }
    }
    return out;
}

std::string normalized_to_csv(const NormalizedSpectrum& spectrum) {
    validate(spectrum);
    const bool have_variance =
        spectrum.ratio_variance.size() == spectrum.frequencies_hz.size();
    std::string out = have_variance ? "freq_hz,rel_shot_db,ratio_variance\n"
                                    : "freq_hz,rel_shot_db\n";
    for (std::size_t i = 0; i < spectrum.frequencies_hz.size(); ++i) {
        append_double(out, spectrum.frequencies_hz[i]);
        out.push_back(',');
        append_double(out, spectrum.rel_shot_db[i]);
        if (have_variance) {
            out.push_back(',');
            append_double(out, spectrum.ratio_variance[i]);
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace sqz
