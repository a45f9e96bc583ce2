#include "ppgbp/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace ppgbp {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_double17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc()) {
        throw std::invalid_argument("cannot parse number: '" + s + "'");
    }
    return v;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF endings everywhere
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

std::string chomp(std::string line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    return line;
}

// Recover the exact sample rate that produced the stored timestamps. The
// span-average estimate is within a few ulp of the true rate; try its ulp
// neighbourhood and keep a candidate only if t0 + m/rate reproduces every
// timestamp bit-exactly.
double snap_sample_rate(const std::vector<double>& t) {
    const std::size_t n = t.size();
    if (n < 2) throw std::runtime_error("recording needs at least 2 samples");
    const double est = static_cast<double>(n - 1) / (t.back() - t.front());

    auto reproduces = [&](double rate) {
        for (std::size_t m = 0; m < n; ++m) {
            if (t.front() + static_cast<double>(m) / rate != t[m]) return false;
        }
        return true;
    };

    double lo = est, hi = est;
    for (int step = 0; step < 8; ++step) {
        if (reproduces(lo)) return lo;
        if (reproduces(hi)) return hi;
        lo = std::nextafter(lo, 0.0);
        hi = std::nextafter(hi, est * 2.0);
    }
    return est; // external data with timestamp jitter
}

} // namespace

void write_recording_csv(const std::filesystem::path& path, const RecordingSession& session) {
    if (session.bp.values.size() != session.ppg.values.size()) {
        throw std::invalid_argument("bp/ppg length mismatch");
    }
    auto out = open_output(path);
    out << "t_s,ppg,bp\n";
    for (std::size_t m = 0; m < session.bp.values.size(); ++m) {
        out << format_double(session.bp.time_at(m)) << ','
            << format_double(session.ppg.values[m]) << ','
            << format_double(session.bp.values[m]) << '\n';
    }
}

std::pair<UniformSignal, UniformSignal> read_recording_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "t_s,ppg,bp") {
        throw std::runtime_error(path.string() + ": expected header 't_s,ppg,bp'");
    }
    std::vector<double> t, ppg, bp;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = chomp(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 3 fields");
        }
        t.push_back(parse_double(fields[0]));
        ppg.push_back(parse_double(fields[1]));
        bp.push_back(parse_double(fields[2]));
    }
    if (t.size() < 2) throw std::runtime_error(path.string() + ": too few samples");

    const double rate = snap_sample_rate(t);
    UniformSignal bp_sig{rate, t.front(), std::move(bp), SignalLabel::BP};
    UniformSignal ppg_sig{rate, t.front(), std::move(ppg), SignalLabel::PPG};
    return {std::move(bp_sig), std::move(ppg_sig)};
}

void write_annotations_csv(const std::filesystem::path& path,
                           const std::vector<IntervalAnnotation>& annotations) {
    auto out = open_output(path);
    out << "label,kind,start_s,end_s\n";
    for (const auto& a : annotations) {
        out << a.label << ',' << to_string(a.kind) << ','
            << format_double(a.start_s) << ',' << format_double(a.end_s) << '\n';
    }
}

std::vector<IntervalAnnotation> read_annotations_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "label,kind,start_s,end_s") {
        throw std::runtime_error(path.string() + ": expected header 'label,kind,start_s,end_s'");
    }
    std::vector<IntervalAnnotation> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = chomp(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 4 fields");
        }
        out.push_back(IntervalAnnotation{fields[0], interval_kind_from_string(fields[1]),
                                         parse_double(fields[2]), parse_double(fields[3])});
    }
    return out;
}

RecordingSession read_session(const std::filesystem::path& recording_csv,
                              const std::filesystem::path& annotations_csv,
                              const std::string& subject_id) {
    auto [bp, ppg] = read_recording_csv(recording_csv);
    RecordingSession session{subject_id, std::move(bp), std::move(ppg),
                             read_annotations_csv(annotations_csv)};
    return session;
}

void write_session(const std::filesystem::path& recording_csv,
                   const std::filesystem::path& annotations_csv,
                   const RecordingSession& session) {
    write_recording_csv(recording_csv, session);
    write_annotations_csv(annotations_csv, session.annotations);
}

} // namespace ppgbp
