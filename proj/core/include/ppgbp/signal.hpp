#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ppgbp {

enum class SignalLabel { BP, PPG };

enum class FeatureKind { SBP, DBP, MAP, PPG_PEAK, PPG_TROUGH };

enum class IntervalKind { NB, BH };

const char* to_string(SignalLabel label);
const char* to_string(FeatureKind feature);
const char* to_string(IntervalKind kind);
IntervalKind interval_kind_from_string(const std::string& s);
FeatureKind feature_from_string(const std::string& s);

/// Evenly sampled waveform. Sample m lives at t0_s + m / sample_rate_hz.
struct UniformSignal {
    double sample_rate_hz = 0.0;
    double t0_s = 0.0;
    std::vector<double> values;
    SignalLabel label = SignalLabel::BP;

    std::size_t size() const { return values.size(); }
    double time_at(std::size_t m) const { return t0_s + static_cast<double>(m) / sample_rate_hz; }
    /// End of the half-open span covered by the samples: t0_s + n / rate.
    double span_end_s() const { return t0_s + static_cast<double>(values.size()) / sample_rate_hz; }
};

/// Non-uniform per-beat event series (times strictly increasing).
struct BeatFeatureSeries {
    std::vector<double> times_s;
    std::vector<double> values;
    FeatureKind feature = FeatureKind::SBP;

    std::size_t size() const { return times_s.size(); }
    bool empty() const { return times_s.empty(); }
};

/// Labeled half-open window [start_s, end_s).
struct IntervalAnnotation {
    std::string label;
    IntervalKind kind = IntervalKind::NB;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct RecordingSession {
    std::string subject_id;
    UniformSignal bp;
    UniformSignal ppg;
    std::vector<IntervalAnnotation> annotations;
};

struct ValidationResult {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant of a session without mutating it.
/// Violations are returned, never thrown.
ValidationResult validate_session(const RecordingSession& session);

/// Invariant checks shared by the validators and the extraction code.
ValidationResult validate_signal(const UniformSignal& signal, const std::string& name);
ValidationResult validate_series(const BeatFeatureSeries& series, const std::string& name);

} // namespace ppgbp
