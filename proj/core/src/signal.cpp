#include "ppgbp/signal.hpp"

#include <cmath>
#include <stdexcept>

namespace ppgbp {

const char* to_string(SignalLabel label) {
    return label == SignalLabel::BP ? "BP" : "PPG";
}

const char* to_string(FeatureKind feature) {
    switch (feature) {
        case FeatureKind::SBP: return "SBP";
        case FeatureKind::DBP: return "DBP";
        case FeatureKind::MAP: return "MAP";
        case FeatureKind::PPG_PEAK: return "PPG_PEAK";
        case FeatureKind::PPG_TROUGH: return "PPG_TROUGH";
    }
    return "?";
}

const char* to_string(IntervalKind kind) {
    return kind == IntervalKind::NB ? "NB" : "BH";
}

IntervalKind interval_kind_from_string(const std::string& s) {
    if (s == "NB") return IntervalKind::NB;
    if (s == "BH") return IntervalKind::BH;
    throw std::invalid_argument("unknown interval kind: " + s);
}

FeatureKind feature_from_string(const std::string& s) {
    if (s == "SBP") return FeatureKind::SBP;
    if (s == "DBP") return FeatureKind::DBP;
    if (s == "MAP") return FeatureKind::MAP;
    if (s == "PPG_PEAK") return FeatureKind::PPG_PEAK;
    if (s == "PPG_TROUGH") return FeatureKind::PPG_TROUGH;
    throw std::invalid_argument("unknown feature: " + s);
}

ValidationResult validate_signal(const UniformSignal& signal, const std::string& name) {
    ValidationResult r;
    if (!(signal.sample_rate_hz > 0.0) || !std::isfinite(signal.sample_rate_hz)) {
        r.violations.push_back(name + ": sample_rate_hz must be positive and finite");
    }
    if (!std::isfinite(signal.t0_s)) {
        r.violations.push_back(name + ": t0_s must be finite");
    }
    if (signal.values.empty()) {
        r.violations.push_back(name + ": values must be non-empty");
    }
    for (double v : signal.values) {
        if (!std::isfinite(v)) {
            r.violations.push_back(name + ": values must all be finite");
            break;
        }
    }
    return r;
}

ValidationResult validate_series(const BeatFeatureSeries& series, const std::string& name) {
    ValidationResult r;
    if (series.times_s.size() != series.values.size()) {
        r.violations.push_back(name + ": times and values must have equal length");
        return r;
    }
    for (std::size_t i = 1; i < series.times_s.size(); ++i) {
        if (!(series.times_s[i] > series.times_s[i - 1])) {
            r.violations.push_back(name + ": times must be strictly increasing");
            break;
        }
    }
    for (double v : series.values) {
        if (!std::isfinite(v)) {
            r.violations.push_back(name + ": values must all be finite");
            break;
        }
    }
    return r;
}

namespace {

void append(ValidationResult& into, ValidationResult from) {
    for (auto& v : from.violations) into.violations.push_back(std::move(v));
}

// Half-open windows overlap iff each starts before the other ends.
bool overlaps(const IntervalAnnotation& a, const IntervalAnnotation& b) {
    return a.start_s < b.end_s && b.start_s < a.end_s;
}

} // namespace

ValidationResult validate_session(const RecordingSession& session) {
    ValidationResult r;
    append(r, validate_signal(session.bp, "bp"));
    append(r, validate_signal(session.ppg, "ppg"));

    if (session.bp.label != SignalLabel::BP) r.violations.push_back("bp: label must be BP");
    if (session.ppg.label != SignalLabel::PPG) r.violations.push_back("ppg: label must be PPG");

    if (session.bp.values.size() != session.ppg.values.size()) {
        r.violations.push_back("bp/ppg length mismatch");
    }
    if (session.bp.sample_rate_hz != session.ppg.sample_rate_hz) {
        r.violations.push_back("bp/ppg sample_rate_hz mismatch");
    }
    if (session.bp.t0_s != session.ppg.t0_s) {
        r.violations.push_back("bp/ppg t0_s mismatch");
    }

    const bool signal_usable = r.ok() || (session.bp.sample_rate_hz > 0 && !session.bp.values.empty());
    const double span_lo = session.bp.t0_s;
    const double span_hi = session.bp.span_end_s();
    constexpr double kSlack = 1e-9;

    for (const auto& ann : session.annotations) {
        if (!(ann.end_s > ann.start_s)) {
            r.violations.push_back("annotation " + ann.label + ": end_s must exceed start_s");
        }
        if (signal_usable &&
            (ann.start_s < span_lo - kSlack || ann.end_s > span_hi + kSlack)) {
            r.violations.push_back("annotation " + ann.label + ": outside the signal time span");
        }
    }
    for (std::size_t i = 0; i < session.annotations.size(); ++i) {
        for (std::size_t j = i + 1; j < session.annotations.size(); ++j) {
            if (overlaps(session.annotations[i], session.annotations[j])) {
                r.violations.push_back("annotation overlap: " + session.annotations[i].label +
                                       " and " + session.annotations[j].label);
            }
        }
    }
    return r;
}

} // namespace ppgbp
