#include "ppgbp/peaks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ppgbp {

PeakDetectionParams default_bp_params() {
    return PeakDetectionParams{15.0, 15.0, 20};
}

namespace {

double quantile(std::vector<double> sorted, double p) {
    // linear interpolation between order statistics (R type 7)
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::size_t index_from_time(const UniformSignal& signal, double t) {
    return static_cast<std::size_t>(std::llround((t - signal.t0_s) * signal.sample_rate_hz));
}

} // namespace

PeakDetectionParams resolve_ppg_params(const UniformSignal& ppg, const PpgDetectionConfig& config) {
    PeakDetectionParams params;
    params.min_peak_distance_samples = config.distance_samples;
    if (config.prominence_from_iqr || config.height_from_median) {
        std::vector<double> sorted = ppg.values;
        std::sort(sorted.begin(), sorted.end());
        const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
        const double median = quantile(sorted, 0.5);
        params.min_peak_prominence =
            config.prominence_from_iqr ? config.prominence_value * iqr : config.prominence_value;
        params.min_peak_height = config.height_from_median ? median : config.height_value;
    } else {
        params.min_peak_prominence = config.prominence_value;
        params.min_peak_height = config.height_value;
    }
    return params;
}

double peak_prominence(const std::vector<double>& values, std::size_t index) {
    const double v = values[index];

    // Walk outward until terrain higher than the peak (or the signal edge),
    // tracking the lowest point passed on the way. The prominence reference
    // is the higher of the two side minima.
    double left_min = v;
    for (std::size_t i = index; i-- > 0;) {
        if (values[i] > v) break;
        left_min = std::min(left_min, values[i]);
    }
    double right_min = v;
    for (std::size_t i = index + 1; i < values.size(); ++i) {
        if (values[i] > v) break;
        right_min = std::min(right_min, values[i]);
    }
    return v - std::max(left_min, right_min);
}

std::vector<std::size_t> detect_peak_indices(const std::vector<double>& values,
                                             const PeakDetectionParams& params) {
    if (values.size() < 3) {
        throw std::invalid_argument("detect_peaks: signal must have at least 3 samples");
    }
    if (params.min_peak_distance_samples < 1) {
        throw std::invalid_argument("detect_peaks: min_peak_distance_samples must be >= 1");
    }
    if (!std::isfinite(params.min_peak_height) || !std::isfinite(params.min_peak_prominence)) {
        throw std::invalid_argument("detect_peaks: thresholds must be finite");
    }

    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < values.size(); ++i) {
        if (values[i] > values[i - 1] && values[i] > values[i + 1] &&
            values[i] >= params.min_peak_height &&
            peak_prominence(values, i) >= params.min_peak_prominence) {
            candidates.push_back(i);
        }
    }

    // Descending value, ties by earlier index; then greedy distance pruning.
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] > values[b];
        return a < b;
    });

    std::vector<std::size_t> accepted;
    for (std::size_t cand : candidates) {
        bool keep = true;
        for (std::size_t acc : accepted) {
            const std::size_t gap = cand > acc ? cand - acc : acc - cand;
            if (gap < params.min_peak_distance_samples) {
                keep = false;
                break;
            }
        }
        if (keep) accepted.push_back(cand);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

BeatFeatureSeries detect_peaks(const UniformSignal& signal, const PeakDetectionParams& params) {
    const auto indices = detect_peak_indices(signal.values, params);
    BeatFeatureSeries series;
    series.feature = signal.label == SignalLabel::PPG ? FeatureKind::PPG_PEAK : FeatureKind::SBP;
    series.times_s.reserve(indices.size());
    series.values.reserve(indices.size());
    for (std::size_t i : indices) {
        series.times_s.push_back(signal.time_at(i));
        series.values.push_back(signal.values[i]);
    }
    return series;
}

BeatFeatureSeries detect_troughs_between_peaks(const UniformSignal& signal,
                                               const BeatFeatureSeries& peaks) {
    if (peaks.size() < 2) {
        throw std::invalid_argument("detect_troughs_between_peaks: need at least 2 peaks");
    }
    BeatFeatureSeries out;
    out.feature = signal.label == SignalLabel::PPG ? FeatureKind::PPG_TROUGH : FeatureKind::DBP;
    for (std::size_t k = 0; k + 1 < peaks.size(); ++k) {
        const std::size_t lo = index_from_time(signal, peaks.times_s[k]);
        const std::size_t hi = index_from_time(signal, peaks.times_s[k + 1]);
        std::size_t best = lo + 1;
        for (std::size_t i = lo + 1; i < hi; ++i) {
            if (signal.values[i] < signal.values[best]) best = i; // '<' keeps the earliest tie
        }
        out.times_s.push_back(signal.time_at(best));
        out.values.push_back(signal.values[best]);
    }
    return out;
}

BpFeatures extract_bp_features(const UniformSignal& bp, const PeakDetectionParams& params) {
    if (bp.label != SignalLabel::BP) {
        throw std::invalid_argument("extract_bp_features: signal label must be BP");
    }
    BpFeatures features;
    features.sbp = detect_peaks(bp, params);
    if (features.sbp.size() < 2) {
        throw std::runtime_error("extract_bp_features: fewer than 2 SBP points detected");
    }
    features.dbp = detect_troughs_between_peaks(bp, features.sbp);

    features.map.feature = FeatureKind::MAP;
    for (std::size_t i = 0; i < features.dbp.size(); ++i) {
        features.map.times_s.push_back(features.dbp.times_s[i]);
        features.map.values.push_back((2.0 * features.dbp.values[i] + features.sbp.values[i]) / 3.0);
    }
    return features;
}

PpgFeatures extract_ppg_features(const UniformSignal& ppg, const PeakDetectionParams& params) {
    if (ppg.label != SignalLabel::PPG) {
        throw std::invalid_argument("extract_ppg_features: signal label must be PPG");
    }
    PpgFeatures features;
    features.peaks = detect_peaks(ppg, params);
    if (features.peaks.size() < 2) {
        throw std::runtime_error("extract_ppg_features: fewer than 2 PPG peaks detected");
    }
    features.troughs = detect_troughs_between_peaks(ppg, features.peaks);
    return features;
}

} // namespace ppgbp
