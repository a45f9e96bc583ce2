#pragma once

#include "ppgbp/signal.hpp"

#include <cstddef>
#include <vector>

namespace ppgbp {

struct PeakDetectionParams {
    double min_peak_height = 15.0;      // signal units, absolute
    double min_peak_prominence = 15.0;  // signal units
    std::size_t min_peak_distance_samples = 20;
};

/// Blood-pressure detector defaults (height 15 mmHg, prominence 15 mmHg,
/// distance 20 samples at 100 Hz).
PeakDetectionParams default_bp_params();

/// PPG units are device-relative, so the defaults are data-driven:
/// height = median of the segment, prominence = 0.5 * interquartile range,
/// distance = 20 samples. Either threshold can be pinned to a fixed value.
struct PpgDetectionConfig {
    bool prominence_from_iqr = true;
    double prominence_value = 0.5; // IQR factor, or absolute units when fixed
    bool height_from_median = true;
    double height_value = 0.0;     // absolute units when fixed
    std::size_t distance_samples = 20;
};

PeakDetectionParams resolve_ppg_params(const UniformSignal& ppg, const PpgDetectionConfig& config);

/// Peak acceptance semantics:
///   - a candidate is a strict local maximum (edge samples never qualify);
///   - its prominence is the height above the higher of the two lowest points
///     separating it from higher terrain or the signal edge;
///   - candidates below the height or prominence threshold are dropped;
///   - survivors are accepted in descending value order (ties by earlier
///     index), discarding any candidate closer than min_peak_distance_samples
///     to an already accepted peak.
/// Accepted pairs are therefore always >= min_peak_distance_samples apart.
std::vector<std::size_t> detect_peak_indices(const std::vector<double>& values,
                                             const PeakDetectionParams& params);

/// Topographic prominence of a strict local maximum at `index`.
double peak_prominence(const std::vector<double>& values, std::size_t index);

BeatFeatureSeries detect_peaks(const UniformSignal& signal, const PeakDetectionParams& params);

/// One trough per consecutive peak pair: the minimum strictly between the
/// peaks, ties broken by the earliest index.
BeatFeatureSeries detect_troughs_between_peaks(const UniformSignal& signal,
                                               const BeatFeatureSeries& peaks);

struct BpFeatures {
    BeatFeatureSeries sbp;
    BeatFeatureSeries dbp;
    BeatFeatureSeries map; // (2*DBP + SBP)/3, timestamped at the DBP time
};

/// SBP from peak detection, DBP as the minimum between consecutive SBP
/// points, MAP pairing each DBP with its preceding SBP.
BpFeatures extract_bp_features(const UniformSignal& bp, const PeakDetectionParams& params);

struct PpgFeatures {
    BeatFeatureSeries peaks;
    BeatFeatureSeries troughs;
};

PpgFeatures extract_ppg_features(const UniformSignal& ppg, const PeakDetectionParams& params);

} // namespace ppgbp
