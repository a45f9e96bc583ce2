#pragma once

#include "ppgbp/signal.hpp"

#include <cstddef>
#include <vector>

namespace ppgbp {

struct ResampleGrid {
    double sample_rate_hz = 0.0;
    double start_s = 0.0;
    double end_s = 0.0;
};

/// Uniformly resampled beat-feature values (same layout as UniformSignal but
/// tagged with the feature it carries).
struct FeatureTrack {
    double sample_rate_hz = 0.0;
    double t0_s = 0.0;
    std::vector<double> values;
    FeatureKind feature = FeatureKind::SBP;

    std::size_t size() const { return values.size(); }
    double time_at(std::size_t m) const { return t0_s + static_cast<double>(m) / sample_rate_hz; }
};

/// Piecewise-cubic interpolant with not-a-knot end conditions. Requires at
/// least 4 knots with strictly increasing abscissae. Evaluation clamps to the
/// knot span (no extrapolation).
class CubicSpline {
public:
    CubicSpline(std::vector<double> x, std::vector<double> y);

    double operator()(double t) const;
    /// Second derivative, for continuity checks.
    double second_derivative(double t) const;

    double first_knot() const { return x_.front(); }
    double last_knot() const { return x_.back(); }

private:
    std::size_t interval_of(double t) const;

    std::vector<double> x_;
    std::vector<double> a_, b_, c_, d_; // s_i(t) = a + b*dt + c*dt^2 + d*dt^3
};

/// Resamples a beat series onto the grid. The output is anchored at
/// max(grid.start_s, first knot) and ends at min(grid.end_s, last knot), so
/// length = floor((end_eff - start_eff) * rate) + 1. Errors when the series
/// has fewer than 4 points or the grid misses the knot span entirely.
FeatureTrack spline_resample(const BeatFeatureSeries& series, const ResampleGrid& grid);

} // namespace ppgbp
