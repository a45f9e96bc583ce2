#include "ppgbp/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ppgbp {

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), a_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 4) throw std::invalid_argument("CubicSpline: not-a-knot needs at least 4 knots");
    if (a_.size() != n) throw std::invalid_argument("CubicSpline: x/y length mismatch");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(x_[i] > x_[i - 1])) {
            throw std::invalid_argument("CubicSpline: knots must be strictly increasing");
        }
    }

    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = x_[i + 1] - x_[i];

    // Solve for c_i (half the second derivative at knot i). Interior rows:
    //   h[i-1] c[i-1] + 2(h[i-1]+h[i]) c[i] + h[i] c[i+1] = r_i
    // Not-a-knot makes d continuous across the first and last interior knot:
    //   c0    = ((h0 + h1) c1 - h0 c2) / h1
    //   c_n-1 = ((h_n-3 + h_n-2) c_n-2 - h_n-2 c_n-3) / h_n-3
    // Substituting these into the first and last interior rows leaves a
    // tridiagonal system in c_1 .. c_n-2.
    const std::size_t m = n - 2; // unknowns
    std::vector<double> lower(m, 0.0), diag(m, 0.0), upper(m, 0.0), rhs(m);

    for (std::size_t i = 1; i + 1 < n; ++i) {
        rhs[i - 1] = 3.0 * ((a_[i + 1] - a_[i]) / h[i] - (a_[i] - a_[i - 1]) / h[i - 1]);
    }
    for (std::size_t i = 2; i + 2 < n; ++i) {
        lower[i - 1] = h[i - 1];
        diag[i - 1] = 2.0 * (h[i - 1] + h[i]);
        upper[i - 1] = h[i];
    }
    // first interior row after eliminating c0
    diag[0] = (h[0] + h[1]) * (h[0] + 2.0 * h[1]) / h[1];
    if (m > 1) upper[0] = (h[1] * h[1] - h[0] * h[0]) / h[1];
    // last interior row after eliminating c_n-1
    const double hm2 = h[n - 3], hm1 = h[n - 2];
    diag[m - 1] = (hm1 + hm2) * (hm1 + 2.0 * hm2) / hm2;
    if (m > 1) lower[m - 1] = (hm2 * hm2 - hm1 * hm1) / hm2;

    // Thomas algorithm
    for (std::size_t i = 1; i < m; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> c(n);
    c[n - 2] = rhs[m - 1] / diag[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) {
        c[i + 1] = (rhs[i] - upper[i] * c[i + 2]) / diag[i];
    }
    c[0] = ((h[0] + h[1]) * c[1] - h[0] * c[2]) / h[1];
    c[n - 1] = ((hm2 + hm1) * c[n - 2] - hm1 * c[n - 3]) / hm2;

    b_.resize(n - 1);
    d_.resize(n - 1);
    c_ = std::move(c);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        b_[i] = (a_[i + 1] - a_[i]) / h[i] - h[i] * (2.0 * c_[i] + c_[i + 1]) / 3.0;
        d_[i] = (c_[i + 1] - c_[i]) / (3.0 * h[i]);
    }
}

std::size_t CubicSpline::interval_of(double t) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(i, x_.size() - 2);
}

double CubicSpline::operator()(double t) const {
    t = std::clamp(t, x_.front(), x_.back());
    const std::size_t i = interval_of(t);
    const double dt = t - x_[i];
    return a_[i] + dt * (b_[i] + dt * (c_[i] + dt * d_[i]));
}

double CubicSpline::second_derivative(double t) const {
    t = std::clamp(t, x_.front(), x_.back());
    const std::size_t i = interval_of(t);
    const double dt = t - x_[i];
    return 2.0 * c_[i] + 6.0 * d_[i] * dt;
}

FeatureTrack spline_resample(const BeatFeatureSeries& series, const ResampleGrid& grid) {
    if (!(grid.sample_rate_hz > 0.0)) {
        throw std::invalid_argument("spline_resample: grid rate must be positive");
    }
    if (!(grid.end_s > grid.start_s)) {
        throw std::invalid_argument("spline_resample: grid end must exceed start");
    }
    if (series.size() < 4) {
        throw std::invalid_argument("spline_resample: series needs at least 4 points");
    }

    const CubicSpline spline(series.times_s, series.values);
    const double start = std::max(grid.start_s, spline.first_knot());
    const double end = std::min(grid.end_s, spline.last_knot());
    if (!(end > start)) {
        throw std::invalid_argument("spline_resample: grid does not overlap the knot span");
    }

    // floor with a small guard so an exact multiple of the step is not lost
    // to rounding in (end - start) * rate
    const auto n = static_cast<std::size_t>(
                       std::floor((end - start) * grid.sample_rate_hz + 1e-9)) + 1;

    FeatureTrack track;
    track.sample_rate_hz = grid.sample_rate_hz;
    track.t0_s = start;
    track.feature = series.feature;
    track.values.resize(n);
    for (std::size_t m = 0; m < n; ++m) {
        track.values[m] = spline(track.time_at(m));
    }
    return track;
}

} // namespace ppgbp
