#include "ppgbp/synth.hpp"

#include "ppgbp/csv_io.hpp"
#include "ppgbp/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace ppgbp {

double CouplingConfig::dc_gain() const {
    const double a_sum = std::accumulate(a.begin(), a.end(), 0.0);
    const double b_sum = std::accumulate(b.begin(), b.end(), 0.0);
    return b_sum / (1.0 + a_sum);
}

double CouplingConfig::pole_radius() const {
    const auto n = static_cast<Eigen::Index>(a.size());
    if (n == 0) return 0.0;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) companion(0, i) = -a[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    return companion.eigenvalues().cwiseAbs().maxCoeff();
}

ProtocolConfig default_protocol_config() {
    ProtocolConfig config;
    // Stable couplings with poles {0.4, 0.15} and {0.5}, scaled so the PPG
    // envelope baselines map to roughly 125/75 mmHg operating points.
    config.sbp_coupling.orders = ArxOrders{2, 2, 1};
    config.sbp_coupling.a = {-0.55, 0.06};
    config.sbp_coupling.b = {44.625, 19.125}; // dc gain 125
    config.dbp_coupling.orders = ArxOrders{1, 2, 1};
    config.dbp_coupling.a = {-0.5};
    config.dbp_coupling.b = {56.25, 37.5}; // dc gain 187.5, x0.4 trough = 75
    return config;
}

double ProtocolConfig::total_duration_s() const {
    // Filled in by generate_session once hold durations are drawn; this is
    // the fixed part plus the mean hold duration, for reporting only.
    const double mean_hold = 0.5 * (bh_duration_min_s + bh_duration_max_s);
    return baseline_nb_s + n_breath_holds * (mean_hold + inter_bh_recovery_s) + final_nb_s;
}

void validate_protocol_config(const ProtocolConfig& config) {
    auto positive = [](double v, const char* field) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("ProtocolConfig.") + field +
                                        " must be positive");
        }
    };
    positive(config.baseline_nb_s, "baseline_nb_s");
    positive(config.bh_duration_min_s, "bh_duration_min_s");
    positive(config.bh_duration_max_s, "bh_duration_max_s");
    positive(config.inter_bh_recovery_s, "inter_bh_recovery_s");
    positive(config.final_nb_s, "final_nb_s");
    positive(config.sample_rate_hz, "sample_rate_hz");
    positive(config.heart_rate_hz, "heart_rate_hz");
    positive(config.recovery_tau_s, "recovery_tau_s");
    positive(config.ppg_peak_base, "ppg_peak_base");
    positive(config.ppg_trough_base, "ppg_trough_base");
    if (config.n_breath_holds < 1) {
        throw std::invalid_argument("ProtocolConfig.n_breath_holds must be >= 1");
    }
    if (config.bh_duration_max_s < config.bh_duration_min_s) {
        throw std::invalid_argument("ProtocolConfig.bh_duration_max_s must be >= bh_duration_min_s");
    }
    if (config.noise_sd_mmhg < 0.0) {
        throw std::invalid_argument("ProtocolConfig.noise_sd_mmhg must be >= 0");
    }
    if (config.ppg_trough_base >= config.ppg_peak_base) {
        throw std::invalid_argument("ProtocolConfig.ppg_trough_base must be below ppg_peak_base");
    }
    for (const auto* coupling : {&config.sbp_coupling, &config.dbp_coupling}) {
        validate_orders(coupling->orders);
        if (coupling->a.size() != static_cast<std::size_t>(coupling->orders.n_a) ||
            coupling->b.size() != static_cast<std::size_t>(coupling->orders.n_b)) {
            throw std::invalid_argument("ProtocolConfig coupling coefficient lengths must match orders");
        }
        if (!(coupling->pole_radius() < 1.0)) {
            throw std::invalid_argument("ProtocolConfig coupling is unstable (pole radius >= 1)");
        }
    }
}

namespace {

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

// Sympathetic drive in [0, 1]: ramps to 1 across each hold, decays
// exponentially afterwards. The drive peaks exactly when the hold ends.
class EnvelopeSchedule {
public:
    EnvelopeSchedule(std::vector<std::pair<double, double>> holds, double tau)
        : holds_(std::move(holds)), tau_(tau) {}

    double operator()(double t) const {
        double level_at_last_end = 0.0;
        double last_end = -1e300;
        for (const auto& [start, end] : holds_) {
            if (t < start) break;
            const double at_start = level_at_last_end * std::exp(-(start - last_end) / tau_);
            if (t < end) {
                return at_start + (1.0 - at_start) * smoothstep((t - start) / (end - start));
            }
            level_at_last_end = 1.0;
            last_end = end;
        }
        if (last_end < -1e299) return 0.0;
        return level_at_last_end * std::exp(-(t - last_end) / tau_);
    }

private:
    std::vector<std::pair<double, double>> holds_;
    double tau_;
};

// Envelope passed through the coupling, plus additive beat noise:
// y(n) = -sum a_i y0(n-i) + sum b_j u(n - nk - j + 1), then y = y0 + noise.
// Warm history sits at the steady state for the baseline input level.
std::vector<double> run_coupling(const CouplingConfig& coupling, const std::vector<double>& u,
                                 double u_base, const std::vector<double>& noise) {
    const std::size_t n = u.size();
    const double y_ss = coupling.dc_gain() * u_base;
    const int na = coupling.orders.n_a;
    const int nb = coupling.orders.n_b;
    const int nk = coupling.orders.n_k;

    std::vector<double> filtered(n);
    for (std::size_t m = 0; m < n; ++m) {
        double v = 0.0;
        for (int i = 1; i <= na; ++i) {
            const double past = m >= static_cast<std::size_t>(i) ? filtered[m - i] : y_ss;
            v -= coupling.a[static_cast<std::size_t>(i - 1)] * past;
        }
        for (int j = 1; j <= nb; ++j) {
            const int lag = nk + j - 1;
            const double past = m >= static_cast<std::size_t>(lag) ? u[m - lag] : u_base;
            v += coupling.b[static_cast<std::size_t>(j - 1)] * past;
        }
        filtered[m] = v;
    }
    std::vector<double> y(n);
    for (std::size_t m = 0; m < n; ++m) y[m] = filtered[m] + noise[m];
    return y;
}

// Raised-cosine beat shape: fall from the peak to the trough at 64% of the
// beat gap, then rise into the next peak.
constexpr double kTroughFraction = 0.64;

void render_segment(std::vector<double>& samples, double rate, double t_from, double v_from,
                    double t_to, double v_to, bool falling) {
    if (!(t_to > t_from)) return;
    const auto lo = static_cast<long long>(std::ceil(t_from * rate - 1e-9));
    const auto hi = static_cast<long long>(std::ceil(t_to * rate - 1e-9)); // half-open
    const auto n = static_cast<long long>(samples.size());
    for (long long idx = std::max(lo, 0LL); idx < std::min(hi, n); ++idx) {
        const double t = static_cast<double>(idx) / rate;
        const double phase = (t - t_from) / (t_to - t_from);
        const double w = falling ? 0.5 * (1.0 + std::cos(std::numbers::pi * phase))
                                 : 0.5 * (1.0 - std::cos(std::numbers::pi * phase));
        samples[static_cast<std::size_t>(idx)] = falling ? v_to + (v_from - v_to) * w
                                                         : v_from + (v_to - v_from) * w;
    }
}

// peaks[k] at beat_times[k], trough values[k] between beats k and k+1.
std::vector<double> render_waveform(std::size_t n_samples, double rate,
                                    const std::vector<double>& beat_times,
                                    const std::vector<double>& peaks,
                                    const std::vector<double>& troughs) {
    std::vector<double> samples(n_samples, troughs.front());
    const double first_gap = beat_times[1] - beat_times[0];
    const double last_gap = beat_times[beat_times.size() - 1] - beat_times[beat_times.size() - 2];
    // lead-in: rise into the first rendered beat
    render_segment(samples, rate, beat_times.front() - kTroughFraction * first_gap,
                   troughs.front(), beat_times.front(), peaks.front(), false);
    for (std::size_t k = 0; k + 1 < beat_times.size(); ++k) {
        const double gap = beat_times[k + 1] - beat_times[k];
        const double t_trough = beat_times[k] + kTroughFraction * gap;
        render_segment(samples, rate, beat_times[k], peaks[k], t_trough, troughs[k], true);
        render_segment(samples, rate, t_trough, troughs[k], beat_times[k + 1], peaks[k + 1], false);
    }
    // tail: decay from the last beat and hold the trough level
    const double tail_end = beat_times.back() + kTroughFraction * last_gap;
    render_segment(samples, rate, beat_times.back(), peaks.back(), tail_end, troughs.back(), true);
    const auto hold_from = static_cast<long long>(std::ceil(tail_end * rate - 1e-9));
    for (long long idx = std::max(hold_from, 0LL);
         idx < static_cast<long long>(n_samples); ++idx) {
        samples[static_cast<std::size_t>(idx)] = troughs.back();
    }
    return samples;
}

} // namespace

SynthResult generate_session(const ProtocolConfig& config) {
    validate_protocol_config(config);
    Rng rng(config.rng_seed);

    // protocol timeline
    std::vector<std::pair<double, double>> holds;
    std::vector<IntervalAnnotation> annotations;
    double t = config.baseline_nb_s;
    annotations.push_back({"NB1", IntervalKind::NB, 0.0, t});
    int nb_index = 2;
    for (int h = 1; h <= config.n_breath_holds; ++h) {
        const double duration = rng.uniform(config.bh_duration_min_s, config.bh_duration_max_s);
        annotations.push_back({"BH" + std::to_string(h), IntervalKind::BH, t, t + duration});
        holds.emplace_back(t, t + duration);
        t += duration;
        // every hold is followed by a recovery; all but the last are
        // annotated NB analysis intervals
        if (h < config.n_breath_holds) {
            annotations.push_back({"NB" + std::to_string(nb_index++), IntervalKind::NB, t,
                                   t + config.inter_bh_recovery_s});
        }
        t += config.inter_bh_recovery_s;
    }
    annotations.push_back({"NB" + std::to_string(nb_index), IntervalKind::NB, t,
                           t + config.final_nb_s});
    t += config.final_nb_s;
    const double total_s = t;

    const EnvelopeSchedule envelope(holds, config.recovery_tau_s);

    // beat schedule with mild period jitter; a warm-up stretch before t = 0
    // settles the coupling recursions, and beats are kept clear of the edges
    // so every rendered peak is detectable
    const double mean_period = 1.0 / config.heart_rate_hz;
    const double edge_lead = 0.1;
    const double edge_tail = 0.35;
    std::vector<double> beat_times;
    double tau = -40.0 * mean_period;
    while (true) {
        const double jitter = std::clamp(config.hr_jitter_frac * rng.normal(), -0.3, 0.3);
        tau += mean_period * (1.0 + jitter);
        if (tau > total_s - edge_tail) break;
        if (tau >= 0.0 && tau < edge_lead) tau = edge_lead;
        beat_times.push_back(tau);
    }
    const std::size_t n_beats = beat_times.size();
    std::size_t first_in_window = 0;
    while (first_in_window < n_beats && beat_times[first_in_window] < 0.0) ++first_in_window;
    if (n_beats - first_in_window < 8) {
        throw std::invalid_argument("ProtocolConfig durations too short to schedule beats");
    }

    // PPG envelopes: slow protocol trend plus beat-level excitation
    const double rise_peak = config.bh_bp_rise_mmhg /
                             (config.sbp_coupling.dc_gain() * config.ppg_peak_base);
    const double rise_trough = config.dbp_rise_mmhg /
                               (config.dbp_coupling.dc_gain() * config.ppg_trough_base);
    std::vector<double> u_peak(n_beats), u_trough(n_beats);
    for (std::size_t k = 0; k < n_beats; ++k) {
        const double env = envelope(beat_times[k]);
        u_peak[k] = config.ppg_peak_base * (1.0 + rise_peak * env) *
                    (1.0 + config.ppg_jitter_frac * rng.normal());
        u_trough[k] = config.ppg_trough_base * (1.0 + rise_trough * env) *
                      (1.0 + config.ppg_jitter_frac * rng.normal());
    }

    // correlated beat noise on the two pressure channels
    std::vector<double> noise_s(n_beats), noise_d(n_beats);
    const double rho = config.noise_correlation;
    const double rho_rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t k = 0; k < n_beats; ++k) {
        const double g1 = rng.normal();
        const double g2 = rng.normal();
        noise_s[k] = config.noise_sd_mmhg * g1;
        noise_d[k] = config.dbp_noise_ratio * config.noise_sd_mmhg * (rho * g1 + rho_rest * g2);
    }

    const std::vector<double> sbp =
        run_coupling(config.sbp_coupling, u_peak, config.ppg_peak_base, noise_s);
    const std::vector<double> dbp =
        run_coupling(config.dbp_coupling, u_trough, config.ppg_trough_base, noise_d);

    // rendering
    const auto n_samples =
        static_cast<std::size_t>(std::ceil(total_s * config.sample_rate_hz - 1e-9));
    RecordingSession session;
    session.subject_id = config.subject_id;
    session.bp = UniformSignal{config.sample_rate_hz, 0.0,
                               render_waveform(n_samples, config.sample_rate_hz, beat_times,
                                               sbp, dbp),
                               SignalLabel::BP};
    session.ppg = UniformSignal{config.sample_rate_hz, 0.0,
                                render_waveform(n_samples, config.sample_rate_hz, beat_times,
                                                u_peak, u_trough),
                                SignalLabel::PPG};
    session.annotations = annotations;

    GroundTruth truth;
    truth.sbp_coupling = config.sbp_coupling;
    truth.dbp_coupling = config.dbp_coupling;
    truth.annotations = annotations;
    for (std::size_t k = first_in_window; k < n_beats; ++k) {
        truth.beat_times_s.push_back(beat_times[k]);
        truth.sbp.push_back(sbp[k]);
        truth.dbp.push_back(dbp[k]);
        truth.map.push_back((2.0 * dbp[k] + sbp[k]) / 3.0);
        truth.ppg_peak.push_back(u_peak[k]);
        truth.ppg_trough.push_back(u_trough[k]);
    }
    return SynthResult{std::move(session), std::move(truth)};
}

void write_ground_truth_csv(const std::filesystem::path& path, const GroundTruth& truth) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "beat_t_s,sbp_mmhg,dbp_mmhg,map_mmhg,ppg_peak,ppg_trough\n";
    for (std::size_t k = 0; k < truth.beat_times_s.size(); ++k) {
        out << format_double(truth.beat_times_s[k]) << ',' << format_double(truth.sbp[k]) << ','
            << format_double(truth.dbp[k]) << ',' << format_double(truth.map[k]) << ','
            << format_double(truth.ppg_peak[k]) << ',' << format_double(truth.ppg_trough[k])
            << '\n';
    }
}

GroundTruth read_ground_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    GroundTruth truth;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<double, 6> fields{};
        std::size_t pos = 0;
        for (int f = 0; f < 6; ++f) {
            const std::size_t next = line.find(',', pos);
            fields[static_cast<std::size_t>(f)] =
                parse_double(line.substr(pos, next == std::string::npos ? next : next - pos));
            pos = next == std::string::npos ? line.size() : next + 1;
        }
        truth.beat_times_s.push_back(fields[0]);
        truth.sbp.push_back(fields[1]);
        truth.dbp.push_back(fields[2]);
        truth.map.push_back(fields[3]);
        truth.ppg_peak.push_back(fields[4]);
        truth.ppg_trough.push_back(fields[5]);
    }
    return truth;
}

} // namespace ppgbp
