#pragma once

#include "ppgbp/arx.hpp"
#include "ppgbp/signal.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ppgbp {

/// A beat-level ARX relation used as generator ground truth. The DC gain
/// sum(b) / (1 + sum(a)) maps the input envelope level to the output pressure
/// baseline, so the default couplings are scaled to physiologic values.
struct CouplingConfig {
    ArxOrders orders;
    std::vector<double> a;
    std::vector<double> b;

    double dc_gain() const;
    /// Spectral radius of the AR companion matrix; must be < 1.
    double pole_radius() const;
};

/// Breath-hold protocol: baseline NB, then n breath-holds each followed by a
/// fixed recovery, then a final NB window. The baseline, the first four
/// recoveries and the final window are the six annotated NB analysis
/// intervals; the recovery after the last hold stays unannotated.
struct ProtocolConfig {
    double baseline_nb_s = 60.0;
    int n_breath_holds = 5;
    double bh_duration_min_s = 20.0;
    double bh_duration_max_s = 60.0;
    double inter_bh_recovery_s = 90.0;
    double final_nb_s = 60.0;

    double sample_rate_hz = 100.0;
    double heart_rate_hz = 1.2;
    double hr_jitter_frac = 0.03;

    double bh_bp_rise_mmhg = 20.0;  // systolic rise at full envelope
    double dbp_rise_mmhg = 10.0;    // diastolic channel, reduced gain
    double recovery_tau_s = 20.0;   // envelope decay after a hold

    double noise_sd_mmhg = 2.0;      // beat-level additive noise SD, systolic
    double dbp_noise_ratio = 0.95;
    double noise_correlation = 0.95; // corr(systolic, diastolic beat noise)

    double ppg_peak_base = 1.0;     // arbitrary PPG units
    double ppg_trough_base = 0.4;
    double ppg_jitter_frac = 0.02;  // beat-level excitation on both envelopes

    CouplingConfig sbp_coupling;    // defaults set by default_protocol_config()
    CouplingConfig dbp_coupling;

    std::uint64_t rng_seed = 1;
    std::string subject_id = "subj01";

    double total_duration_s() const;
};

ProtocolConfig default_protocol_config();

/// Throws std::invalid_argument naming the offending field.
void validate_protocol_config(const ProtocolConfig& config);

struct GroundTruth {
    std::vector<double> beat_times_s;
    std::vector<double> sbp;
    std::vector<double> dbp;
    std::vector<double> map;
    std::vector<double> ppg_peak;
    std::vector<double> ppg_trough;
    CouplingConfig sbp_coupling;
    CouplingConfig dbp_coupling;
    std::vector<IntervalAnnotation> annotations;
};

struct SynthResult {
    RecordingSession session;
    GroundTruth truth;
};

/// Deterministic under a fixed seed. The emitted session always passes
/// validate_session, and running the detector with the blood-pressure
/// defaults on the rendered waveform recovers the true beat values to within
/// 0.1 mmHg.
SynthResult generate_session(const ProtocolConfig& config);

void write_ground_truth_csv(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth_csv(const std::filesystem::path& path);

} // namespace ppgbp
