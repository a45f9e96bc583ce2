#pragma once

#include "ppgbp/model_io.hpp"
#include "ppgbp/peaks.hpp"
#include "ppgbp/signal.hpp"
#include "ppgbp/spline.hpp"
#include "ppgbp/stats.hpp"
#include "ppgbp/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ppgbp {

struct DetectionConfig {
    PeakDetectionParams bp = default_bp_params();
    PpgDetectionConfig ppg;
};

enum class SelectionMode { MinMse, MinAic };
const char* to_string(SelectionMode mode);

struct FitConfig {
    // Pressures and PPG envelopes evolve per beat, so the modeling grid
    // defaults to beat scale rather than the raw 100 Hz signal rate. On the
    // dense grid the spline tracks are locally polynomial and a one-step
    // least-squares fit collapses into a near-integrator with vanishing
    // residuals, which says nothing about the PPG-to-BP coupling.
    double model_rate_hz = 1.25;
    OrderBounds bounds;
    SelectionMode selection = SelectionMode::MinMse;
};

struct EvalConfig {
    ErrorMetric metric = ErrorMetric::OneStep;
    double alpha = 0.05;
};

/// All five feature tracks resampled onto one shared grid (anchored at the
/// latest first beat and trimmed to the earliest last beat across features).
struct SubjectTracks {
    std::string subject_id;
    FeatureTrack sbp, dbp, map, ppg_peak, ppg_trough;
    std::vector<IntervalAnnotation> annotations;
};

SubjectTracks prepare_subject_tracks(const RecordingSession& session,
                                     const DetectionConfig& detection, double model_rate_hz);

/// Track sample indices falling inside the half-open annotation window.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};
IndexRange track_range(const FeatureTrack& track, const IntervalAnnotation& annotation);

struct IntervalFit {
    IntervalAnnotation annotation;
    FeatureKind feature = FeatureKind::SBP; // SBP or DBP
    ModelSelectionResult selection;
    ArxModel chosen;
};

struct SubjectFits {
    std::string subject_id;
    std::vector<IntervalFit> fits;
    std::vector<std::string> skipped; // intervals where every grid cell failed
};

/// One SBP and one DBP model per annotated interval (11 + 11 for the default
/// protocol). Interval failures are recorded and the run continues.
SubjectFits fit_subject(const SubjectTracks& tracks, const FitConfig& config);

struct SubjectEvaluation {
    std::string subject_id;
    std::vector<ErrorSeries> model_errors;      // SBP/DBP/MAP per interval
    std::vector<ErrorSeries> prediction_errors; // cross-interval, same kind
    std::vector<std::string> warnings;
};

/// max_lead is the lag-context length used at fit time (bounds.max_first_row());
/// matching it keeps rmse(model errors)^2 equal to the stored fit_mse.
SubjectEvaluation evaluate_subject(const SubjectTracks& tracks, const SubjectFits& fits,
                                   const EvalConfig& config,
                                   std::size_t max_lead = OrderBounds{}.max_first_row());

struct StudyReport {
    SummaryTable model_by_interval;          // Tables I/II analog
    SummaryTable prediction_by_source;       // Tables III/IV analog
    std::optional<ConsistencyReport> consistency; // Table V analog, >= 2 subjects
    std::string consistency_note;            // set when consistency is absent
    std::vector<std::string> warnings;
};

StudyReport evaluate_study(const std::vector<SubjectEvaluation>& evaluations, double alpha);

// --- file-level orchestration (used by the CLI and the acceptance suite) ---

struct SynthStudyConfig {
    ProtocolConfig protocol;     // per-subject template
    int n_subjects = 15;
    std::uint64_t seed = 1;
    double subject_variation = 0.08; // relative spread of heart rate etc.
};

struct SessionFileSet {
    std::string subject_id;
    std::filesystem::path recording;
    std::filesystem::path annotations;
    std::filesystem::path truth;
};

/// Writes <subject>_recording.csv / _annotations.csv / _truth.csv per subject
/// plus manifest.json; returns the manifest entries.
std::vector<SessionFileSet> run_synth(const SynthStudyConfig& config,
                                      const std::filesystem::path& out_dir);

std::vector<SessionFileSet> discover_sessions(const std::filesystem::path& dir);

struct FitOutputs {
    std::string subject_id;
    std::size_t n_models = 0;
    std::vector<std::string> skipped;
};

/// Fits every subject and writes <subject>_<interval>_<feature>.model.json
/// plus a grid CSV per fit. `jobs` > 1 fits subjects in parallel; outputs are
/// byte-identical to a sequential run.
std::vector<FitOutputs> run_fit(const std::vector<SessionFileSet>& sessions,
                                const DetectionConfig& detection, const FitConfig& fit,
                                const std::filesystem::path& models_dir, int jobs = 1);

struct EvaluateOutputs {
    StudyReport report;
    std::vector<std::string> warnings;
};

/// Emits table1..table5 analog CSVs, residual files, long-format plot data,
/// measured-vs-estimated tracks and report.json into out_dir.
EvaluateOutputs run_evaluate(const std::vector<SessionFileSet>& sessions,
                             const std::filesystem::path& models_dir,
                             const DetectionConfig& detection, const FitConfig& fit,
                             const EvalConfig& eval, const std::filesystem::path& out_dir);

} // namespace ppgbp
