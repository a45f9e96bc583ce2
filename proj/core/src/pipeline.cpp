#include "ppgbp/pipeline.hpp"

#include "ppgbp/csv_io.hpp"
#include "ppgbp/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ppgbp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SelectionMode mode) {
    return mode == SelectionMode::MinMse ? "mse" : "aic";
}

SubjectTracks prepare_subject_tracks(const RecordingSession& session,
                                     const DetectionConfig& detection, double model_rate_hz) {
    const auto validation = validate_session(session);
    if (!validation.ok()) {
        std::string msg = "invalid session " + session.subject_id + ":";
        for (const auto& v : validation.violations) msg += " [" + v + "]";
        throw std::invalid_argument(msg);
    }

    const BpFeatures bp = extract_bp_features(session.bp, detection.bp);
    const PpgFeatures ppg =
        extract_ppg_features(session.ppg, resolve_ppg_params(session.ppg, detection.ppg));

    // One shared grid across features, so the SBP/DBP/MAP targets and the PPG
    // input tracks are sampled at identical instants.
    const double start = std::max({bp.sbp.times_s.front(), bp.dbp.times_s.front(),
                                   bp.map.times_s.front(), ppg.peaks.times_s.front(),
                                   ppg.troughs.times_s.front()});
    const double end = std::min({bp.sbp.times_s.back(), bp.dbp.times_s.back(),
                                 bp.map.times_s.back(), ppg.peaks.times_s.back(),
                                 ppg.troughs.times_s.back()});
    const ResampleGrid grid{model_rate_hz, start, end};

    SubjectTracks tracks;
    tracks.subject_id = session.subject_id;
    tracks.sbp = spline_resample(bp.sbp, grid);
    tracks.dbp = spline_resample(bp.dbp, grid);
    tracks.map = spline_resample(bp.map, grid);
    tracks.ppg_peak = spline_resample(ppg.peaks, grid);
    tracks.ppg_trough = spline_resample(ppg.troughs, grid);
    tracks.annotations = session.annotations;
    return tracks;
}

IndexRange track_range(const FeatureTrack& track, const IntervalAnnotation& annotation) {
    const double rate = track.sample_rate_hz;
    auto first_at_or_after = [&](double t) {
        const double pos = (t - track.t0_s) * rate;
        const auto k = static_cast<long long>(std::ceil(pos - 1e-9));
        return static_cast<std::size_t>(std::clamp<long long>(
            k, 0, static_cast<long long>(track.size())));
    };
    IndexRange range;
    range.begin = first_at_or_after(annotation.start_s);
    range.end = first_at_or_after(annotation.end_s);
    if (range.end < range.begin) range.end = range.begin;
    return range;
}

namespace {

/// Interval window extended by up to max_lead pre-interval samples of lag
/// context; regression targets start at `lead`, inside the interval proper.
struct LeadRange {
    IndexRange with_lead;
    std::size_t lead = 0;
};

LeadRange lead_range(const FeatureTrack& track, const IntervalAnnotation& annotation,
                     std::size_t max_lead) {
    const IndexRange range = track_range(track, annotation);
    const std::size_t lead = std::min(range.begin, max_lead);
    return {IndexRange{range.begin - lead, range.end}, lead};
}

std::span<const double> slice(const FeatureTrack& track, const IndexRange& range) {
    return std::span<const double>(track.values).subspan(range.begin, range.size());
}

struct FeatureChannel {
    FeatureKind feature;
    const FeatureTrack* y;
    const FeatureTrack* u;
};

std::vector<FeatureChannel> model_channels(const SubjectTracks& tracks) {
    return {{FeatureKind::SBP, &tracks.sbp, &tracks.ppg_peak},
            {FeatureKind::DBP, &tracks.dbp, &tracks.ppg_trough}};
}

/// Predicted output over slice samples max(m0, min_row) onward (a diverged
/// free run may truncate it).
std::vector<double> predict(const ArxModel& model, std::span<const double> y,
                            std::span<const double> u, ErrorMetric metric, std::size_t min_row) {
    if (metric == ErrorMetric::OneStep) return one_step_predict(model, y, u, min_row);
    const std::size_t start = std::max(model.orders.first_row(), min_row);
    if (y.size() <= start) throw std::invalid_argument("track too short for the model's warm-up");
    return simulate_free_run(model, y.subspan(0, start), u).values;
}

/// MAP residuals from paired SBP/DBP estimates: map_hat = (2*dbp_hat + sbp_hat)/3.
ErrorSeries map_error_series(const ArxModel& sbp_model, const ArxModel& dbp_model,
                             const SubjectTracks& tracks, const IntervalAnnotation& target,
                             const std::string& source_label, ErrorMetric metric,
                             std::size_t max_lead) {
    const LeadRange lr = lead_range(tracks.map, target, max_lead);
    const auto sbp_hat = predict(sbp_model, slice(tracks.sbp, lr.with_lead),
                                 slice(tracks.ppg_peak, lr.with_lead), metric, lr.lead);
    const auto dbp_hat = predict(dbp_model, slice(tracks.dbp, lr.with_lead),
                                 slice(tracks.ppg_trough, lr.with_lead), metric, lr.lead);

    const std::size_t start_s = std::max(sbp_model.orders.first_row(), lr.lead);
    const std::size_t start_d = std::max(dbp_model.orders.first_row(), lr.lead);
    const std::size_t first = std::max(start_s, start_d);
    const std::size_t last = std::min(start_s + sbp_hat.size(), start_d + dbp_hat.size());
    if (last <= first) throw std::invalid_argument("interval too short for paired MAP estimates");

    ErrorSeries series;
    series.feature = FeatureKind::MAP;
    series.subject_id = tracks.subject_id;
    series.interval_label = target.label;
    series.kind = target.kind;
    series.source_model_label = source_label;
    series.residuals.reserve(last - first);
    const auto map_slice = slice(tracks.map, lr.with_lead);
    for (std::size_t m = first; m < last; ++m) {
        const double est = (2.0 * dbp_hat[m - start_d] + sbp_hat[m - start_s]) / 3.0;
        series.residuals.push_back(map_slice[m] - est);
    }
    return series;
}

std::string fit_key(const std::string& interval, FeatureKind feature) {
    return interval + "/" + to_string(feature);
}

} // namespace

SubjectFits fit_subject(const SubjectTracks& tracks, const FitConfig& config) {
    SubjectFits result;
    result.subject_id = tracks.subject_id;
    const std::size_t max_lead = config.bounds.max_first_row();
    for (const auto& annotation : tracks.annotations) {
        for (const auto& channel : model_channels(tracks)) {
            const LeadRange lr = lead_range(*channel.y, annotation, max_lead);
            try {
                ModelSelectionResult selection =
                    grid_search(slice(*channel.y, lr.with_lead), slice(*channel.u, lr.with_lead),
                                config.bounds, lr.lead);
                IntervalFit fit;
                fit.annotation = annotation;
                fit.feature = channel.feature;
                fit.chosen = config.selection == SelectionMode::MinMse ? selection.best_by_mse
                                                                       : selection.best_by_aic;
                fit.selection = std::move(selection);
                result.fits.push_back(std::move(fit));
            } catch (const std::exception& e) {
                result.skipped.push_back(tracks.subject_id + " " + annotation.label + " " +
                                         to_string(channel.feature) + ": " + e.what());
            }
        }
    }
    return result;
}

SubjectEvaluation evaluate_subject(const SubjectTracks& tracks, const SubjectFits& fits,
                                   const EvalConfig& config) {
    SubjectEvaluation eval;
    eval.subject_id = tracks.subject_id;

    std::map<std::string, const IntervalFit*> by_key;
    for (const auto& fit : fits.fits) by_key[fit_key(fit.annotation.label, fit.feature)] = &fit;

    // model errors on the fitting interval
    for (const auto& annotation : tracks.annotations) {
        for (const auto& channel : model_channels(tracks)) {
            auto it = by_key.find(fit_key(annotation.label, channel.feature));
            if (it == by_key.end()) continue;
            const IndexRange range = track_range(*channel.y, annotation);
            try {
                eval.model_errors.push_back(model_error_series(
                    it->second->chosen, slice(*channel.y, range), slice(*channel.u, range),
                    channel.feature, tracks.subject_id, annotation, config.metric));
            } catch (const std::exception& e) {
                eval.warnings.push_back(tracks.subject_id + " " + annotation.label + " " +
                                        to_string(channel.feature) + ": " + e.what());
            }
        }
        const auto sbp_it = by_key.find(fit_key(annotation.label, FeatureKind::SBP));
        const auto dbp_it = by_key.find(fit_key(annotation.label, FeatureKind::DBP));
        if (sbp_it != by_key.end() && dbp_it != by_key.end()) {
            try {
                eval.model_errors.push_back(map_error_series(sbp_it->second->chosen,
                                                             dbp_it->second->chosen, tracks,
                                                             annotation, annotation.label,
                                                             config.metric));
            } catch (const std::exception& e) {
                eval.warnings.push_back(tracks.subject_id + " " + annotation.label +
                                        " MAP: " + e.what());
            }
        }
    }

    // cross-interval prediction errors, congruent kinds only
    for (IntervalKind kind : {IntervalKind::NB, IntervalKind::BH}) {
        for (const auto& channel : model_channels(tracks)) {
            std::map<std::string, ArxModel> models;
            std::vector<IntervalTrackPair> pairs;
            for (const auto& annotation : tracks.annotations) {
                if (annotation.kind != kind) continue;
                auto it = by_key.find(fit_key(annotation.label, channel.feature));
                if (it == by_key.end()) continue;
                models[annotation.label] = it->second->chosen;
                const IndexRange range = track_range(*channel.y, annotation);
                IntervalTrackPair pair;
                pair.annotation = annotation;
                pair.y.assign(channel.y->values.begin() + static_cast<std::ptrdiff_t>(range.begin),
                              channel.y->values.begin() + static_cast<std::ptrdiff_t>(range.end));
                pair.u.assign(channel.u->values.begin() + static_cast<std::ptrdiff_t>(range.begin),
                              channel.u->values.begin() + static_cast<std::ptrdiff_t>(range.end));
                pairs.push_back(std::move(pair));
            }
            if (pairs.size() < 2) {
                eval.warnings.push_back(tracks.subject_id + ": fewer than 2 " +
                                        std::string(to_string(kind)) + " intervals with " +
                                        to_string(channel.feature) +
                                        " models; cross-prediction skipped");
                continue;
            }
            auto cross = cross_prediction_matrix(models, pairs, kind, channel.feature,
                                                 tracks.subject_id, config.metric);
            for (auto& s : cross.series) eval.prediction_errors.push_back(std::move(s));
            for (auto& w : cross.warnings) eval.warnings.push_back(std::move(w));
        }

        // MAP prediction errors pair the source interval's SBP and DBP models
        std::vector<const IntervalAnnotation*> congruent;
        for (const auto& annotation : tracks.annotations) {
            if (annotation.kind == kind &&
                by_key.count(fit_key(annotation.label, FeatureKind::SBP)) &&
                by_key.count(fit_key(annotation.label, FeatureKind::DBP))) {
                congruent.push_back(&annotation);
            }
        }
        if (congruent.size() < 2) continue;
        for (const auto* source : congruent) {
            const ArxModel& sbp_model = by_key.at(fit_key(source->label, FeatureKind::SBP))->chosen;
            const ArxModel& dbp_model = by_key.at(fit_key(source->label, FeatureKind::DBP))->chosen;
            for (const auto* target : congruent) {
                if (target == source) continue;
                try {
                    eval.prediction_errors.push_back(map_error_series(
                        sbp_model, dbp_model, tracks, *target, source->label, config.metric));
                } catch (const std::exception& e) {
                    eval.warnings.push_back(tracks.subject_id + ": " + source->label + " -> " +
                                            target->label + " MAP skipped (" + e.what() + ")");
                }
            }
        }
    }
    return eval;
}

StudyReport evaluate_study(const std::vector<SubjectEvaluation>& evaluations, double alpha) {
    StudyReport report;
    std::vector<ErrorSeries> model_errors, prediction_errors;
    std::set<std::string> subjects;
    for (const auto& eval : evaluations) {
        subjects.insert(eval.subject_id);
        model_errors.insert(model_errors.end(), eval.model_errors.begin(),
                            eval.model_errors.end());
        prediction_errors.insert(prediction_errors.end(), eval.prediction_errors.begin(),
                                 eval.prediction_errors.end());
        report.warnings.insert(report.warnings.end(), eval.warnings.begin(), eval.warnings.end());
    }
    if (model_errors.empty()) throw std::runtime_error("evaluate_study: no model errors");

    report.model_by_interval = summarize(model_errors, GroupBy::TargetInterval);
    if (!prediction_errors.empty()) {
        report.prediction_by_source = summarize(prediction_errors, GroupBy::SourceInterval);
    }

    if (subjects.size() < 2) {
        report.consistency_note =
            "subject-consistency analysis suppressed: ANOVA needs at least 2 subjects";
    } else {
        try {
            report.consistency = subject_consistency(model_errors, prediction_errors, alpha);
        } catch (const std::exception& e) {
            report.consistency_note = std::string("subject-consistency analysis failed: ") +
                                      e.what();
        }
    }
    return report;
}

// --- file-level orchestration -----------------------------------------------

namespace {

std::string subject_name(int index, int total) {
    const int width = total >= 100 ? 3 : 2;
    std::string digits = std::to_string(index);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return "subj" + digits;
}

ProtocolConfig subject_config(const SynthStudyConfig& study, int index) {
    ProtocolConfig config = study.protocol;
    config.subject_id = subject_name(index, study.n_subjects);
    config.rng_seed = Rng::derive_seed(study.seed, static_cast<std::uint64_t>(index));

    // Mild physiologic spread between subjects: heart rate, operating points
    // and the breath-hold response differ, the error distribution does not.
    Rng rng(Rng::derive_seed(study.seed, 0x5u * 1000003u + static_cast<std::uint64_t>(index)));
    const double v = study.subject_variation;
    config.heart_rate_hz *= 1.0 + v * (2.0 * rng.uniform() - 1.0);
    const double sbp_scale = 1.0 + 0.5 * v * (2.0 * rng.uniform() - 1.0);
    const double dbp_scale = 1.0 + 0.5 * v * (2.0 * rng.uniform() - 1.0);
    for (auto& b : config.sbp_coupling.b) b *= sbp_scale;
    for (auto& b : config.dbp_coupling.b) b *= dbp_scale;
    config.bh_bp_rise_mmhg *= 1.0 + 2.0 * v * (2.0 * rng.uniform() - 1.0);
    config.dbp_rise_mmhg *= 1.0 + 2.0 * v * (2.0 * rng.uniform() - 1.0);
    return config;
}

void write_manifest(const fs::path& path, const SynthStudyConfig& config,
                    const std::vector<SessionFileSet>& sessions) {
    json subjects = json::array();
    for (const auto& s : sessions) {
        subjects.push_back({{"id", s.subject_id},
                            {"recording", s.recording.filename().string()},
                            {"annotations", s.annotations.filename().string()},
                            {"truth", s.truth.filename().string()}});
    }
    const json manifest = {
        {"seed", config.seed},
        {"n_subjects", config.n_subjects},
        {"noise_sd_mmhg", config.protocol.noise_sd_mmhg},
        {"noise_free", config.protocol.noise_sd_mmhg == 0.0},
        {"sample_rate_hz", config.protocol.sample_rate_hz},
        {"subjects", subjects},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << manifest.dump(2) << '\n';
}

} // namespace

std::vector<SessionFileSet> run_synth(const SynthStudyConfig& config, const fs::path& out_dir) {
    if (config.n_subjects < 1) {
        throw std::invalid_argument("SynthStudyConfig.n_subjects must be >= 1");
    }
    validate_protocol_config(config.protocol);
    fs::create_directories(out_dir);

    std::vector<SessionFileSet> sessions;
    for (int i = 1; i <= config.n_subjects; ++i) {
        const ProtocolConfig subject = subject_config(config, i);
        const SynthResult result = generate_session(subject);

        SessionFileSet files;
        files.subject_id = subject.subject_id;
        files.recording = out_dir / (subject.subject_id + "_recording.csv");
        files.annotations = out_dir / (subject.subject_id + "_annotations.csv");
        files.truth = out_dir / (subject.subject_id + "_truth.csv");
        write_session(files.recording, files.annotations, result.session);
        write_ground_truth_csv(files.truth, result.truth);
        sessions.push_back(std::move(files));
    }
    write_manifest(out_dir / "manifest.json", config, sessions);
    return sessions;
}

std::vector<SessionFileSet> discover_sessions(const fs::path& dir) {
    std::vector<SessionFileSet> sessions;
    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        json manifest;
        in >> manifest;
        for (const auto& entry : manifest.at("subjects")) {
            SessionFileSet files;
            files.subject_id = entry.at("id").get<std::string>();
            files.recording = dir / entry.at("recording").get<std::string>();
            files.annotations = dir / entry.at("annotations").get<std::string>();
            if (entry.contains("truth")) files.truth = dir / entry.at("truth").get<std::string>();
            sessions.push_back(std::move(files));
        }
        return sessions;
    }

    const std::string suffix = "_recording.csv";
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
        SessionFileSet files;
        files.subject_id = name.substr(0, name.size() - suffix.size());
        files.recording = entry.path();
        files.annotations = dir / (files.subject_id + "_annotations.csv");
        if (!fs::exists(files.annotations)) {
            throw std::runtime_error("missing annotations file for subject " + files.subject_id);
        }
        sessions.push_back(std::move(files));
    }
    std::sort(sessions.begin(), sessions.end(),
              [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
    if (sessions.empty()) {
        throw std::runtime_error("no sessions found in " + dir.string());
    }
    return sessions;
}

namespace {

void write_grid_csv(const fs::path& path, const ModelSelectionResult& selection) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "n_a,n_b,n_k,status,n_rows,mse,aic\n";
    for (const auto& cell : selection.grid) {
        out << cell.orders.n_a << ',' << cell.orders.n_b << ',' << cell.orders.n_k << ','
            << to_string(cell.status) << ',';
        if (cell.status == GridCellStatus::Ok) {
            out << cell.model->n_samples_used << ',' << format_double(cell.model->fit_mse) << ','
                << format_double(cell.aic);
        } else {
            out << ",,";
        }
        out << '\n';
    }
}

FitOutputs fit_one_subject(const SessionFileSet& files, const DetectionConfig& detection,
                           const FitConfig& fit, const fs::path& models_dir) {
    const RecordingSession session =
        read_session(files.recording, files.annotations, files.subject_id);
    const SubjectTracks tracks = prepare_subject_tracks(session, detection, fit.model_rate_hz);
    const SubjectFits fits = fit_subject(tracks, fit);

    FitOutputs outputs;
    outputs.subject_id = files.subject_id;
    outputs.skipped = fits.skipped;
    for (const auto& interval_fit : fits.fits) {
        const std::string stem = files.subject_id + "_" + interval_fit.annotation.label + "_" +
                                 to_string(interval_fit.feature);
        ModelRecord record{interval_fit.feature, interval_fit.annotation.label,
                           interval_fit.chosen};
        write_model_json(models_dir / (stem + ".model.json"), record);
        write_grid_csv(models_dir / (stem + ".grid.csv"), interval_fit.selection);
        ++outputs.n_models;
    }
    return outputs;
}

} // namespace

std::vector<FitOutputs> run_fit(const std::vector<SessionFileSet>& sessions,
                                const DetectionConfig& detection, const FitConfig& fit,
                                const fs::path& models_dir, int jobs) {
    fs::create_directories(models_dir);
    std::vector<FitOutputs> outputs(sessions.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            outputs[i] = fit_one_subject(sessions[i], detection, fit, models_dir);
        }
        return outputs;
    }

    // Subjects are independent and write disjoint files, so the result is
    // byte-identical for any worker count.
    std::vector<std::future<FitOutputs>> futures;
    futures.reserve(sessions.size());
    std::size_t next = 0;
    while (next < sessions.size() || !futures.empty()) {
        while (next < sessions.size() && futures.size() < static_cast<std::size_t>(jobs)) {
            futures.push_back(std::async(std::launch::async, fit_one_subject,
                                         std::cref(sessions[next]), std::cref(detection),
                                         std::cref(fit), std::cref(models_dir)));
            ++next;
        }
        const std::size_t done = next - futures.size();
        outputs[done] = futures.front().get();
        futures.erase(futures.begin());
    }
    return outputs;
}

namespace {

std::map<std::string, std::vector<ModelRecord>> load_models(
    const fs::path& models_dir, const std::vector<SessionFileSet>& sessions) {
    std::map<std::string, std::vector<ModelRecord>> by_subject;
    const std::string suffix = ".model.json";
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(models_dir)) {
        if (entry.path().filename().string().ends_with(suffix)) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& path : paths) {
        const ModelRecord record = read_model_json(path);
        const std::string expected_tail = "_" + record.interval_label + "_" +
                                          to_string(record.feature) + suffix;
        const std::string name = path.filename().string();
        if (name.size() <= expected_tail.size() || !name.ends_with(expected_tail)) {
            throw std::runtime_error("model file name does not match its contents: " +
                                     path.string());
        }
        by_subject[name.substr(0, name.size() - expected_tail.size())].push_back(record);
    }
    for (const auto& files : sessions) {
        if (!by_subject.count(files.subject_id)) {
            throw std::runtime_error("no model files for subject " + files.subject_id + " in " +
                                     models_dir.string());
        }
    }
    return by_subject;
}

std::string label_for(FeatureKind feature) { return to_string(feature); }

std::vector<std::string> sorted_labels(const std::set<std::string>& labels) {
    std::vector<std::string> out(labels.begin(), labels.end());
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    });
    return out;
}

void write_rmse_table(const fs::path& path, const SummaryTable& table,
                      const std::vector<std::string>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "feature";
    for (const auto& label : labels) out << ',' << label;
    out << '\n';
    for (FeatureKind feature : {FeatureKind::SBP, FeatureKind::DBP, FeatureKind::MAP}) {
        out << label_for(feature);
        for (const auto& label : labels) {
            out << ',';
            auto it = table.find({feature, label});
            if (it != table.end()) out << format_double(it->second.rmse_mmhg);
        }
        out << '\n';
    }
}

void write_residuals_csv(const fs::path& path, const std::vector<SubjectEvaluation>& evals,
                         bool prediction) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "subject,feature,kind,source_interval,target_interval,sample_index,residual_mmhg\n";
    for (const auto& eval : evals) {
        const auto& pool = prediction ? eval.prediction_errors : eval.model_errors;
        for (const auto& series : pool) {
            for (std::size_t i = 0; i < series.residuals.size(); ++i) {
                out << series.subject_id << ',' << to_string(series.feature) << ','
                    << to_string(series.kind) << ',' << series.source_model_label << ','
                    << series.interval_label << ',' << i << ','
                    << format_double(series.residuals[i]) << '\n';
            }
        }
    }
}

void write_plot_long_csv(const fs::path& path, const StudyReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "feature,interval,statistic,value\n";
    auto emit = [&](const SummaryTable& table, const std::string& prefix) {
        for (const auto& [key, cell] : table) {
            const auto& [feature, label] = key;
            out << to_string(feature) << ',' << label << ',' << prefix << "_rmse,"
                << format_double(cell.rmse_mmhg) << '\n';
            out << to_string(feature) << ',' << label << ',' << prefix << "_mean,"
                << format_double(cell.mean_mmhg) << '\n';
            out << to_string(feature) << ',' << label << ',' << prefix << "_std,"
                << format_double(cell.std_mmhg) << '\n';
        }
    };
    emit(report.model_by_interval, "model");
    emit(report.prediction_by_source, "prediction");
}

void write_table5_csv(const fs::path& path, const ConsistencyReport& consistency) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "feature,BH_model,BH_prediction,NB_model,NB_prediction\n";
    auto count_of = [&](FeatureKind feature, IntervalKind kind, ErrorType type) -> std::string {
        for (const auto& cell : consistency.cells) {
            if (cell.feature == feature && cell.kind == kind && cell.error_type == type) {
                return std::to_string(cell.unequal_pairs);
            }
        }
        return "";
    };
    for (FeatureKind feature : {FeatureKind::SBP, FeatureKind::DBP, FeatureKind::MAP}) {
        out << label_for(feature) << ',' << count_of(feature, IntervalKind::BH, ErrorType::Model)
            << ',' << count_of(feature, IntervalKind::BH, ErrorType::Prediction) << ','
            << count_of(feature, IntervalKind::NB, ErrorType::Model) << ','
            << count_of(feature, IntervalKind::NB, ErrorType::Prediction) << '\n';
    }
}

// Measured-vs-estimated series for the fitted interval of every feature; the
// estimate is reconstructed as measured minus residual.
void write_tracks_csv(const fs::path& path, const std::vector<SubjectEvaluation>& evals,
                      const std::map<std::string, SubjectTracks>& tracks_by_subject) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "subject,feature,interval,t_s,measured_mmhg,estimated_mmhg\n";
    for (const auto& eval : evals) {
        const SubjectTracks& tracks = tracks_by_subject.at(eval.subject_id);
        for (const auto& series : eval.model_errors) {
            const FeatureTrack* track = nullptr;
            switch (series.feature) {
                case FeatureKind::SBP: track = &tracks.sbp; break;
                case FeatureKind::DBP: track = &tracks.dbp; break;
                case FeatureKind::MAP: track = &tracks.map; break;
                default: continue;
            }
            const IntervalAnnotation* annotation = nullptr;
            for (const auto& a : tracks.annotations) {
                if (a.label == series.interval_label) annotation = &a;
            }
            if (!annotation) continue;
            const IndexRange range = track_range(*track, *annotation);
            const std::size_t offset = range.size() - series.residuals.size();
            for (std::size_t i = 0; i < series.residuals.size(); ++i) {
                const std::size_t idx = range.begin + offset + i;
                out << eval.subject_id << ',' << to_string(series.feature) << ','
                    << series.interval_label << ',' << format_double(track->time_at(idx)) << ','
                    << format_double(track->values[idx]) << ','
                    << format_double(track->values[idx] - series.residuals[i]) << '\n';
            }
        }
    }
}

json summary_to_json(const SummaryTable& table) {
    json out = json::array();
    for (const auto& [key, cell] : table) {
        out.push_back({{"feature", to_string(key.first)},
                       {"interval", key.second},
                       {"rmse_mmhg", cell.rmse_mmhg},
                       {"mean_mmhg", cell.mean_mmhg},
                       {"std_mmhg", cell.std_mmhg},
                       {"n_samples", cell.n_samples},
                       {"n_series", cell.n_series}});
    }
    return out;
}

void write_report_json(const fs::path& path, const StudyReport& report,
                       const FitConfig& fit, const EvalConfig& eval, std::size_t n_subjects) {
    json j;
    j["n_subjects"] = n_subjects;
    j["config"] = {{"model_rate_hz", fit.model_rate_hz},
                   {"selection", to_string(fit.selection)},
                   {"error_metric", eval.metric == ErrorMetric::OneStep ? "one-step" : "free-run"},
                   {"alpha", eval.alpha}};
    j["model_errors"] = summary_to_json(report.model_by_interval);
    j["prediction_errors"] = summary_to_json(report.prediction_by_source);
    if (report.consistency) {
        json cells = json::array();
        for (const auto& cell : report.consistency->cells) {
            json pairs = json::array();
            for (const auto& [a, b] : cell.unequal_subject_pairs) pairs.push_back({a, b});
            cells.push_back({{"kind", to_string(cell.kind)},
                             {"feature", to_string(cell.feature)},
                             {"error_type", to_string(cell.error_type)},
                             {"unequal_pairs", cell.unequal_pairs},
                             {"total_pairs", cell.total_pairs},
                             {"anova_f", cell.anova.f_statistic},
                             {"anova_p", cell.anova.p_value},
                             {"unequal_subject_pairs", pairs}});
        }
        j["consistency"] = {{"cells", cells},
                            {"total_unequal", report.consistency->total_unequal},
                            {"total_pairs", report.consistency->total_pairs},
                            {"unequal_fraction", report.consistency->unequal_fraction}};
    } else {
        j["consistency"] = nullptr;
        j["consistency_note"] = report.consistency_note;
    }
    j["warnings"] = report.warnings;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace

EvaluateOutputs run_evaluate(const std::vector<SessionFileSet>& sessions,
                             const fs::path& models_dir, const DetectionConfig& detection,
                             const FitConfig& fit, const EvalConfig& eval,
                             const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const auto models = load_models(models_dir, sessions);

    std::vector<SubjectEvaluation> evaluations;
    std::map<std::string, SubjectTracks> tracks_by_subject;
    for (const auto& files : sessions) {
        const RecordingSession session =
            read_session(files.recording, files.annotations, files.subject_id);
        SubjectTracks tracks = prepare_subject_tracks(session, detection, fit.model_rate_hz);

        SubjectFits fits;
        fits.subject_id = files.subject_id;
        for (const ModelRecord& record : models.at(files.subject_id)) {
            const IntervalAnnotation* annotation = nullptr;
            for (const auto& a : tracks.annotations) {
                if (a.label == record.interval_label) annotation = &a;
            }
            if (!annotation) {
                throw std::runtime_error("model " + files.subject_id + "/" +
                                         record.interval_label +
                                         " has no matching annotation in the session");
            }
            IntervalFit interval_fit;
            interval_fit.annotation = *annotation;
            interval_fit.feature = record.feature;
            interval_fit.chosen = record.model;
            fits.fits.push_back(std::move(interval_fit));
        }
        evaluations.push_back(evaluate_subject(tracks, fits, eval));
        tracks_by_subject.emplace(files.subject_id, std::move(tracks));
    }

    StudyReport report = evaluate_study(evaluations, eval.alpha);

    // interval labels per kind, from the evaluated series
    std::set<std::string> nb_labels, bh_labels;
    for (const auto& evaluation : evaluations) {
        for (const auto& series : evaluation.model_errors) {
            (series.kind == IntervalKind::NB ? nb_labels : bh_labels)
                .insert(series.interval_label);
        }
    }

    write_rmse_table(out_dir / "table1_nb_model.csv", report.model_by_interval,
                     sorted_labels(nb_labels));
    write_rmse_table(out_dir / "table2_bh_model.csv", report.model_by_interval,
                     sorted_labels(bh_labels));
    write_rmse_table(out_dir / "table3_nb_prediction.csv", report.prediction_by_source,
                     sorted_labels(nb_labels));
    write_rmse_table(out_dir / "table4_bh_prediction.csv", report.prediction_by_source,
                     sorted_labels(bh_labels));
    if (report.consistency) {
        write_table5_csv(out_dir / "table5_counts.csv", *report.consistency);
    }
    write_residuals_csv(out_dir / "residuals_model.csv", evaluations, false);
    write_residuals_csv(out_dir / "residuals_prediction.csv", evaluations, true);
    write_plot_long_csv(out_dir / "plot_long.csv", report);
    write_tracks_csv(out_dir / "fig3_tracks.csv", evaluations, tracks_by_subject);
    write_report_json(out_dir / "report.json", report, fit, eval, sessions.size());

    EvaluateOutputs outputs;
    outputs.warnings = report.warnings;
    outputs.report = std::move(report);
    return outputs;
}

} // namespace ppgbp
