// Command-line front end: synthetic-protocol generation, per-interval model
// fitting, and study evaluation with table/report emission.

#include "ppgbp/csv_io.hpp"
#include "ppgbp/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitWarnings = 1;
constexpr int kExitInvalidInput = 2;

struct Options {
    // [detection]
    double bp_height_mmhg = 15.0;
    double bp_prominence_mmhg = 15.0;
    std::uint64_t bp_distance_samples = 20;
    std::string ppg_prominence_mode = "iqr";
    double ppg_prominence_value = 0.5;
    std::string ppg_height_mode = "median";
    double ppg_height_value = 0.0;
    std::uint64_t ppg_distance_samples = 20;

    // [fit]
    double model_rate_hz = 1.25;
    std::string selection = "mse";
    int na_min = 1, na_max = 5, nb_min = 1, nb_max = 5, nk_min = 0, nk_max = 5;
    int jobs = 1;

    // [eval]
    std::string error_metric = "one-step";
    double alpha = 0.05;

    // [synth]
    std::uint64_t seed = 1;
    int subjects = 15;
    ppgbp::ProtocolConfig protocol = ppgbp::default_protocol_config();
    std::vector<double> sbp_coupling_a, sbp_coupling_b, dbp_coupling_a, dbp_coupling_b;
    int sbp_coupling_nk = -1, dbp_coupling_nk = -1;
    double subject_variation = 0.08;

    // paths
    std::string config_path;
    std::string out_dir;
    std::string sessions_dir;
    std::string models_dir;
};

// --- config file ------------------------------------------------------------

struct KeyBinding {
    std::function<void(const std::string&)> apply;
    std::vector<CLI::Option*> flags;
};

using Bindings = std::map<std::string, KeyBinding>;

void parse_into(const std::string& raw, double& var) { var = ppgbp::parse_double(raw); }
void parse_into(const std::string& raw, int& var) { var = std::stoi(raw); }
void parse_into(const std::string& raw, std::uint64_t& var) { var = std::stoull(raw); }
void parse_into(const std::string& raw, std::string& var) { var = raw; }
void parse_into(const std::string& raw, std::vector<double>& var) {
    var.clear();
    std::stringstream ss(raw);
    std::string field;
    while (std::getline(ss, field, ',')) var.push_back(ppgbp::parse_double(field));
}

template <typename T>
void bind_key(Bindings& bindings, const std::string& key, T& var, CLI::Option* flag = nullptr) {
    auto& binding = bindings[key];
    binding.apply = [&var](const std::string& raw) { parse_into(raw, var); };
    if (flag) binding.flags.push_back(flag);
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    const auto last = s.find_last_not_of(" \t\r");
    return first == std::string::npos ? "" : s.substr(first, last - first + 1);
}

/// Flat INI: [section] then key=value; '#' and ';' start comments. Values set
/// on the command line always win over the file.
void apply_config_file(const std::string& path, Bindings& bindings) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key=value");
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = bindings.find(key);
        if (it == bindings.end()) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": unknown config key '" + key + "'");
        }
        bool overridden = false;
        for (const CLI::Option* flag : it->second.flags) {
            if (flag && flag->count() > 0) overridden = true;
        }
        if (!overridden) it->second.apply(value);
    }
}

// --- option groups ----------------------------------------------------------

void add_detection_options(CLI::App* cmd, Options& opt, Bindings& bindings) {
    bind_key(bindings, "detection.bp.height_mmhg", opt.bp_height_mmhg,
             cmd->add_option("--bp-height-mmhg", opt.bp_height_mmhg,
                             "Minimum BP peak height (mmHg)")->capture_default_str());
    bind_key(bindings, "detection.bp.prominence_mmhg", opt.bp_prominence_mmhg,
             cmd->add_option("--bp-prominence-mmhg", opt.bp_prominence_mmhg,
                             "Minimum BP peak prominence (mmHg)")->capture_default_str());
    bind_key(bindings, "detection.bp.distance_samples", opt.bp_distance_samples,
             cmd->add_option("--bp-distance-samples", opt.bp_distance_samples,
                             "Minimum BP peak separation (samples)")->capture_default_str());
    bind_key(bindings, "detection.ppg.prominence_mode", opt.ppg_prominence_mode,
             cmd->add_option("--ppg-prominence-mode", opt.ppg_prominence_mode,
                             "PPG prominence threshold mode: iqr | fixed")
                 ->check(CLI::IsMember({"iqr", "fixed"}))->capture_default_str());
    bind_key(bindings, "detection.ppg.prominence_value", opt.ppg_prominence_value,
             cmd->add_option("--ppg-prominence-value", opt.ppg_prominence_value,
                             "IQR factor (iqr mode) or absolute prominence (fixed mode)")
                 ->capture_default_str());
    bind_key(bindings, "detection.ppg.height_mode", opt.ppg_height_mode,
             cmd->add_option("--ppg-height-mode", opt.ppg_height_mode,
                             "PPG height threshold mode: median | fixed")
                 ->check(CLI::IsMember({"median", "fixed"}))->capture_default_str());
    bind_key(bindings, "detection.ppg.height_value", opt.ppg_height_value,
             cmd->add_option("--ppg-height-value", opt.ppg_height_value,
                             "Absolute PPG height threshold (fixed mode)")->capture_default_str());
    bind_key(bindings, "detection.ppg.distance_samples", opt.ppg_distance_samples,
             cmd->add_option("--ppg-distance-samples", opt.ppg_distance_samples,
                             "Minimum PPG peak separation (samples)")->capture_default_str());
}

void add_fit_options(CLI::App* cmd, Options& opt, Bindings& bindings, bool with_jobs) {
    bind_key(bindings, "fit.model_rate_hz", opt.model_rate_hz,
             cmd->add_option("--model-rate-hz", opt.model_rate_hz,
                             "Feature-track resampling rate for modeling (Hz)")
                 ->capture_default_str());
    bind_key(bindings, "fit.selection", opt.selection,
             cmd->add_option("--selection", opt.selection, "Model selection rule: mse | aic")
                 ->check(CLI::IsMember({"mse", "aic"}))->capture_default_str());
    bind_key(bindings, "fit.na_min", opt.na_min,
             cmd->add_option("--na-min", opt.na_min, "Smallest output order")->capture_default_str());
    bind_key(bindings, "fit.na_max", opt.na_max,
             cmd->add_option("--na-max", opt.na_max, "Largest output order")->capture_default_str());
    bind_key(bindings, "fit.nb_min", opt.nb_min,
             cmd->add_option("--nb-min", opt.nb_min, "Smallest input order")->capture_default_str());
    bind_key(bindings, "fit.nb_max", opt.nb_max,
             cmd->add_option("--nb-max", opt.nb_max, "Largest input order")->capture_default_str());
    bind_key(bindings, "fit.nk_min", opt.nk_min,
             cmd->add_option("--nk-min", opt.nk_min, "Smallest pure delay")->capture_default_str());
    bind_key(bindings, "fit.nk_max", opt.nk_max,
             cmd->add_option("--nk-max", opt.nk_max, "Largest pure delay")->capture_default_str());
    if (with_jobs) {
        bind_key(bindings, "fit.jobs", opt.jobs,
                 cmd->add_option("--jobs", opt.jobs, "Subjects fitted in parallel")
                     ->capture_default_str());
    }
}

void add_eval_options(CLI::App* cmd, Options& opt, Bindings& bindings) {
    bind_key(bindings, "eval.error_metric", opt.error_metric,
             cmd->add_option("--error-metric", opt.error_metric,
                             "Residual definition: one-step | free-run")
                 ->check(CLI::IsMember({"one-step", "free-run"}))->capture_default_str());
    bind_key(bindings, "eval.alpha", opt.alpha,
             cmd->add_option("--alpha", opt.alpha,
                             "Significance level for the subject comparisons")
                 ->capture_default_str());
}

void add_synth_options(CLI::App* cmd, Options& opt, Bindings& bindings) {
    auto& p = opt.protocol;
    bind_key(bindings, "synth.seed", opt.seed,
             cmd->add_option("--seed", opt.seed, "Study seed")->capture_default_str());
    bind_key(bindings, "synth.subjects", opt.subjects,
             cmd->add_option("--subjects", opt.subjects, "Number of subjects")
                 ->capture_default_str());
    bind_key(bindings, "synth.baseline_nb_s", p.baseline_nb_s,
             cmd->add_option("--baseline-nb-s", p.baseline_nb_s, "Baseline NB duration (s)")
                 ->capture_default_str());
    bind_key(bindings, "synth.n_breath_holds", p.n_breath_holds,
             cmd->add_option("--n-breath-holds", p.n_breath_holds, "Breath-hold count")
                 ->capture_default_str());
    bind_key(bindings, "synth.bh_min_s", p.bh_duration_min_s,
             cmd->add_option("--bh-min-s", p.bh_duration_min_s, "Shortest hold (s)")
                 ->capture_default_str());
    bind_key(bindings, "synth.bh_max_s", p.bh_duration_max_s,
             cmd->add_option("--bh-max-s", p.bh_duration_max_s, "Longest hold (s)")
                 ->capture_default_str());
    bind_key(bindings, "synth.recovery_s", p.inter_bh_recovery_s,
             cmd->add_option("--recovery-s", p.inter_bh_recovery_s,
                             "Recovery after each hold (s)")->capture_default_str());
    bind_key(bindings, "synth.final_nb_s", p.final_nb_s,
             cmd->add_option("--final-nb-s", p.final_nb_s, "Final NB duration (s)")
                 ->capture_default_str());
    bind_key(bindings, "synth.sample_rate_hz", p.sample_rate_hz,
             cmd->add_option("--sample-rate-hz", p.sample_rate_hz, "Signal sample rate (Hz)")
                 ->capture_default_str());
    bind_key(bindings, "synth.heart_rate_hz", p.heart_rate_hz,
             cmd->add_option("--heart-rate-hz", p.heart_rate_hz, "Mean heart rate (Hz)")
                 ->capture_default_str());
    bind_key(bindings, "synth.hr_jitter_frac", p.hr_jitter_frac,
             cmd->add_option("--hr-jitter-frac", p.hr_jitter_frac,
                             "Relative beat-period jitter")->capture_default_str());
    bind_key(bindings, "synth.bh_bp_rise_mmhg", p.bh_bp_rise_mmhg,
             cmd->add_option("--bh-bp-rise-mmhg", p.bh_bp_rise_mmhg,
                             "Systolic rise at full breath-hold response (mmHg)")
                 ->capture_default_str());
    bind_key(bindings, "synth.dbp_rise_mmhg", p.dbp_rise_mmhg,
             cmd->add_option("--dbp-rise-mmhg", p.dbp_rise_mmhg,
                             "Diastolic rise at full response (mmHg)")->capture_default_str());
    bind_key(bindings, "synth.recovery_tau_s", p.recovery_tau_s,
             cmd->add_option("--recovery-tau-s", p.recovery_tau_s,
                             "Envelope decay time constant (s)")->capture_default_str());
    bind_key(bindings, "synth.noise_sd_mmhg", p.noise_sd_mmhg,
             cmd->add_option("--noise-sd", p.noise_sd_mmhg,
                             "Beat-level noise SD on the systolic channel (mmHg)")
                 ->capture_default_str());
    bind_key(bindings, "synth.dbp_noise_ratio", p.dbp_noise_ratio,
             cmd->add_option("--dbp-noise-ratio", p.dbp_noise_ratio,
                             "Diastolic-to-systolic noise ratio")->capture_default_str());
    bind_key(bindings, "synth.noise_correlation", p.noise_correlation,
             cmd->add_option("--noise-correlation", p.noise_correlation,
                             "Correlation between the two noise channels")->capture_default_str());
    bind_key(bindings, "synth.ppg_peak_base", p.ppg_peak_base,
             cmd->add_option("--ppg-peak-base", p.ppg_peak_base,
                             "PPG peak-envelope baseline (a.u.)")->capture_default_str());
    bind_key(bindings, "synth.ppg_trough_base", p.ppg_trough_base,
             cmd->add_option("--ppg-trough-base", p.ppg_trough_base,
                             "PPG trough-envelope baseline (a.u.)")->capture_default_str());
    bind_key(bindings, "synth.ppg_jitter_frac", p.ppg_jitter_frac,
             cmd->add_option("--ppg-jitter-frac", p.ppg_jitter_frac,
                             "Beat-level PPG envelope jitter")->capture_default_str());
    bind_key(bindings, "synth.subject_variation", opt.subject_variation,
             cmd->add_option("--subject-variation", opt.subject_variation,
                             "Relative physiologic spread between subjects")
                 ->capture_default_str());
    bind_key(bindings, "synth.sbp_coupling_a", opt.sbp_coupling_a,
             cmd->add_option("--sbp-coupling-a", opt.sbp_coupling_a,
                             "Systolic coupling a coefficients (comma list)")->delimiter(','));
    bind_key(bindings, "synth.sbp_coupling_b", opt.sbp_coupling_b,
             cmd->add_option("--sbp-coupling-b", opt.sbp_coupling_b,
                             "Systolic coupling b coefficients (comma list)")->delimiter(','));
    bind_key(bindings, "synth.sbp_coupling_nk", opt.sbp_coupling_nk,
             cmd->add_option("--sbp-coupling-nk", opt.sbp_coupling_nk,
                             "Systolic coupling pure delay (beats)"));
    bind_key(bindings, "synth.dbp_coupling_a", opt.dbp_coupling_a,
             cmd->add_option("--dbp-coupling-a", opt.dbp_coupling_a,
                             "Diastolic coupling a coefficients (comma list)")->delimiter(','));
    bind_key(bindings, "synth.dbp_coupling_b", opt.dbp_coupling_b,
             cmd->add_option("--dbp-coupling-b", opt.dbp_coupling_b,
                             "Diastolic coupling b coefficients (comma list)")->delimiter(','));
    bind_key(bindings, "synth.dbp_coupling_nk", opt.dbp_coupling_nk,
             cmd->add_option("--dbp-coupling-nk", opt.dbp_coupling_nk,
                             "Diastolic coupling pure delay (beats)"));
}

// --- config assembly --------------------------------------------------------

ppgbp::DetectionConfig detection_config(const Options& opt) {
    ppgbp::DetectionConfig config;
    config.bp.min_peak_height = opt.bp_height_mmhg;
    config.bp.min_peak_prominence = opt.bp_prominence_mmhg;
    config.bp.min_peak_distance_samples = static_cast<std::size_t>(opt.bp_distance_samples);
    config.ppg.prominence_from_iqr = opt.ppg_prominence_mode == "iqr";
    config.ppg.prominence_value = opt.ppg_prominence_value;
    config.ppg.height_from_median = opt.ppg_height_mode == "median";
    config.ppg.height_value = opt.ppg_height_value;
    config.ppg.distance_samples = static_cast<std::size_t>(opt.ppg_distance_samples);
    return config;
}

ppgbp::FitConfig fit_config(const Options& opt) {
    ppgbp::FitConfig config;
    config.model_rate_hz = opt.model_rate_hz;
    config.bounds = ppgbp::OrderBounds{opt.na_min, opt.na_max, opt.nb_min,
                                       opt.nb_max, opt.nk_min, opt.nk_max};
    config.selection = opt.selection == "aic" ? ppgbp::SelectionMode::MinAic
                                              : ppgbp::SelectionMode::MinMse;
    if (!(config.model_rate_hz > 0.0)) {
        throw std::invalid_argument("fit.model_rate_hz must be positive");
    }
    return config;
}

ppgbp::EvalConfig eval_config(const Options& opt) {
    ppgbp::EvalConfig config;
    config.metric = opt.error_metric == "free-run" ? ppgbp::ErrorMetric::FreeRun
                                                   : ppgbp::ErrorMetric::OneStep;
    config.alpha = opt.alpha;
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        throw std::invalid_argument("eval.alpha must be in (0, 1)");
    }
    return config;
}

ppgbp::SynthStudyConfig synth_config(const Options& opt) {
    ppgbp::SynthStudyConfig config;
    config.protocol = opt.protocol;
    config.n_subjects = opt.subjects;
    config.seed = opt.seed;
    config.subject_variation = opt.subject_variation;
    if (!opt.sbp_coupling_a.empty() || !opt.sbp_coupling_b.empty() || opt.sbp_coupling_nk >= 0) {
        auto& c = config.protocol.sbp_coupling;
        if (!opt.sbp_coupling_a.empty()) c.a = opt.sbp_coupling_a;
        if (!opt.sbp_coupling_b.empty()) c.b = opt.sbp_coupling_b;
        if (opt.sbp_coupling_nk >= 0) c.orders.n_k = opt.sbp_coupling_nk;
        c.orders.n_a = static_cast<int>(c.a.size());
        c.orders.n_b = static_cast<int>(c.b.size());
    }
    if (!opt.dbp_coupling_a.empty() || !opt.dbp_coupling_b.empty() || opt.dbp_coupling_nk >= 0) {
        auto& c = config.protocol.dbp_coupling;
        if (!opt.dbp_coupling_a.empty()) c.a = opt.dbp_coupling_a;
        if (!opt.dbp_coupling_b.empty()) c.b = opt.dbp_coupling_b;
        if (opt.dbp_coupling_nk >= 0) c.orders.n_k = opt.dbp_coupling_nk;
        c.orders.n_a = static_cast<int>(c.a.size());
        c.orders.n_b = static_cast<int>(c.b.size());
    }
    return config;
}

// --- subcommand actions -----------------------------------------------------

int do_synth(const Options& opt) {
    const auto config = synth_config(opt);
    const auto sessions = ppgbp::run_synth(config, opt.out_dir);
    std::cout << "synth: " << sessions.size() << " subjects, seed " << config.seed
              << ", noise sd " << config.protocol.noise_sd_mmhg << " mmHg"
              << (config.protocol.noise_sd_mmhg == 0.0 ? " (noise-free)" : "") << " -> "
              << opt.out_dir << "\n";
    return kExitOk;
}

int do_fit(const Options& opt) {
    const auto sessions = ppgbp::discover_sessions(opt.sessions_dir);
    const auto outputs = ppgbp::run_fit(sessions, detection_config(opt), fit_config(opt),
                                        opt.models_dir.empty() ? opt.out_dir : opt.models_dir,
                                        opt.jobs);
    std::size_t models = 0, skipped = 0;
    for (const auto& o : outputs) {
        models += o.n_models;
        skipped += o.skipped.size();
        for (const auto& s : o.skipped) std::cout << "skip: " << s << "\n";
    }
    std::cout << "fit: " << outputs.size() << " subjects, " << models << " models, " << skipped
              << " skipped, selection=" << opt.selection << " -> "
              << (opt.models_dir.empty() ? opt.out_dir : opt.models_dir) << "\n";
    return kExitOk;
}

int do_evaluate(const Options& opt) {
    const auto sessions = ppgbp::discover_sessions(opt.sessions_dir);
    const auto outputs = ppgbp::run_evaluate(sessions, opt.models_dir, detection_config(opt),
                                             fit_config(opt), eval_config(opt), opt.out_dir);

    auto print_cells = [](const ppgbp::SummaryTable& table, const char* name) {
        std::cout << name << " rMSE (mmHg):";
        for (const auto& [key, cell] : table) {
            std::cout << ' ' << ppgbp::to_string(key.first) << '/' << key.second << '='
                      << ppgbp::format_double(std::round(cell.rmse_mmhg * 1000.0) / 1000.0);
        }
        std::cout << "\n";
    };
    print_cells(outputs.report.model_by_interval, "model");
    if (!outputs.report.prediction_by_source.empty()) {
        print_cells(outputs.report.prediction_by_source, "prediction");
    }
    if (outputs.report.consistency) {
        std::cout << "consistency: " << outputs.report.consistency->total_unequal << " of "
                  << outputs.report.consistency->total_pairs
                  << " subject pairs tested unequal\n";
    } else {
        std::cout << "note: " << outputs.report.consistency_note << "\n";
    }
    for (const auto& w : outputs.warnings) std::cout << "warning: " << w << "\n";
    std::cout << "evaluate: reports written to " << opt.out_dir << "\n";
    return outputs.warnings.empty() ? kExitOk : kExitWarnings;
}

} // namespace

int main(int argc, char** argv) {
    Options opt;
    Bindings bindings;

    CLI::App app{"Beat-to-beat blood-pressure feature estimation from PPG via "
                 "per-interval ARX models"};
    app.require_subcommand(1);
    app.add_option("--config", opt.config_path,
                   "INI config file with sections [detection], [fit], [synth], [eval]; "
                   "command-line flags override file values");

    CLI::App* synth = app.add_subcommand("synth", "Generate synthetic breath-hold sessions");
    synth->add_option("--out", opt.out_dir, "Output directory")->required();
    add_synth_options(synth, opt, bindings);

    CLI::App* fit = app.add_subcommand("fit", "Fit per-interval SBP/DBP models");
    fit->add_option("--sessions", opt.sessions_dir, "Directory with session CSVs")->required();
    fit->add_option("--out", opt.out_dir, "Directory for model files")->required();
    add_detection_options(fit, opt, bindings);
    add_fit_options(fit, opt, bindings, true);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Compute error tables and reports");
    evaluate->add_option("--sessions", opt.sessions_dir, "Directory with session CSVs")
        ->required();
    evaluate->add_option("--models", opt.models_dir, "Directory with fitted model files")
        ->required();
    evaluate->add_option("--out", opt.out_dir, "Directory for reports")->required();
    add_detection_options(evaluate, opt, bindings);
    add_fit_options(evaluate, opt, bindings, false);
    add_eval_options(evaluate, opt, bindings);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitInvalidInput;
    }

    try {
        if (!opt.config_path.empty()) apply_config_file(opt.config_path, bindings);
        if (synth->parsed()) return do_synth(opt);
        if (fit->parsed()) return do_fit(opt);
        if (evaluate->parsed()) return do_evaluate(opt);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidInput;
    }
    return kExitOk;
}
