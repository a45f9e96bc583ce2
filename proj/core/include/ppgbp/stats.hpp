#pragma once

#include "ppgbp/arx.hpp"
#include "ppgbp/signal.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ppgbp {

/// Residual samples (measured - estimated) for one evaluation of one model on
/// one interval. For a model error, source_model_label == interval_label.
struct ErrorSeries {
    FeatureKind feature = FeatureKind::SBP;
    std::string subject_id;
    std::string interval_label;       // the interval the residuals come from
    IntervalKind kind = IntervalKind::NB;
    std::string source_model_label;   // the interval the model was fit on
    std::vector<double> residuals;    // mmHg
};

/// Root mean square of the residuals; errors on empty input.
double rmse(std::span<const double> residuals);

/// Applies the model to the interval it was fit on; rmse of the result equals
/// sqrt(fit_mse) when metric is one-step.
enum class ErrorMetric { OneStep, FreeRun };

/// min_row defers the first residual: when the slice carries pre-interval lag
/// context, min_row keeps targets inside the interval proper.
ErrorSeries model_error_series(const ArxModel& model, std::span<const double> y,
                               std::span<const double> u, FeatureKind feature,
                               const std::string& subject_id, const IntervalAnnotation& interval,
                               ErrorMetric metric = ErrorMetric::OneStep, std::size_t min_row = 0);

struct IntervalTrackPair {
    IntervalAnnotation annotation;
    std::vector<double> y;
    std::vector<double> u;
    std::size_t lead = 0; // pre-interval lag samples at the head of y/u
};

struct CrossPredictionResult {
    std::vector<ErrorSeries> series;   // k*(k-1) entries for k usable intervals
    std::vector<std::string> warnings; // skips (target too short for a model)
};

/// Applies each interval's model to every *other* interval of the same kind.
CrossPredictionResult cross_prediction_matrix(
    const std::map<std::string, ArxModel>& models_by_interval,
    const std::vector<IntervalTrackPair>& tracks, IntervalKind kind, FeatureKind feature,
    const std::string& subject_id, ErrorMetric metric = ErrorMetric::OneStep);

struct SummaryCell {
    double rmse_mmhg = 0.0;
    double mean_mmhg = 0.0;
    double std_mmhg = 0.0; // sample standard deviation
    std::size_t n_samples = 0;
    std::size_t n_series = 0;
};

/// Pooled per (feature, interval-label) cell: residual samples from every
/// series in the group are concatenated before the statistics are computed
/// (never a mean of per-series rMSEs). Series are pooled in sorted key order
/// so parallel callers get identical floating-point results.
enum class GroupBy { TargetInterval, SourceInterval };
using SummaryTable = std::map<std::pair<FeatureKind, std::string>, SummaryCell>;

SummaryTable summarize(const std::vector<ErrorSeries>& errors, GroupBy grouping);

// --- subject-consistency statistics ---------------------------------------

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
    std::size_t df_between = 0;
    std::size_t df_within = 0;
    double ms_within = 0.0;
};

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

/// Upper-alpha quantile of the studentized range distribution with k groups
/// and df degrees of freedom (numerical integration + bisection).
double studentized_range_quantile(double alpha, int k, double df);

/// P(Q <= q) for the studentized range.
double studentized_range_cdf(double q, int k, double df);

/// All-pairs Tukey-Kramer comparison at level alpha. Returns the indices of
/// group pairs (i < j) whose means test unequal.
std::vector<std::pair<std::size_t, std::size_t>> tukey_kramer_unequal_pairs(
    const std::vector<std::vector<double>>& groups, double alpha);

enum class ErrorType { Model, Prediction };
const char* to_string(ErrorType type);

struct ConsistencyCell {
    IntervalKind kind = IntervalKind::NB;
    FeatureKind feature = FeatureKind::SBP;
    ErrorType error_type = ErrorType::Model;
    std::size_t unequal_pairs = 0;
    std::size_t total_pairs = 0;
    AnovaResult anova;
    std::vector<std::pair<std::string, std::string>> unequal_subject_pairs;
};

struct ConsistencyReport {
    std::vector<ConsistencyCell> cells; // 2 kinds x 3 features x 2 error types
    std::size_t total_unequal = 0;
    std::size_t total_pairs = 0;
    double unequal_fraction = 0.0;
};

/// ANOVA plus Tukey-Kramer across subjects for every
/// (kind, feature, error-type) cell. Residuals are grouped per subject at the
/// beat level; each subject needs at least 2 samples in every populated cell.
ConsistencyReport subject_consistency(const std::vector<ErrorSeries>& model_errors,
                                      const std::vector<ErrorSeries>& prediction_errors,
                                      double alpha = 0.05);

} // namespace ppgbp
