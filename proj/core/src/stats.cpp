#include "ppgbp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace ppgbp {

double rmse(std::span<const double> residuals) {
    if (residuals.empty()) throw std::invalid_argument("rmse: empty residual vector");
    double sum_sq = 0.0;
    for (double r : residuals) sum_sq += r * r;
    return std::sqrt(sum_sq / static_cast<double>(residuals.size()));
}

ErrorSeries model_error_series(const ArxModel& model, std::span<const double> y,
                               std::span<const double> u, FeatureKind feature,
                               const std::string& subject_id, const IntervalAnnotation& interval,
                               ErrorMetric metric, std::size_t min_row) {
    ErrorSeries series;
    series.feature = feature;
    series.subject_id = subject_id;
    series.interval_label = interval.label;
    series.kind = interval.kind;
    series.source_model_label = interval.label;

    const std::size_t m0 = std::max(model.orders.first_row(), min_row);
    if (metric == ErrorMetric::OneStep) {
        const auto yhat = one_step_predict(model, y, u, min_row);
        series.residuals.resize(yhat.size());
        for (std::size_t i = 0; i < yhat.size(); ++i) {
            series.residuals[i] = y[m0 + i] - yhat[i];
        }
    } else {
        if (y.size() <= m0) throw std::invalid_argument("track too short for the model's warm-up");
        const auto sim = simulate_free_run(model, y.subspan(0, m0), u);
        series.residuals.resize(sim.values.size());
        for (std::size_t i = 0; i < sim.values.size(); ++i) {
            series.residuals[i] = y[m0 + i] - sim.values[i];
        }
    }
    return series;
}

CrossPredictionResult cross_prediction_matrix(
    const std::map<std::string, ArxModel>& models_by_interval,
    const std::vector<IntervalTrackPair>& tracks, IntervalKind kind, FeatureKind feature,
    const std::string& subject_id, ErrorMetric metric) {
    std::vector<const IntervalTrackPair*> congruent;
    for (const auto& t : tracks) {
        if (t.annotation.kind == kind && models_by_interval.count(t.annotation.label)) {
            congruent.push_back(&t);
        }
    }
    if (congruent.size() < 2) {
        throw std::invalid_argument("cross_prediction_matrix: need at least 2 congruent "
                                    "intervals with valid models");
    }

    CrossPredictionResult result;
    for (const auto* source : congruent) {
        const ArxModel& model = models_by_interval.at(source->annotation.label);
        for (const auto* target : congruent) {
            if (target == source) continue; // never pair an interval with itself
            try {
                ErrorSeries series = model_error_series(model, target->y, target->u, feature,
                                                        subject_id, target->annotation, metric,
                                                        target->lead);
                series.source_model_label = source->annotation.label;
                result.series.push_back(std::move(series));
            } catch (const std::invalid_argument&) {
                result.warnings.push_back(subject_id + ": " + source->annotation.label + " -> " +
                                          target->annotation.label +
                                          " skipped (target too short for the model)");
            }
        }
    }
    return result;
}

SummaryTable summarize(const std::vector<ErrorSeries>& errors, GroupBy grouping) {
    if (errors.empty()) throw std::invalid_argument("summarize: empty error set");

    // Deterministic pooling order regardless of how the caller produced the
    // series (possibly in parallel).
    std::vector<const ErrorSeries*> sorted;
    sorted.reserve(errors.size());
    for (const auto& e : errors) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [](const ErrorSeries* a, const ErrorSeries* b) {
        return std::tie(a->feature, a->subject_id, a->source_model_label, a->interval_label) <
               std::tie(b->feature, b->subject_id, b->source_model_label, b->interval_label);
    });

    std::map<std::pair<FeatureKind, std::string>, std::vector<double>> pooled;
    for (const auto* e : sorted) {
        const std::string& key = grouping == GroupBy::TargetInterval ? e->interval_label
                                                                     : e->source_model_label;
        auto& bucket = pooled[{e->feature, key}];
        bucket.insert(bucket.end(), e->residuals.begin(), e->residuals.end());
    }

    SummaryTable table;
    for (auto& [key, residuals] : pooled) {
        if (residuals.empty()) continue;
        SummaryCell cell;
        cell.n_samples = residuals.size();
        cell.rmse_mmhg = rmse(residuals);
        const double n = static_cast<double>(residuals.size());
        cell.mean_mmhg = std::accumulate(residuals.begin(), residuals.end(), 0.0) / n;
        if (residuals.size() > 1) {
            double ss = 0.0;
            for (double r : residuals) ss += (r - cell.mean_mmhg) * (r - cell.mean_mmhg);
            cell.std_mmhg = std::sqrt(ss / (n - 1.0));
        }
        table[key] = cell;
    }
    for (const auto* e : sorted) {
        const std::string& key = grouping == GroupBy::TargetInterval ? e->interval_label
                                                                     : e->source_model_label;
        ++table[{e->feature, key}].n_series;
    }
    return table;
}

// --- distribution helpers ---------------------------------------------------

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Regularized incomplete beta via Lentz's continued fraction.
double inc_beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-15;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * inc_beta_cf(a, b, x) / a;
    return 1.0 - bt * inc_beta_cf(b, a, 1.0 - x) / b;
}

/// Survival function of the F distribution.
double f_sf(double f, double df1, double df2) {
    if (f <= 0.0) return 1.0;
    return reg_inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGlNode[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                               0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                               0.9445750230732326, 0.9894009349916499};
constexpr double kGlWeight[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                 0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                 0.0622535239386479, 0.0271524594117541};

template <typename F>
double gauss_legendre(F&& f, double lo, double hi, int panels) {
    double total = 0.0;
    const double width = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double mid = lo + (p + 0.5) * width;
        const double half = 0.5 * width;
        double acc = 0.0;
        for (int i = 0; i < 8; ++i) {
            acc += kGlWeight[i] * (f(mid - half * kGlNode[i]) + f(mid + half * kGlNode[i]));
        }
        total += acc * half;
    }
    return total;
}

/// P(range of k iid standard normals <= r).
double normal_range_cdf(double r, int k) {
    if (r <= 0.0) return 0.0;
    if (k == 1) return 1.0;
    auto integrand = [&](double x) {
        const double w = norm_cdf(x + r) - norm_cdf(x);
        return norm_pdf(x) * std::pow(w, k - 1);
    };
    return std::min(1.0, k * gauss_legendre(integrand, -8.5, 8.5, 20));
}

} // namespace

double studentized_range_cdf(double q, int k, double df) {
    if (q <= 0.0) return 0.0;
    if (df > 1e8) return normal_range_cdf(q, k);

    // s = sqrt(chi2_df / df); log-density keeps large df stable.
    const double half = df / 2.0;
    const double log_norm = std::log(2.0) + half * std::log(half) - std::lgamma(half);
    auto s_density = [&](double s) {
        return std::exp(log_norm + (df - 1.0) * std::log(s) - half * s * s);
    };
    const double sd_s = 1.0 / std::sqrt(2.0 * df);
    const double lo = std::max(1e-8, 1.0 - 14.0 * sd_s);
    const double hi = 1.0 + 14.0 * sd_s;
    auto integrand = [&](double s) { return s_density(s) * normal_range_cdf(q * s, k); };
    return std::min(1.0, gauss_legendre(integrand, lo, hi, 12));
}

double studentized_range_quantile(double alpha, int k, double df) {
    if (k < 2) throw std::invalid_argument("studentized range needs k >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
    if (!(df >= 2.0)) throw std::invalid_argument("df must be >= 2");

    static std::map<std::tuple<double, int, double>, double> cache;
    static std::mutex cache_mutex;
    {
        std::lock_guard lock(cache_mutex);
        auto it = cache.find({alpha, k, df});
        if (it != cache.end()) return it->second;
    }

    const double target = 1.0 - alpha;
    double lo = 0.0, hi = 8.0;
    while (studentized_range_cdf(hi, k, df) < target) hi *= 2.0;
    for (int iter = 0; iter < 80 && hi - lo > 1e-10 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (studentized_range_cdf(mid, k, df) < target ? lo : hi) = mid;
    }
    const double q = 0.5 * (lo + hi);

    std::lock_guard lock(cache_mutex);
    cache.emplace(std::make_tuple(alpha, k, df), q);
    return q;
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw std::invalid_argument("anova_oneway: need at least 2 groups");
    std::size_t total_n = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw std::invalid_argument("anova_oneway: every group needs >= 2 samples");
        total_n += g.size();
        grand_sum += std::accumulate(g.begin(), g.end(), 0.0);
    }
    const double grand_mean = grand_sum / static_cast<double>(total_n);

    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        const double n = static_cast<double>(g.size());
        const double mean = std::accumulate(g.begin(), g.end(), 0.0) / n;
        ss_between += n * (mean - grand_mean) * (mean - grand_mean);
        for (double v : g) ss_within += (v - mean) * (v - mean);
    }

    AnovaResult res;
    res.df_between = groups.size() - 1;
    res.df_within = total_n - groups.size();
    res.ms_within = ss_within / static_cast<double>(res.df_within);
    const double ms_between = ss_between / static_cast<double>(res.df_between);
    if (res.ms_within > 0.0) {
        res.f_statistic = ms_between / res.ms_within;
        res.p_value = f_sf(res.f_statistic, static_cast<double>(res.df_between),
                           static_cast<double>(res.df_within));
    } else {
        res.f_statistic = ms_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        res.p_value = ms_between > 0.0 ? 0.0 : 1.0;
    }
    return res;
}

std::vector<std::pair<std::size_t, std::size_t>> tukey_kramer_unequal_pairs(
    const std::vector<std::vector<double>>& groups, double alpha) {
    const AnovaResult anova = anova_oneway(groups);
    const int k = static_cast<int>(groups.size());
    const double q_crit =
        studentized_range_quantile(alpha, k, static_cast<double>(anova.df_within));

    std::vector<double> means(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        means[g] = std::accumulate(groups[g].begin(), groups[g].end(), 0.0) /
                   static_cast<double>(groups[g].size());
    }

    std::vector<std::pair<std::size_t, std::size_t>> rejected;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            const double se = std::sqrt(anova.ms_within / 2.0 *
                                        (1.0 / static_cast<double>(groups[i].size()) +
                                         1.0 / static_cast<double>(groups[j].size())));
            if (std::abs(means[i] - means[j]) > q_crit * se) {
                rejected.emplace_back(i, j);
            }
        }
    }
    return rejected;
}

const char* to_string(ErrorType type) {
    return type == ErrorType::Model ? "model" : "prediction";
}

ConsistencyReport subject_consistency(const std::vector<ErrorSeries>& model_errors,
                                      const std::vector<ErrorSeries>& prediction_errors,
                                      double alpha) {
    ConsistencyReport report;

    const FeatureKind features[] = {FeatureKind::SBP, FeatureKind::DBP, FeatureKind::MAP};
    const IntervalKind kinds[] = {IntervalKind::BH, IntervalKind::NB};
    const ErrorType types[] = {ErrorType::Model, ErrorType::Prediction};

    for (IntervalKind kind : kinds) {
        for (FeatureKind feature : features) {
            for (ErrorType type : types) {
                const auto& pool = type == ErrorType::Model ? model_errors : prediction_errors;

                // beat-level residuals pooled per subject, subjects in sorted order
                std::map<std::string, std::vector<double>> by_subject;
                for (const auto& e : pool) {
                    if (e.kind != kind || e.feature != feature) continue;
                    auto& dst = by_subject[e.subject_id];
                    dst.insert(dst.end(), e.residuals.begin(), e.residuals.end());
                }
                if (by_subject.empty()) continue;
                if (by_subject.size() < 2) {
                    throw std::invalid_argument("subject_consistency: need at least 2 subjects");
                }

                std::vector<std::string> subjects;
                std::vector<std::vector<double>> groups;
                for (auto& [id, values] : by_subject) {
                    if (values.size() < 2) {
                        throw std::invalid_argument("subject_consistency: subject " + id +
                                                    " has fewer than 2 residual samples");
                    }
                    subjects.push_back(id);
                    groups.push_back(std::move(values));
                }

                ConsistencyCell cell;
                cell.kind = kind;
                cell.feature = feature;
                cell.error_type = type;
                cell.anova = anova_oneway(groups);
                cell.total_pairs = groups.size() * (groups.size() - 1) / 2;
                const auto rejected = tukey_kramer_unequal_pairs(groups, alpha);
                cell.unequal_pairs = rejected.size();
                for (auto [i, j] : rejected) {
                    cell.unequal_subject_pairs.emplace_back(subjects[i], subjects[j]);
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }

    for (const auto& cell : report.cells) {
        report.total_unequal += cell.unequal_pairs;
        report.total_pairs += cell.total_pairs;
    }
    report.unequal_fraction =
        report.total_pairs ? static_cast<double>(report.total_unequal) /
                                 static_cast<double>(report.total_pairs)
                           : 0.0;
    return report;
}

} // namespace ppgbp
