#include "ppgbp/arx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ppgbp {

void validate_orders(const ArxOrders& orders) {
    if (orders.n_a < 1 || orders.n_a > 5) throw std::invalid_argument("n_a must be in [1, 5]");
    if (orders.n_b < 1 || orders.n_b > 5) throw std::invalid_argument("n_b must be in [1, 5]");
    if (orders.n_k < 0 || orders.n_k > 5) throw std::invalid_argument("n_k must be in [0, 5]");
}

void validate_model(const ArxModel& model) {
    validate_orders(model.orders);
    if (model.a.size() != static_cast<std::size_t>(model.orders.n_a) ||
        model.b.size() != static_cast<std::size_t>(model.orders.n_b)) {
        throw std::invalid_argument("coefficient lengths must match orders");
    }
    if (!(model.fit_mse >= 0.0)) throw std::invalid_argument("fit_mse must be >= 0");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(model.a.begin(), model.a.end(), finite) ||
        !std::all_of(model.b.begin(), model.b.end(), finite)) {
        throw std::invalid_argument("coefficients must be finite");
    }
}

Regression build_regression(std::span<const double> y, std::span<const double> u,
                            const ArxOrders& orders, std::size_t min_row) {
    validate_orders(orders);
    if (y.size() != u.size()) throw std::invalid_argument("y and u must have equal length");
    const std::size_t n = y.size();
    const std::size_t m0 = std::max(orders.first_row(), min_row);
    const std::size_t cols = static_cast<std::size_t>(orders.param_count());
    if (n <= m0 || n - m0 <= cols) {
        throw std::invalid_argument("interval too short");
    }
    const std::size_t rows = n - m0;

    Regression reg;
    reg.first_row = m0;
    reg.phi.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    reg.target.resize(static_cast<Eigen::Index>(rows));
    for (std::size_t m = m0; m < n; ++m) {
        const auto r = static_cast<Eigen::Index>(m - m0);
        for (int i = 1; i <= orders.n_a; ++i) {
            reg.phi(r, i - 1) = -y[m - static_cast<std::size_t>(i)];
        }
        for (int j = 1; j <= orders.n_b; ++j) {
            reg.phi(r, orders.n_a + j - 1) =
                u[m - static_cast<std::size_t>(orders.n_k + j - 1)];
        }
        reg.target(r) = y[m];
    }
    return reg;
}

LeastSquaresFit fit_least_squares(const Regression& regression) {
    const Eigen::Index rows = regression.phi.rows();
    const Eigen::Index cols = regression.phi.cols();
    if (rows <= cols) throw std::invalid_argument("least squares needs rows > columns");
    if (!regression.phi.allFinite() || !regression.target.allFinite()) {
        throw std::invalid_argument("regression data must be finite");
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(regression.phi);
    // Pivot magnitudes relative to the largest, scale-free tolerance.
    qr.setThreshold(static_cast<double>(std::max(rows, cols)) *
                    std::numeric_limits<double>::epsilon());
    if (qr.rank() < cols) {
        throw std::runtime_error("rank deficient");
    }

    LeastSquaresFit fit;
    fit.theta = qr.solve(regression.target);
    fit.mse = (regression.target - regression.phi * fit.theta).squaredNorm() /
              static_cast<double>(rows);
    return fit;
}

ArxModel fit_arx(std::span<const double> y, std::span<const double> u,
                 const ArxOrders& orders, std::size_t min_row) {
    const Regression reg = build_regression(y, u, orders, min_row);
    const LeastSquaresFit fit = fit_least_squares(reg);

    ArxModel model;
    model.orders = orders;
    model.a.assign(fit.theta.data(), fit.theta.data() + orders.n_a);
    model.b.assign(fit.theta.data() + orders.n_a, fit.theta.data() + orders.param_count());
    model.fit_mse = fit.mse;
    model.n_samples_used = static_cast<std::size_t>(reg.phi.rows());
    return model;
}

std::vector<double> one_step_predict(const ArxModel& model, std::span<const double> y_measured,
                                     std::span<const double> u, std::size_t min_row) {
    validate_model(model);
    if (y_measured.size() != u.size()) {
        throw std::invalid_argument("y and u must have equal length");
    }
    const std::size_t m0 = std::max(model.orders.first_row(), min_row);
    const std::size_t n = y_measured.size();
    if (n <= m0) throw std::invalid_argument("track too short for the model's warm-up");

    std::vector<double> yhat(n - m0);
    for (std::size_t m = m0; m < n; ++m) {
        double v = 0.0;
        for (int i = 1; i <= model.orders.n_a; ++i) {
            v -= model.a[static_cast<std::size_t>(i - 1)] * y_measured[m - static_cast<std::size_t>(i)];
        }
        for (int j = 1; j <= model.orders.n_b; ++j) {
            v += model.b[static_cast<std::size_t>(j - 1)] *
                 u[m - static_cast<std::size_t>(model.orders.n_k + j - 1)];
        }
        yhat[m - m0] = v;
    }
    return yhat;
}

FreeRunResult simulate_free_run(const ArxModel& model, std::span<const double> y_init,
                                std::span<const double> u) {
    validate_model(model);
    const std::size_t m0 = y_init.size();
    if (m0 < model.orders.first_row()) {
        throw std::invalid_argument("y_init must hold at least the first m0 measured samples");
    }
    const std::size_t n = u.size();
    if (n <= m0) throw std::invalid_argument("track too short for the model's warm-up");

    std::vector<double> state(y_init.begin(), y_init.end()); // full trajectory, own output after m0
    state.reserve(n);

    FreeRunResult result;
    result.values.reserve(n - m0);
    for (std::size_t m = m0; m < n; ++m) {
        double v = 0.0;
        for (int i = 1; i <= model.orders.n_a; ++i) {
            v -= model.a[static_cast<std::size_t>(i - 1)] * state[m - static_cast<std::size_t>(i)];
        }
        for (int j = 1; j <= model.orders.n_b; ++j) {
            v += model.b[static_cast<std::size_t>(j - 1)] *
                 u[m - static_cast<std::size_t>(model.orders.n_k + j - 1)];
        }
        if (!std::isfinite(v)) {
            result.diverged = true;
            break;
        }
        state.push_back(v);
        result.values.push_back(v);
        if (std::abs(v) > 1e6) {
            result.diverged = true;
            break;
        }
    }
    return result;
}

double aic(double fit_mse, std::size_t n_rows, const ArxOrders& orders) {
    if (!(fit_mse >= 0.0) || !std::isfinite(fit_mse)) {
        throw std::invalid_argument("aic: fit_mse must be finite and non-negative");
    }
    if (fit_mse == 0.0) {
        return -std::numeric_limits<double>::infinity(); // perfect-fit sentinel
    }
    return static_cast<double>(n_rows) * std::log(fit_mse) + 2.0 * orders.param_count();
}

std::vector<ArxOrders> OrderBounds::cells() const {
    std::vector<ArxOrders> out;
    out.reserve(cell_count());
    for (int na = na_min; na <= na_max; ++na) {
        for (int nb = nb_min; nb <= nb_max; ++nb) {
            for (int nk = nk_min; nk <= nk_max; ++nk) {
                out.push_back(ArxOrders{na, nb, nk});
            }
        }
    }
    return out;
}

const char* to_string(GridCellStatus status) {
    switch (status) {
        case GridCellStatus::Ok: return "ok";
        case GridCellStatus::TooShort: return "too_short";
        case GridCellStatus::RankDeficient: return "rank_deficient";
    }
    return "?";
}

namespace {

// Total order used for both selection criteria: smaller score first, ties by
// parsimony (n_a + n_b), then smaller n_k, then smaller n_a.
bool better(double score_a, const ArxOrders& a, double score_b, const ArxOrders& b) {
    if (score_a != score_b) return score_a < score_b;
    if (a.param_count() != b.param_count()) return a.param_count() < b.param_count();
    if (a.n_k != b.n_k) return a.n_k < b.n_k;
    return a.n_a < b.n_a;
}

} // namespace

ModelSelectionResult grid_search(std::span<const double> y, std::span<const double> u,
                                 const OrderBounds& bounds, std::size_t min_row,
                                 std::span<const std::size_t> eval_order) {
    const auto cells = bounds.cells();
    ModelSelectionResult result;
    result.grid.resize(cells.size());

    std::vector<std::size_t> canonical;
    if (eval_order.empty()) {
        canonical.resize(cells.size());
        std::iota(canonical.begin(), canonical.end(), std::size_t{0});
        eval_order = canonical;
    }
    if (eval_order.size() != cells.size()) {
        throw std::invalid_argument("grid_search: eval_order must cover every cell");
    }

    for (std::size_t idx : eval_order) {
        GridCell& cell = result.grid[idx];
        cell.orders = cells[idx];
        try {
            ArxModel model = fit_arx(y, u, cells[idx], min_row);
            cell.aic = aic(model.fit_mse, model.n_samples_used, cells[idx]);
            cell.model = std::move(model);
            cell.status = GridCellStatus::Ok;
        } catch (const std::invalid_argument&) {
            cell.status = GridCellStatus::TooShort;
        } catch (const std::runtime_error&) {
            cell.status = GridCellStatus::RankDeficient;
        }
    }

    const GridCell* best_mse = nullptr;
    const GridCell* best_aic = nullptr;
    for (const GridCell& cell : result.grid) {
        if (cell.status != GridCellStatus::Ok) continue;
        if (!best_mse ||
            better(cell.model->fit_mse, cell.orders, best_mse->model->fit_mse, best_mse->orders)) {
            best_mse = &cell;
        }
        if (!best_aic || better(cell.aic, cell.orders, best_aic->aic, best_aic->orders)) {
            best_aic = &cell;
        }
    }
    if (!best_mse) {
        throw std::runtime_error("grid_search: every order/delay combination failed");
    }
    result.best_by_mse = *best_mse->model;
    result.best_by_aic = *best_aic->model;
    return result;
}

} // namespace ppgbp
