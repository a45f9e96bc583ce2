#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppgbp {

// Single-input single-output ARX difference equation:
//   y(m) + a1 y(m-1) + ... + a_na y(m-na)
//     = b1 u(m-nk) + ... + b_nb u(m-nk-nb+1) + e(m)
// The first usable row is m0 = max(na, nb + nk - 1).

struct ArxOrders {
    int n_a = 1; // 1..5
    int n_b = 1; // 1..5
    int n_k = 0; // 0..5

    std::size_t first_row() const {
        return static_cast<std::size_t>(std::max(n_a, n_b + n_k - 1));
    }
    int param_count() const { return n_a + n_b; }
    bool operator==(const ArxOrders&) const = default;
};

void validate_orders(const ArxOrders& orders);

struct ArxModel {
    ArxOrders orders;
    std::vector<double> a; // a1..a_na
    std::vector<double> b; // b1..b_nb
    double fit_mse = 0.0;  // squared units of y
    std::size_t n_samples_used = 0;
};

void validate_model(const ArxModel& model);

struct Regression {
    Eigen::MatrixXd phi;   // rows x (na + nb), y lags negated
    Eigen::VectorXd target;
    std::size_t first_row = 0;
};

/// Unrolls the difference equation into a linear regression. Rows run from
/// max(orders.first_row(), min_row) to N-1; min_row lets nested models be
/// compared over a common row range.
Regression build_regression(std::span<const double> y, std::span<const double> u,
                            const ArxOrders& orders, std::size_t min_row = 0);

struct LeastSquaresFit {
    Eigen::VectorXd theta; // (a1..a_na, b1..b_nb)
    double mse = 0.0;      // ||target - phi*theta||^2 / rows
};

/// Minimum-norm residual solve via column-pivoted Householder QR. Throws
/// "rank deficient" when the numerical rank (pivot magnitudes relative to the
/// largest, tolerance max(rows, cols) * epsilon) is below the column count.
LeastSquaresFit fit_least_squares(const Regression& regression);

ArxModel fit_arx(std::span<const double> y, std::span<const double> u,
                 const ArxOrders& orders, std::size_t min_row = 0);

/// One-step-ahead prediction: yhat(m) from measured y(m-1)... Output covers
/// m = max(m0, min_row) .. N-1; earlier samples never enter error statistics.
std::vector<double> one_step_predict(const ArxModel& model, std::span<const double> y_measured,
                                     std::span<const double> u, std::size_t min_row = 0);

struct FreeRunResult {
    std::vector<double> values; // yhat from the first simulated sample onward
    bool diverged = false;      // |yhat| exceeded 1e6 and the run stopped
};

/// Free-run simulation: the recursion feeds back its own output, seeded with
/// the measured warm-up samples in y_init (at least m0 of them). Divergence
/// is flagged, not thrown.
FreeRunResult simulate_free_run(const ArxModel& model, std::span<const double> y_init,
                                std::span<const double> u);

/// n_rows * ln(fit_mse) + 2 * (n_a + n_b); -infinity for a perfect fit.
double aic(double fit_mse, std::size_t n_rows, const ArxOrders& orders);

struct OrderBounds {
    int na_min = 1, na_max = 5;
    int nb_min = 1, nb_max = 5;
    int nk_min = 0, nk_max = 5;

    std::size_t cell_count() const {
        return static_cast<std::size_t>((na_max - na_min + 1)) *
               static_cast<std::size_t>((nb_max - nb_min + 1)) *
               static_cast<std::size_t>((nk_max - nk_min + 1));
    }
    std::vector<ArxOrders> cells() const;
    /// Largest first usable row over the grid; fits sharing this min_row use
    /// identical row ranges in every cell.
    std::size_t max_first_row() const {
        return ArxOrders{na_max, nb_max, nk_max}.first_row();
    }
};

enum class GridCellStatus { Ok, TooShort, RankDeficient };

struct GridCell {
    ArxOrders orders;
    GridCellStatus status = GridCellStatus::TooShort;
    std::optional<ArxModel> model; // present iff status == Ok
    double aic = 0.0;              // meaningful iff status == Ok
};

struct ModelSelectionResult {
    ArxModel best_by_mse;
    ArxModel best_by_aic;
    std::vector<GridCell> grid; // canonical (n_a, n_b, n_k) order
};

/// Fits every order/delay combination in the bounds (150 cells for the
/// defaults). Cells whose interval is too short or whose regressor is rank
/// deficient are recorded as absent. Selection is a total order on
/// (score, n_a + n_b, n_k, n_a), so the result does not depend on the order
/// cells are evaluated in; `eval_order` exists to let tests verify that.
ModelSelectionResult grid_search(std::span<const double> y, std::span<const double> u,
                                 const OrderBounds& bounds = {}, std::size_t min_row = 0,
                                 std::span<const std::size_t> eval_order = {});

const char* to_string(GridCellStatus status);

} // namespace ppgbp
