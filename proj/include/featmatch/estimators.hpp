#pragma once

#include "featmatch/models.hpp"
#include "featmatch/optimizer.hpp"
#include "featmatch/series.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace featmatch {

enum class WeightKind { OneHot, AbsAcf, ConstantPeriods, Uniform };

std::string_view to_string(WeightKind kind) noexcept;
/// Accepts "one-hot", "abs-acf", "constant-periods", "uniform".
WeightKind parse_weight_kind(std::string_view name);

/// Horizon weights w_1..w_m; nonnegative and summing to one.
struct WeightScheme {
    WeightKind kind = WeightKind::Uniform;
    int one_hot_index = 1;         ///< m0 for OneHot
    int n_periods = 1;             ///< for ConstantPeriods
    std::vector<double> w;         ///< w[k-1] = w_k

    int m() const noexcept { return static_cast<int>(w.size()); }
};

/// Parameters of a weight request before it is resolved against data.
struct WeightRequest {
    WeightKind kind = WeightKind::Uniform;
    int one_hot_index = 1;
    int n_periods = 1;
};

WeightScheme make_weights(const WeightRequest& request, const TimeSeries& data, int m);
WeightScheme one_hot_weights(int m0, int m);
WeightScheme uniform_weights(int m);

struct FitResult {
    std::string estimator;  ///< "lse", "ape", "ayw", "yule-walker", "walker", "whittle"
    int m = 1;
    std::vector<double> theta_hat;
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;  ///< ||grad|| / max(1, |objective|) over the smooth parameters
    int restarts_used = 0;
    std::vector<double> objective_trace;
    std::vector<double> weights;
};

struct FitOptions {
    NewtonOptions newton;
    int restarts = 20;
    double restart_rel_sd = 0.2;
    std::uint64_t seed = 20240601;
    /// Starting point overriding the family default (the LSE solution for fit_ape).
    std::optional<std::vector<double>> start;
    /// SETAR threshold candidates: midpoints of consecutive distinct order statistics
    /// between the trim and 1 - trim sample quantiles.
    double threshold_trim = 0.15;
    /// SETAR with m > 1: candidates ranked by the objective at their per-regime OLS fit;
    /// Newton runs from the best this many.
    int threshold_starts = 15;
    /// SETAR: random restarts (with the threshold held fixed) at the winning candidate.
    bool refine_threshold = true;
};

/// The APE criterion sum_origins sum_k w_k (y_{o+k} - g^[k](history_o))^2 with its
/// derivatives over the smooth parameters of `model`. For DiscreteSIR the susceptible
/// history at origin o is S0 + sum_{t<o} b_t - sum_{1<=t<=o} I_t.
struct ApeObjective {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};
ApeObjective ape_objective(const ModelSpec& model, std::span<const double> data, const std::vector<double>& w,
                           int order);

/// One-step least squares. Closed form for LinearAR, QuadMap and SETAR (per regime,
/// threshold profiled); damped Newton for Blowfly and DiscreteSIR.
FitResult fit_lse(const ModelSpec& model, const TimeSeries& data, const FitOptions& options = {});

/// Up-to-m-step-ahead prediction estimator.
FitResult fit_ape(const ModelSpec& model, const TimeSeries& data, int m, const WeightScheme& weights,
                  const FitOptions& options = {});

/// Lagged Yule-Walker system gamma(j) = sum_i theta_i gamma(|j - i|), j in lags, solved
/// in least squares by Householder QR.
std::vector<double> lagged_yule_walker(std::span<const double> gamma, int p, int first_lag, int last_lag);

FitResult fit_ayw(const TimeSeries& data, int p, int m);
FitResult fit_yule_walker(const TimeSeries& data, int p);
/// Walker's estimator: the p equations at lags p+ell .. 2p+ell-1.
FitResult fit_walker(const TimeSeries& data, int p, int ell);
/// AYW from a known autocovariance sequence (population limit or sample).
std::vector<double> ayw_from_acv(std::span<const double> gamma, int p, int m);

/// Concentrated Whittle objective N log S(theta) - sum_j log|A_j|^2 + N.
double whittle_objective(const Spectrum& periodogram, std::span<const double> theta);
FitResult fit_whittle(const TimeSeries& data, int p, const FitOptions& options = {});

/// Minimises n log(sigma_p^2) + 2p over p = 1..p_max on the common sample t > p_max.
int select_order_aic(const TimeSeries& data, int p_max);

/// Reflects AR roots outside the unit circle to the inside; true when anything moved.
bool reflect_to_stationary(std::vector<double>& theta);

/// Profiled one-step fit of the full DiscreteSIR (beta_1..beta_S, S0): the closed form
/// exp(beta_k) per season for each S0 on a grid, S0 chosen by least squares.
std::vector<double> sir_initial_estimate(const ModelSpec& model, const TimeSeries& data);

}  // namespace featmatch
