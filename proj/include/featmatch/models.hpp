#pragma once

#include "featmatch/series.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace featmatch {

enum class ModelFamily { LinearAR, SETAR, QuadMap, Blowfly, DiscreteSIR };

std::string_view to_string(ModelFamily family) noexcept;
/// Accepts "ar"/"linear-ar", "setar", "quad"/"quad-map", "blowfly", "sir"/"discrete-sir".
ModelFamily parse_family(std::string_view name);

enum class ObservationLaw { Gaussian, PoissonMeanState };

struct NoiseSpec {
    double innovation_sd = 0.0;                  ///< dynamic noise sigma_0
    double measurement_sd = 0.0;                 ///< additive observation noise sigma_1
    std::optional<double> innovation_truncation; ///< symmetric bound on the standard innovation
    ObservationLaw observation_law = ObservationLaw::Gaussian;

    void validate() const;
};

/// Exogenous inputs of the discrete-time seasonal SIR skeleton.
struct SirStructure {
    std::vector<double> births;     ///< b_t aligned with the series index; the last value is held beyond the end
    int season_length = 26;         ///< season k(t) = t mod season_length
    std::vector<double> base_betas; ///< non-empty selects the reduced (lambda, S0) parameterization

    double birth(std::int64_t t) const noexcept;
};

/// A parametric skeleton x_t = g_theta(x_{t-1}, ..., x_{t-p}) plus a noise description.
///
/// Parameter layouts:
///   LinearAR     (theta_1..theta_p)
///   SETAR        (a0, b0_1..b0_k, a1, b1_1..b1_k, threshold, delay)   regime 0 when x_{t-delay} <= threshold
///   QuadMap      (b1, b2)
///   Blowfly      (c, N0, nu, alpha) with fixed delay tau
///   DiscreteSIR  (beta_1..beta_S, S0) or, reduced, (lambda, S0) with beta_k = mean + lambda (base_k - mean)
class ModelSpec {
public:
    static ModelSpec linear_ar(std::vector<double> theta, NoiseSpec noise = {});
    static ModelSpec setar(std::vector<double> theta, int regime_order = 1, NoiseSpec noise = {});
    static ModelSpec quad_map(double b1, double b2, NoiseSpec noise = {});
    static ModelSpec blowfly(std::vector<double> theta, int tau, NoiseSpec noise = {});
    static ModelSpec discrete_sir(std::vector<double> theta, SirStructure sir, NoiseSpec noise = {});

    ModelFamily family() const noexcept { return family_; }
    const std::vector<double>& theta() const noexcept { return theta_; }
    std::size_t num_params() const noexcept { return theta_.size(); }
    const NoiseSpec& noise() const noexcept { return noise_; }

    /// Largest lag appearing in the skeleton map (1 for the SIR state recursion).
    int order_p() const noexcept { return order_p_; }
    /// SETAR per-regime AR order.
    int regime_order() const noexcept { return regime_order_; }
    /// SETAR delay d or Blowfly delay tau.
    int delay() const noexcept { return delay_; }
    const SirStructure& sir() const noexcept { return sir_; }

    /// 1 for the scalar lag families, 2 for DiscreteSIR (I, S).
    int state_dim() const noexcept { return family_ == ModelFamily::DiscreteSIR ? 2 : 1; }

    /// Parameters the smooth optimizer may move (SETAR threshold and delay are profiled instead).
    std::vector<bool> smooth_mask() const;

    /// Season transmission rates beta_k implied by theta (DiscreteSIR only).
    std::vector<double> sir_betas() const;

    /// Validated copy with new parameters; SETAR delay changes update order_p.
    ModelSpec with_theta(std::vector<double> theta) const;
    ModelSpec with_noise(NoiseSpec noise) const;

private:
    ModelSpec() = default;
    void validate_and_derive();

    ModelFamily family_ = ModelFamily::LinearAR;
    std::vector<double> theta_;
    NoiseSpec noise_;
    int order_p_ = 1;
    int regime_order_ = 1;
    int delay_ = 1;
    SirStructure sir_;
};

/// Skeleton state trajectory summary.
struct Orbit {
    std::vector<double> states;  ///< retained second half of the iteration (first state component)
    std::optional<int> period;
    bool converged = false;
};

/// Noise-free states and noisy observations produced by simulate_path.
struct SimulatedPath {
    std::vector<double> states;
    std::vector<double> observations;
};

struct SimulateOptions {
    int burn_in = 500;
    double overflow_guard = 1e12;
};

/// Stochastic recursion then observation law. The trajectory starts with `init`
/// (order_p values, chronological; for DiscreteSIR the pair (I_0, S_0)) and the
/// window [burn_in, burn_in + length) is returned. Throws ExplosiveSimulation.
SimulatedPath simulate_path(const ModelSpec& model, std::size_t length, std::uint64_t seed,
                            std::span<const double> init, SimulateOptions options = {});
TimeSeries simulate(const ModelSpec& model, std::size_t length, std::uint64_t seed,
                    std::span<const double> init, SimulateOptions options = {});

/// How derivative evaluation treats a SETAR delay state exactly equal to its threshold.
enum class TiePolicy { Throw, Subgradient };

/// g^[1..m] and (optionally) their theta-derivatives from one history, computed by the
/// lag recursion dg^[j] = sum_i g_i dg^[j-i] + g_{p+k}.
struct SkeletonPath {
    int q = 0;
    int steps = 0;
    std::vector<double> value;  ///< value[j-1] = g^[j]
    std::vector<double> grad;   ///< grad[(j-1) q + k]
    std::vector<double> hess;   ///< hess[((j-1) q + k) q + l]

    double gradient(int step, int k) const { return grad[static_cast<std::size_t>((step - 1) * q + k)]; }
    double hessian(int step, int k, int l) const {
        return hess[(static_cast<std::size_t>(step - 1) * q + static_cast<std::size_t>(k)) * q + static_cast<std::size_t>(l)];
    }
};

/// Derivative order: 0 values only, 1 adds gradients, 2 adds Hessians.
/// `history` is chronological (oldest first) with order_p entries; for DiscreteSIR it is
/// (I_t, S_t) observed at series index `start_time`, and dS_t/dS0 = 1.
SkeletonPath skeleton_path(const ModelSpec& model, std::span<const double> history, int steps, int order,
                           TiePolicy ties = TiePolicy::Throw, std::int64_t start_time = 0);

double skeleton_predict(const ModelSpec& model, std::span<const double> history, int m,
                        std::int64_t start_time = 0);
Eigen::VectorXd skeleton_gradient(const ModelSpec& model, std::span<const double> history, int m,
                                  std::int64_t start_time = 0);
Eigen::MatrixXd skeleton_hessian(const ModelSpec& model, std::span<const double> history, int m,
                                 std::int64_t start_time = 0);

/// Iterate the skeleton `steps` times from `init`; returns the full state trajectory
/// (first component), init included. Non-finite or guard-exceeding states stop the
/// iteration early (the returned vector is then shorter).
std::vector<double> skeleton_orbit(const ModelSpec& model, std::span<const double> init, std::size_t steps,
                                   double overflow_guard = 1e12);

struct LimitCycleOptions {
    int max_iter = 2000;
    double tol = 1e-6;
    int max_period = 200;
};

Orbit limit_cycle(const ModelSpec& model, std::span<const double> init, LimitCycleOptions options = {});

/// Time-average of log|state Jacobian| (largest exponent via tangent propagation when
/// the state is multi-dimensional). Returns -infinity when a derivative vanishes exactly.
double lyapunov_exponent(const ModelSpec& model, std::span<const double> init, int n);

/// AR(infinity) coefficients of (1 - B)^d y_t = e_t written as y_t = sum_j pi_j y_{t-j} + e_t.
std::vector<double> fi_ar_coefficients(double d, std::size_t count);
/// MA(infinity) weights psi_j of y_t = sum_j psi_j e_{t-j}; psi_0 = 1.
std::vector<double> fi_ma_coefficients(double d, std::size_t count);
/// Theoretical autocorrelations of FI(d) for lags 0..max_lag.
std::vector<double> fi_autocorrelation(double d, std::size_t max_lag);

/// Fractionally integrated Gaussian noise, truncated at max(1000, 10 * length) terms.
TimeSeries fractional_noise(double d, std::size_t length, std::uint64_t seed);

/// Autocovariances gamma(0..max_lag) of a stationary AR(p) with unit innovation variance scaled by sigma2.
std::vector<double> ar_autocovariance(std::span<const double> theta, double sigma2, std::size_t max_lag);

/// Companion matrix with theta in its first row.
Eigen::MatrixXd companion_matrix(std::span<const double> theta);

}  // namespace featmatch
