#pragma once

#include "featmatch/models.hpp"
#include "featmatch/series.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace featmatch {

/// sqrt( sum_{k=0}^{N} (r_y(k) - r_x(k))^2 / N ).
double acf_match_error(std::span<const double> r_y, std::span<const double> r_x, int n_lags);
double acf_match_error(const AcfEstimate& y, const AcfEstimate& x, int n_lags);
double acf_match_error(const TimeSeries& y, const TimeSeries& x, int n_lags);

struct PathMatch {
    double error = 0.0;
    int shift = 0;
};

/// min over k in [0, shift_max] of sum_t |y_t - x_{t+k}| / T; the smallest k wins ties.
PathMatch path_match_error(std::span<const double> y, std::span<const double> x_orbit, int shift_max);

/// sum_k w_k (gamma_x(k) - gamma_y(k))^2 over the common lags.
double d_c_distance(std::span<const double> gamma_y, std::span<const double> gamma_x, std::span<const double> weights);
/// Supremum over the weight simplex: max_k (gamma_x(k) - gamma_y(k))^2.
double d_c_sup(std::span<const double> gamma_y, std::span<const double> gamma_x);

/// Itakura-Saito distortion: trapezoidal rule on the grid of the longer input over
/// [0, pi] (end ordinates extended flat), doubled for symmetry.
double d_f_itakura_saito(const Spectrum& f_y, const Spectrum& f_x);

/// AR(p) spectral density sigma2 / (2 pi) |1 - sum theta_j exp(-i w j)|^-2.
Spectrum ar_spectral_density(std::span<const double> theta, double sigma2, std::span<const double> freqs);

struct CycleOptions {
    int bandwidth = 3;
    double max_freq_fraction = 0.9;  ///< search w < fraction * pi
    double min_peak_ratio = 5.0;     ///< peak / median of the smoothed periodogram
};

/// Dominant cycle of a noisy series from the smoothed periodogram; absent when no peak dominates.
std::optional<double> cycle_period(const TimeSeries& series, const CycleOptions& options = {});
/// Exact recurrence period of the skeleton orbit started at `init`.
std::optional<double> cycle_period(const ModelSpec& model, std::span<const double> init,
                                   const LimitCycleOptions& options = {});

/// LinearAR: companion eigenvalues inside |z| < 1 - 1e-8. Otherwise: the skeleton stays
/// bounded (limit_cycle converged) from 10 random initial states drawn uniformly in [lo, hi].
bool stability_check(const ModelSpec& model, double lo = -1.0, double hi = 1.0, std::uint64_t seed = 1);

/// Asymptotic AYW(m) limit of AR(p) plus white measurement noise, closed form
/// theta + sign * s2 (G_m'G_m + 2 s2 G_p + s2^2 I)^-1 (G_p + s2 I) theta minus theta.
/// gamma holds the noise-free autocovariances to lag >= m + p.
std::vector<double> theorem_b_bias(std::span<const double> theta, std::span<const double> gamma, double sigma_eta2,
                                   int m, int sign = -1);
/// The same limit computed directly as the least-squares solution of the noisy
/// population Yule-Walker system.
std::vector<double> theorem_b_limit(std::span<const double> gamma, double sigma_eta2, int p, int m);

/// max_{1<=k<=max_m} E[(E(y_{t+k}|y_t) - theta^k y_t)^2] for AR(1) data with coefficient
/// beta and marginal variance gamma0, fitted by an AR(1) with coefficient theta.
double q_tilde_ar1(double beta, double theta, double gamma0, int max_m);

struct FeatureReport {
    double acf_error = 0.0;
    double path_match_error = 0.0;
    int best_shift = 0;
    std::optional<double> cycle_period_data;
    std::optional<double> cycle_period_model;
    bool stable = false;
    std::optional<double> d_c;
    std::optional<double> d_f;
};

struct FeatureOptions {
    int acf_lags = 50;
    int shift_max = 50;
    int burn_in = 1000;  ///< skeleton iterations discarded before the orbit is compared
    LimitCycleOptions cycle;
};

/// Feature comparison of observed data with the skeleton of `model` started from the
/// first order_p observations (or, for DiscreteSIR, from `init`).
FeatureReport compute_features(const TimeSeries& data, const ModelSpec& model, const FeatureOptions& options = {},
                               std::span<const double> init = {});

/// Skeleton attractor segment of `length` states after `burn_in` iterations from `init`.
/// Shorter than requested when the skeleton diverges.
std::vector<double> skeleton_attractor(const ModelSpec& model, std::span<const double> init, int burn_in,
                                       std::size_t length);

}  // namespace featmatch
