#include "featmatch/errors.hpp"
#include "featmatch/features.hpp"
#include "featmatch/models.hpp"
#include "featmatch/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace featmatch;

namespace {
const std::vector<double> kSetar6{3, 1, -3, 1, 0, 2};
const std::vector<double> kSetar10{3, 1, -3, 1, 0, 3};
}

TEST_CASE("noise-free AR(1) decays geometrically") {
    const auto y = simulate(ModelSpec::linear_ar({0.5}), 5, 1, std::vector<double>{2.0}, {0});
    const std::vector<double> expect{2, 1, 0.5, 0.25, 0.125};
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(expect[i]));
}

TEST_CASE("SETAR skeleton becomes exactly periodic") {
    const auto y = simulate(ModelSpec::setar(kSetar6), 60, 1, std::vector<double>{0.0, 0.0}, {0});
    for (std::size_t t = 20; t + 6 < y.size(); ++t) CHECK(y[t] == y[t + 6]);
    const auto orbit = limit_cycle(ModelSpec::setar(kSetar6), std::vector<double>{0.0, 0.0});
    CHECK(orbit.converged);
    CHECK(orbit.period == 6);
    CHECK(limit_cycle(ModelSpec::setar(kSetar10), std::vector<double>{0.0, 0.0, 0.0}).period == 10);
    const auto fixed = limit_cycle(ModelSpec::linear_ar({0.5}), std::vector<double>{1.0});
    CHECK(fixed.period == 1);
    CHECK(std::abs(fixed.states.back()) < 1e-6);
}

TEST_CASE("divergent skeleton has no period") {
    const auto orbit = limit_cycle(ModelSpec::linear_ar({1.5}), std::vector<double>{1.0});
    CHECK_FALSE(orbit.converged);
    CHECK_FALSE(orbit.period.has_value());
}

TEST_CASE("simulation is deterministic and seed dependent") {
    const auto m = ModelSpec::linear_ar({0.5, -0.2}, {1.0, 0.3});
    const std::vector<double> init{0.0, 0.0};
    CHECK(simulate(m, 50, 4, init) == simulate(m, 50, 4, init));
    CHECK_FALSE(simulate(m, 50, 4, init) == simulate(m, 50, 5, init));
}

TEST_CASE("explosive simulation throws") {
    CHECK_THROWS_AS(simulate(ModelSpec::linear_ar({2.0}, {1.0}), 200, 1, std::vector<double>{1.0}, {0}),
                    ExplosiveSimulation);
}

TEST_CASE("model validation") {
    CHECK_THROWS_AS(ModelSpec::linear_ar({}), InvalidArgument);
    CHECK_THROWS_AS(ModelSpec::setar({1, 2, 3}), InvalidArgument);
    CHECK_THROWS_AS(ModelSpec::setar({3, 1, -3, 1, 0, 1.5}), InvalidArgument);
    CHECK_THROWS_AS(ModelSpec::blowfly({1, 0, 0.5, 1}, 8), InvalidArgument);
    CHECK_THROWS_AS(ModelSpec::linear_ar({0.5}, {-1.0}), InvalidArgument);
    CHECK(ModelSpec::blowfly({1, 2, 0.5, 1}, 8).order_p() == 8);
    CHECK(ModelSpec::setar({3, 1, -3, 1, 0, 3}).order_p() == 3);
    CHECK(ModelSpec::quad_map(3.2, -0.2).order_p() == 1);
}

TEST_CASE("skeleton_predict examples") {
    const auto q = ModelSpec::quad_map(3.2, -0.2);
    for (int m : {1, 2, 5}) CHECK(skeleton_predict(q, std::vector<double>{11.0}, m) == doctest::Approx(11.0));
    const auto ar = ModelSpec::linear_ar({0.7});
    CHECK(skeleton_predict(ar, std::vector<double>{2.0}, 4) == doctest::Approx(2.0 * std::pow(0.7, 4)));
}

TEST_CASE("LinearAR m=1 Hessian is zero") {
    const auto ar = ModelSpec::linear_ar({0.3, 0.2});
    const auto h = skeleton_hessian(ar, std::vector<double>{1.0, 2.0}, 1);
    CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("QuadMap gradient and Hessian against finite differences") {
    const std::vector<double> th{3.2, -0.2};
    const std::vector<double> hist{1.0};
    const auto g = skeleton_gradient(ModelSpec::quad_map(th[0], th[1]), hist, 3);
    const auto H = skeleton_hessian(ModelSpec::quad_map(th[0], th[1]), hist, 3);
    const double h = 1e-6;
    for (int k = 0; k < 2; ++k) {
        auto tp = th, tm = th;
        tp[static_cast<std::size_t>(k)] += h;
        tm[static_cast<std::size_t>(k)] -= h;
        const double fd = (skeleton_predict(ModelSpec::quad_map(tp[0], tp[1]), hist, 3) -
                           skeleton_predict(ModelSpec::quad_map(tm[0], tm[1]), hist, 3)) /
                          (2 * h);
        CHECK(std::abs(fd - g[k]) <= 1e-5 * std::max(1.0, std::abs(fd)));
        const double h2 = 1e-5;
        tp = th;
        tm = th;
        tp[static_cast<std::size_t>(k)] += h2;
        tm[static_cast<std::size_t>(k)] -= h2;
        const auto gp = skeleton_gradient(ModelSpec::quad_map(tp[0], tp[1]), hist, 3);
        const auto gm = skeleton_gradient(ModelSpec::quad_map(tm[0], tm[1]), hist, 3);
        for (int l = 0; l < 2; ++l) {
            const double fd2 = (gp[l] - gm[l]) / (2 * h2);
            CHECK(std::abs(fd2 - H(l, k)) <= 1e-4 * std::max(1.0, std::abs(fd2)));
        }
    }
}

TEST_CASE("SETAR derivative at a tie") {
    const auto s = ModelSpec::setar(kSetar6);
    CHECK_THROWS_AS(skeleton_path(s, std::vector<double>{0.0, 1.0}, 1, 1), NonDifferentiablePoint);
    CHECK_NOTHROW(skeleton_path(s, std::vector<double>{0.0, 1.0}, 1, 1, TiePolicy::Subgradient));
}

TEST_CASE("Lyapunov exponents") {
    CHECK(lyapunov_exponent(ModelSpec::linear_ar({0.5}), std::vector<double>{1.0}, 100) ==
          doctest::Approx(std::log(0.5)));
    CHECK(lyapunov_exponent(ModelSpec::linear_ar({1.0}), std::vector<double>{1.0}, 100) == doctest::Approx(0.0));
    // QuadMap (3.2, -0.2) in x: x' = 3.2x - 0.2x^2; fixed point 11 with slope 3.2 - 0.4*11 = -1.2,
    // so orbits settle on a cycle. Compare with the separation rate of two nearby trajectories.
    const auto q = ModelSpec::quad_map(3.2, -0.2);
    const double lam = lyapunov_exponent(q, std::vector<double>{1.0}, 2000);
    CHECK(lam < 0.0);
    const int burn = 1000, n = 400;
    double x = 1.0;
    for (int i = 0; i < burn; ++i) x = 3.2 * x - 0.2 * x * x;
    double sum = 0.0;
    const double eps = 1e-9;
    for (int i = 0; i < n; ++i) {
        const double xn = 3.2 * x - 0.2 * x * x;
        const double xe = x + eps;
        const double xen = 3.2 * xe - 0.2 * xe * xe;
        sum += std::log(std::abs(xen - xn) / eps);
        x = xn;
    }
    CHECK(std::abs(lam - sum / n) < 0.05);
}

TEST_CASE("fractional integration coefficients") {
    const auto pi0 = fi_ar_coefficients(0.0, 5);
    CHECK(pi0[0] == 1.0);
    for (std::size_t j = 1; j < pi0.size(); ++j) CHECK(pi0[j] == 0.0);
    const auto r = fi_autocorrelation(0.3, 3);
    CHECK(r[1] == doctest::Approx(0.3 / 0.7));
    CHECK(r[2] == doctest::Approx(0.3 / 0.7 * 1.3 / 1.7));
    // The MA weights invert the filter 1 - sum_j pi_j B^j.
    const auto a = fi_ar_coefficients(0.3, 20);
    const auto b = fi_ma_coefficients(0.3, 20);
    for (std::size_t n = 1; n < 20; ++n) {
        double s = b[n];
        for (std::size_t j = 1; j <= n; ++j) s -= a[j] * b[n - j];
        CHECK(std::abs(s) < 1e-12);
    }
}

TEST_CASE("fractional noise") {
    const auto white = fractional_noise(0.0, 1000, 3);
    const auto w2 = fractional_noise(0.0, 1000, 3);
    CHECK(white == w2);
    const auto y = fractional_noise(0.3, 100000, 8);
    const auto a = sample_acf(y, 1);
    CHECK(std::abs(a.r[1] - 0.3 / 0.7) < 0.02);
}

TEST_CASE("AR autocovariance matches the companion-matrix Lyapunov sum") {
    const std::vector<double> th{0.5, -0.3, 0.1};
    const auto g = ar_autocovariance(th, 2.0, 6);
    const auto F = companion_matrix(th);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(3, 3);
    Q(0, 0) = 2.0;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(3, 3);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(3, 3);
    for (int i = 0; i < 2000; ++i) {
        S += P * Q * P.transpose();
        P = F * P;
    }
    CHECK(g[0] == doctest::Approx(S(0, 0)));
    CHECK(g[1] == doctest::Approx(S(0, 1)));
    CHECK(g[2] == doctest::Approx(S(0, 2)));
    Eigen::MatrixXd Fk = Eigen::MatrixXd::Identity(3, 3);
    for (int k = 0; k <= 6; ++k) {
        CHECK(g[static_cast<std::size_t>(k)] == doctest::Approx((Fk * S)(0, 0)));
        Fk = F * Fk;
    }
}

TEST_CASE("SIR skeleton and births") {
    SirStructure sir;
    sir.births = {10, 20, 30};
    sir.season_length = 2;
    CHECK(sir.birth(0) == 10);
    CHECK(sir.birth(5) == 30);
    CHECK(sir.birth(-1) == 10);
    const auto m = ModelSpec::discrete_sir({-5.0, -6.0, 100.0}, sir);
    const std::vector<double> hist{2.0, 100.0};
    const auto p = skeleton_path(m, hist, 2, 0);
    const double i1 = std::exp(-5.0) * 100.0 * 2.0;
    const double s1 = 100.0 + 10.0 - i1;
    CHECK(p.value[0] == doctest::Approx(i1));
    CHECK(p.value[1] == doctest::Approx(std::exp(-6.0) * s1 * i1));
}

TEST_CASE("SIR derivatives against finite differences") {
    SirStructure sir;
    sir.births = {30, 40, 35, 50};
    sir.season_length = 3;
    const std::vector<double> th{-6.0, -6.2, -5.9, 400.0};
    // The history carries S_t = S0 + offset, so S0 moves it one for one.
    const double offset = -20.0;
    const std::vector<double> hist{5.0, th[3] + offset};
    const auto m = ModelSpec::discrete_sir(th, sir);
    const auto path = skeleton_path(m, hist, 5, 2, TiePolicy::Throw, 1);
    for (std::size_t k = 0; k < th.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(th[k]));
        auto tp = th, tm = th;
        tp[k] += h;
        tm[k] -= h;
        const std::vector<double> hp{5.0, tp[3] + offset}, hm{5.0, tm[3] + offset};
        const auto pp = skeleton_path(ModelSpec::discrete_sir(tp, sir), hp, 5, 1, TiePolicy::Throw, 1);
        const auto pm = skeleton_path(ModelSpec::discrete_sir(tm, sir), hm, 5, 1, TiePolicy::Throw, 1);
        for (int j = 1; j <= 5; ++j) {
            const double fd = (pp.value[static_cast<std::size_t>(j - 1)] - pm.value[static_cast<std::size_t>(j - 1)]) / (2 * h);
            CHECK(std::abs(fd - path.gradient(j, static_cast<int>(k))) <= 1e-5 * std::max(1.0, std::abs(fd)));
            for (std::size_t l = 0; l < th.size(); ++l) {
                const double fd2 = (pp.gradient(j, static_cast<int>(l)) - pm.gradient(j, static_cast<int>(l))) / (2 * h);
                CHECK(std::abs(fd2 - path.hessian(j, static_cast<int>(l), static_cast<int>(k))) <=
                      1e-4 * std::max(1.0, std::abs(fd2)));
            }
        }
    }
}
