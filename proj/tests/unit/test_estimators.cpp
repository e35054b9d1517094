#include "featmatch/errors.hpp"
#include "featmatch/estimators.hpp"
#include "featmatch/features.hpp"
#include "featmatch/models.hpp"
#include "featmatch/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace featmatch;

namespace {
TimeSeries ar_data(std::vector<double> th, std::size_t T, std::uint64_t seed, double s1 = 0.0) {
    return simulate(ModelSpec::linear_ar(th, {1.0, s1}), T, seed, std::vector<double>(th.size(), 0.0));
}
}  // namespace

TEST_CASE("LSE recovers an exactly generated AR(1)") {
    const auto y = simulate(ModelSpec::linear_ar({0.5}), 30, 1, std::vector<double>{4.0}, {0});
    const auto fit = fit_lse(ModelSpec::linear_ar({0.0}), y);
    CHECK(std::abs(fit.theta_hat[0] - 0.5) < 1e-10);
}

TEST_CASE("APE(1) equals LSE") {
    const auto y = ar_data({0.6, -0.2}, 200, 3);
    const auto tmpl = ModelSpec::linear_ar({0.0, 0.0});
    const auto a = fit_lse(tmpl, y);
    const auto b = fit_ape(tmpl, y, 1, uniform_weights(1));
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(a.theta_hat[i] - b.theta_hat[i]) < 1e-8);
}

TEST_CASE("APE objective gradient and Hessian against finite differences") {
    const auto y = ar_data({0.6}, 60, 5, 0.5);
    const auto m = ModelSpec::quad_map(1.5, -0.1);
    std::vector<double> yy(y.values().begin(), y.values().end());
    for (auto& v : yy) v = 3.0 + 0.5 * v;
    const auto w = uniform_weights(4).w;
    const auto o = ape_objective(m, yy, w, 2);
    const std::vector<double> th{1.5, -0.1};
    for (std::size_t k = 0; k < 2; ++k) {
        const double h = 1e-6;
        auto tp = th, tm = th;
        tp[k] += h;
        tm[k] -= h;
        const auto op = ape_objective(ModelSpec::quad_map(tp[0], tp[1]), yy, w, 1);
        const auto om = ape_objective(ModelSpec::quad_map(tm[0], tm[1]), yy, w, 1);
        const double fd = (op.value - om.value) / (2 * h);
        CHECK(std::abs(fd - o.grad[static_cast<Eigen::Index>(k)]) <= 1e-4 * std::max(1.0, std::abs(fd)));
        for (std::size_t l = 0; l < 2; ++l) {
            const double fd2 = (op.grad[static_cast<Eigen::Index>(l)] - om.grad[static_cast<Eigen::Index>(l)]) / (2 * h);
            CHECK(std::abs(fd2 - o.hess(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k))) <=
                  1e-4 * std::max(1.0, std::abs(fd2)));
        }
    }
}

TEST_CASE("AYW(p) equals Yule-Walker and p=1 is the lag-one ratio") {
    const auto y = ar_data({0.5, -0.3}, 300, 7);
    CHECK(fit_ayw(y, 2, 2).theta_hat == fit_yule_walker(y, 2).theta_hat);
    const auto a = sample_acf(y, 1);
    CHECK(fit_yule_walker(y, 1).theta_hat[0] == doctest::Approx(a.gamma[1] / a.gamma[0]));
}

TEST_CASE("lagged Yule-Walker with consistent autocovariances") {
    std::vector<double> g(30);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::pow(0.7, static_cast<double>(k));
    for (int m : {1, 3, 10}) CHECK(ayw_from_acv(g, 1, m)[0] == doctest::Approx(0.7));
}

TEST_CASE("Yule-Walker and Walker consistency on a long AR(2)") {
    const auto y = ar_data({0.5, -0.3}, 50000, 13);
    const auto yw = fit_yule_walker(y, 2).theta_hat;
    CHECK(std::abs(yw[0] - 0.5) < 0.02);
    CHECK(std::abs(yw[1] + 0.3) < 0.02);
    const auto wk = fit_walker(y, 2, 2).theta_hat;
    CHECK(std::abs(wk[0] - 0.5) < 0.03);
    CHECK(std::abs(wk[1] + 0.3) < 0.03);
}

TEST_CASE("scale invariance of LSE and Yule-Walker") {
    const auto y = ar_data({0.4, 0.2}, 200, 17);
    std::vector<double> z(y.values().begin(), y.values().end());
    for (auto& v : z) v *= -7.5;
    const TimeSeries ys(z);
    const auto tmpl = ModelSpec::linear_ar({0.0, 0.0});
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(fit_lse(tmpl, y).theta_hat[i] == doctest::Approx(fit_lse(tmpl, ys).theta_hat[i]).epsilon(1e-9));
        CHECK(fit_yule_walker(y, 2).theta_hat[i] == doctest::Approx(fit_yule_walker(ys, 2).theta_hat[i]).epsilon(1e-9));
    }
}

TEST_CASE("Whittle on AR(1) and white noise") {
    const auto y = ar_data({0.6}, 8192, 19);
    CHECK(std::abs(fit_whittle(y, 1).theta_hat[0] - 0.6) < 0.03);
    Rng rng(23);
    std::vector<double> w(8192);
    for (auto& v : w) v = rng.normal();
    CHECK(std::abs(fit_whittle(TimeSeries(w), 1).theta_hat[0]) < 0.03);
}

TEST_CASE("reflection to the stationary region") {
    std::vector<double> th{1.2};
    CHECK(reflect_to_stationary(th));
    CHECK(std::abs(th[0]) < 1.0);
    std::vector<double> ok{0.5};
    CHECK_FALSE(reflect_to_stationary(ok));
    CHECK(ok[0] == 0.5);
}

TEST_CASE("AIC order selection") {
    // AIC never underfits a strong AR(1) and picks the true order most of the time; its
    // large-sample overfitting probability with eight candidate orders is about 0.3.
    int hits = 0;
    const int R = 40;
    for (int r = 0; r < R; ++r) {
        const int p = select_order_aic(ar_data({0.9}, 2000, 100 + static_cast<std::uint64_t>(r)), 8);
        CHECK(p >= 1);
        hits += p == 1;
    }
    CHECK(hits >= R / 2);
    Rng rng(31);
    int ones = 0;
    for (int r = 0; r < 20; ++r) {
        std::vector<double> w(500);
        for (auto& v : w) v = rng.normal();
        ones += select_order_aic(TimeSeries(w), 8) == 1;
    }
    CHECK(ones > 10);
}

TEST_CASE("weight schemes") {
    const auto oh = one_hot_weights(1, 3);
    CHECK(oh.w == std::vector<double>{1, 0, 0});
    const auto u = uniform_weights(4);
    CHECK(u.w == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    // A series whose sample ACF is (1, 0.5, 0.25) is not needed: abs-acf normalises |r(1..m)|.
    std::vector<double> y(400);
    Rng rng(2);
    double x = 0.0;
    for (auto& v : y) v = x = 0.5 * x + rng.normal();
    const auto a = sample_acf(y, 2);
    const auto w = make_weights({WeightKind::AbsAcf, 1, 1}, TimeSeries(y), 2);
    CHECK(w.w[0] == doctest::Approx(std::abs(a.r[1]) / (std::abs(a.r[1]) + std::abs(a.r[2]))));
    const auto flat = make_weights({WeightKind::AbsAcf, 1, 1}, TimeSeries(std::vector<double>(50, 1.0)), 3);
    CHECK(flat.w == uniform_weights(3).w);
    CHECK(parse_weight_kind("one-hot") == WeightKind::OneHot);
    CHECK_THROWS_AS(parse_weight_kind("nope"), InvalidArgument);
}

TEST_CASE("estimator input errors") {
    const TimeSeries flat(std::vector<double>(40, 2.0));
    CHECK_THROWS_AS(fit_lse(ModelSpec::linear_ar({0.0}), flat), SingularSystem);
    CHECK_THROWS_AS(fit_lse(ModelSpec::linear_ar({0.0, 0.0}), TimeSeries({1.0, 2.0, 3.0})), InvalidArgument);
    CHECK_THROWS(fit_ape(ModelSpec::linear_ar({0.0}), ar_data({0.5}, 50, 1), 3, uniform_weights(2)));
}

TEST_CASE("SETAR fit recovers the period-6 model from noisy data") {
    const auto m = ModelSpec::setar({3, 1, -3, 1, 0, 2}, 1, {0.0, 1.0});
    const auto y = simulate(m, 100, 41, std::vector<double>{0.0, 0.0});
    FitOptions fo;
    fo.restarts = 4;
    const auto tmpl = ModelSpec::setar({0, 0, 0, 0, 0, 2});
    const auto fit = fit_ape(tmpl, y, 50, uniform_weights(50), fo);
    const auto period = cycle_period(tmpl.with_theta(fit.theta_hat), std::vector<double>{y[0], y[1]});
    REQUIRE(period.has_value());
    CHECK(*period == 6);
    CHECK(fit.theta_hat.back() == 2);
}

TEST_CASE("SIR initial estimate and LSE on simulated data") {
    SirStructure sir;
    sir.births.assign(200, 40.0);
    sir.season_length = 4;
    const std::vector<double> truth{-6.9, -7.0, -6.95, -7.05, 1100.0};
    const auto m = ModelSpec::discrete_sir(truth, sir);
    const auto orbit = skeleton_orbit(m, std::vector<double>{20.0, 1100.0}, 199);
    REQUIRE(orbit.size() == 200);
    const TimeSeries y(orbit);
    const auto fit = fit_lse(ModelSpec::discrete_sir({0, 0, 0, 0, 0}, sir), y);
    for (std::size_t k = 0; k < 4; ++k) CHECK(fit.theta_hat[k] == doctest::Approx(truth[k]).epsilon(1e-4));
    CHECK(fit.theta_hat[4] == doctest::Approx(1100.0).epsilon(1e-4));
}
