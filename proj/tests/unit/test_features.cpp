#include "featmatch/errors.hpp"
#include "featmatch/estimators.hpp"
#include "featmatch/features.hpp"
#include "featmatch/models.hpp"
#include "featmatch/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace featmatch;

TEST_CASE("acf_match_error examples") {
    const std::vector<double> ry{1, 0}, rx{1, 1};
    CHECK(acf_match_error(ry, rx, 1) == doctest::Approx(1.0));
    CHECK(acf_match_error(ry, ry, 1) == 0.0);
    const auto y = simulate(ModelSpec::linear_ar({0.5}, {1.0}), 200, 2, std::vector<double>{0.0});
    CHECK(acf_match_error(y, y, 20) == 0.0);
}

TEST_CASE("path_match_error examples") {
    const std::vector<double> y{0, 1, 0, 1}, x{1, 0, 1, 0, 1};
    const auto pm = path_match_error(y, x, 1);
    CHECK(pm.error == 0.0);
    CHECK(pm.shift == 1);
    const auto self = path_match_error(y, std::vector<double>{0, 1, 0, 1, 0}, 1);
    CHECK(self.error == 0.0);
    CHECK(self.shift == 0);
}

TEST_CASE("D_C examples") {
    const std::vector<double> gy{1, 0}, gx{1, 0.3}, w{0.5, 0.5};
    CHECK(d_c_distance(gy, gx, w) == doctest::Approx(0.045));
    CHECK(d_c_distance(gy, gy, w) == 0.0);
    CHECK(d_c_sup(gy, gx) == doctest::Approx(0.09));
}

TEST_CASE("Itakura-Saito examples") {
    Spectrum f;
    for (int j = 1; j <= 64; ++j) {
        f.freqs.push_back(M_PI * j / 64.0);
        f.power.push_back(1.0 + 0.5 * std::cos(f.freqs.back()));
    }
    CHECK(d_f_itakura_saito(f, f) == doctest::Approx(0.0));
    Spectrum y;
    y.freqs = f.freqs;
    y.power.assign(f.power.size(), 2.0);
    Spectrum x = y;
    x.power.assign(f.power.size(), 1.0);
    CHECK(d_f_itakura_saito(y, x) == doctest::Approx((2.0 - std::log(2.0) - 1.0) * 2.0 * M_PI));
    Spectrum bad = x;
    bad.power[3] = 0.0;
    CHECK_THROWS_AS(d_f_itakura_saito(y, bad), InvalidArgument);
}

TEST_CASE("AR spectral density integrates to the variance") {
    const std::vector<double> th{0.5, -0.3};
    std::vector<double> freqs;
    const int n = 20000;
    for (int j = 0; j < n; ++j) freqs.push_back(M_PI * (j + 0.5) / n);
    const auto s = ar_spectral_density(th, 1.5, freqs);
    double integral = 0.0;
    for (double p : s.power) integral += p * M_PI / n;
    CHECK(2.0 * integral == doctest::Approx(ar_autocovariance(th, 1.5, 0)[0]).epsilon(1e-6));
}

TEST_CASE("cycle_period on data") {
    // 240 states including the two initial values: a whole number of periods.
    const auto orbit = skeleton_orbit(ModelSpec::setar({3, 1, -3, 1, 0, 2}), std::vector<double>{0, 0}, 238);
    CHECK(cycle_period(TimeSeries(orbit)) == 6.0);
    Rng rng(4);
    std::vector<double> c(400);
    for (std::size_t t = 0; t < c.size(); ++t) c[t] = std::cos(2 * M_PI * static_cast<double>(t) / 10.0) + 0.1 * rng.normal();
    const auto p = cycle_period(TimeSeries(c));
    REQUIRE(p.has_value());
    CHECK(std::abs(*p - 10.0) <= 0.5);
}

TEST_CASE("white noise rarely shows a dominant cycle") {
    Rng rng(77);
    int hits = 0;
    const int R = 200;
    for (int r = 0; r < R; ++r) {
        std::vector<double> w(100);
        for (auto& v : w) v = rng.normal();
        hits += cycle_period(TimeSeries(w)).has_value();
    }
    CHECK(hits <= R / 20);
}

TEST_CASE("cycle_period of skeletons") {
    CHECK(cycle_period(ModelSpec::setar({3, 1, -3, 1, 0, 2}), std::vector<double>{0, 0}) == 6.0);
    CHECK(cycle_period(ModelSpec::setar({3, 1, -3, 1, 0, 3}), std::vector<double>{0, 0, 0}) == 10.0);
    CHECK_FALSE(cycle_period(ModelSpec::linear_ar({1.2}), std::vector<double>{1.0}).has_value());
}

TEST_CASE("stability_check") {
    CHECK(stability_check(ModelSpec::linear_ar({0.5})));
    CHECK_FALSE(stability_check(ModelSpec::linear_ar({1.1})));
    CHECK(stability_check(ModelSpec::setar({3, 1, -3, 1, 0, 2}), -5, 5));
}

TEST_CASE("theorem B limit: zero noise and closed form versus direct solve") {
    const std::vector<double> th{0.8};
    const auto g = ar_autocovariance(th, 1.0, 40);
    const auto z = theorem_b_bias(th, g, 0.0, 5);
    CHECK(std::abs(z[0]) < 1e-14);
    for (int m : {1, 5, 20}) {
        const auto bias = theorem_b_bias(th, g, 0.5, m);
        const auto limit = theorem_b_limit(g, 0.5, 1, m);
        CHECK(th[0] + bias[0] == doctest::Approx(limit[0]).epsilon(1e-10));
    }
    const std::vector<double> th2{0.5, -0.3};
    const auto g2 = ar_autocovariance(th2, 1.0, 40);
    for (int m : {2, 6, 15}) {
        const auto bias = theorem_b_bias(th2, g2, 0.7, m);
        const auto limit = theorem_b_limit(g2, 0.7, 2, m);
        for (std::size_t i = 0; i < 2; ++i) CHECK(th2[i] + bias[i] == doctest::Approx(limit[i]).epsilon(1e-10));
    }
}

TEST_CASE("Q-tilde for AR(1)") {
    CHECK(q_tilde_ar1(0.5, 0.5, 2.0, 10) == doctest::Approx(0.0));
    // k = 1 term: (beta - theta)^2 gamma0.
    CHECK(q_tilde_ar1(0.5, 0.3, 2.0, 1) == doctest::Approx(0.04 * 2.0));
}

TEST_CASE("compute_features on a model's own orbit") {
    const auto m = ModelSpec::setar({3, 1, -3, 1, 0, 2});
    const auto orbit = skeleton_orbit(m, std::vector<double>{0, 0}, 299);
    std::vector<double> tail(orbit.begin() + 100, orbit.end());
    FeatureOptions fo;
    fo.acf_lags = 20;
    fo.shift_max = 6;
    const auto r = compute_features(TimeSeries(tail), m, fo);
    CHECK(r.path_match_error == doctest::Approx(0.0));
    CHECK(r.acf_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.cycle_period_model == 6.0);
    CHECK(r.stable);
}

TEST_CASE("skeleton_attractor") {
    const auto a = skeleton_attractor(ModelSpec::setar({3, 1, -3, 1, 0, 2}), std::vector<double>{0, 0}, 50, 12);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i + 6 < a.size(); ++i) CHECK(a[i] == a[i + 6]);
    CHECK(skeleton_attractor(ModelSpec::linear_ar({1.5}), std::vector<double>{1.0}, 100, 10).size() < 10);
}
