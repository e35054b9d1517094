#include "featmatch/rng.hpp"

#include <cmath>

namespace featmatch {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = uniform(-1.0, 1.0);
        v = uniform(-1.0, 1.0);
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double Rng::truncated_normal(double bound) {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= bound) return z;
    }
}

std::int64_t Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
        // Knuth multiplication method.
        const double limit = std::exp(-mean);
        std::int64_t k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }
    // PTRS transformed rejection (Hormann 1993).
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = uniform() - 0.5;
        const double v = uniform();
        const double us = 0.5 - std::abs(u);
        const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
        if (us >= 0.07 && v <= vr) return k;
        if (k < 0 || (us < 0.013 && v > us)) continue;
        const double kd = static_cast<double>(k);
        if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
            -mean + kd * loglam - std::lgamma(kd + 1.0)) {
            return k;
        }
    }
}

}  // namespace featmatch
