#include "featmatch/series.hpp"

#include "featmatch/errors.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>

namespace featmatch {

namespace {

// FFTW's planner is not thread-safe; execution on a private plan is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<double> centered(std::span<const double> values) {
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    std::vector<double> out(values.begin(), values.end());
    for (double& v : out) v -= mean;
    return out;
}

}  // namespace

TimeSeries::TimeSeries(std::vector<double> values, std::int64_t start_index, double step)
    : values_(std::move(values)), start_index_(start_index), step_(step) {
    if (values_.empty()) throw InvalidArgument("TimeSeries: empty series");
    if (!(step_ > 0.0) || !std::isfinite(step_)) throw InvalidArgument("TimeSeries: step must be > 0");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw InvalidArgument("TimeSeries: non-finite value at index " + std::to_string(i));
        }
    }
}

double TimeSeries::mean() const noexcept {
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

TimeSeries TimeSeries::slice(std::size_t first, std::size_t count) const {
    if (first + count > values_.size() || count == 0) throw InvalidArgument("TimeSeries::slice out of range");
    return TimeSeries(std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(first),
                                          values_.begin() + static_cast<std::ptrdiff_t>(first + count)),
                      start_index_ + static_cast<std::int64_t>(first), step_);
}

std::string_view to_string(SpectrumKind kind) noexcept {
    switch (kind) {
        case SpectrumKind::RawPeriodogram: return "raw-periodogram";
        case SpectrumKind::Smoothed: return "smoothed";
        case SpectrumKind::ModelTheoretical: return "model-theoretical";
    }
    return "unknown";
}

AcfEstimate sample_acf(std::span<const double> values, std::size_t max_lag) {
    const std::size_t n = values.size();
    if (n == 0) throw InvalidArgument("sample_acf: empty series");
    if (max_lag >= n) throw InvalidArgument("sample_acf: max_lag must be < series length");

    const auto x = centered(values);
    AcfEstimate out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    out.gamma.assign(max_lag + 1, 0.0);
    out.r.assign(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) s += x[t] * x[t + k];
        out.gamma[k] = s / static_cast<double>(n);
    }
    out.r[0] = 1.0;
    if (out.gamma[0] > 0.0) {
        for (std::size_t k = 1; k <= max_lag; ++k) out.r[k] = out.gamma[k] / out.gamma[0];
    }
    return out;
}

AcfEstimate sample_acf(const TimeSeries& series, std::size_t max_lag) {
    return sample_acf(series.values(), max_lag);
}

Spectrum periodogram(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw InvalidArgument("periodogram: series too short (need length >= 2)");
    auto x = centered(values);
    const std::size_t half = n / 2;
    std::vector<std::complex<double>> coef(half + 1);

    fftw_plan plan = nullptr;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(),
                                    reinterpret_cast<fftw_complex*>(coef.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }

    Spectrum out;
    out.kind = SpectrumKind::RawPeriodogram;
    out.freqs.resize(half);
    out.power.resize(half);
    const double scale = 1.0 / (2.0 * std::numbers::pi * static_cast<double>(n));
    for (std::size_t j = 1; j <= half; ++j) {
        out.freqs[j - 1] = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        out.power[j - 1] = std::norm(coef[j]) * scale;
    }
    return out;
}

Spectrum periodogram(const TimeSeries& series) { return periodogram(series.values()); }

Spectrum periodogram_direct(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw InvalidArgument("periodogram: series too short (need length >= 2)");
    const auto x = centered(values);
    const std::size_t half = n / 2;
    Spectrum out;
    out.kind = SpectrumKind::RawPeriodogram;
    out.freqs.resize(half);
    out.power.resize(half);
    for (std::size_t j = 1; j <= half; ++j) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        double re = 0.0;
        double im = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = w * static_cast<double>(t + 1);
            re += x[t] * std::cos(a);
            im -= x[t] * std::sin(a);
        }
        out.freqs[j - 1] = w;
        out.power[j - 1] = (re * re + im * im) / (2.0 * std::numbers::pi * static_cast<double>(n));
    }
    return out;
}

Spectrum smoothed_sdf(const Spectrum& spec, int bandwidth) {
    if (spec.kind != SpectrumKind::RawPeriodogram) {
        throw InvalidArgument("smoothed_sdf: input must be a raw periodogram");
    }
    if (bandwidth < 1 || bandwidth % 2 == 0) {
        throw InvalidArgument("smoothed_sdf: bandwidth must be odd and >= 1");
    }
    Spectrum out = spec;
    out.kind = SpectrumKind::Smoothed;
    const auto n = static_cast<std::ptrdiff_t>(spec.power.size());
    if (bandwidth == 1 || n == 0) return out;
    const std::ptrdiff_t half = bandwidth / 2;
    auto reflect = [n](std::ptrdiff_t i) {
        if (n == 1) return std::ptrdiff_t{0};
        const std::ptrdiff_t period = 2 * (n - 1);
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - i;
    };
    for (std::ptrdiff_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) s += spec.power[static_cast<std::size_t>(reflect(j + k))];
        out.power[static_cast<std::size_t>(j)] = s / static_cast<double>(bandwidth);
    }
    return out;
}

}  // namespace featmatch
