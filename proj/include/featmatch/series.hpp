#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace featmatch {

/// Ordered, equally spaced real observations. Immutable after construction.
class TimeSeries {
public:
    /// Throws InvalidArgument when empty, when a value is not finite, or when step <= 0.
    explicit TimeSeries(std::vector<double> values, std::int64_t start_index = 0, double step = 1.0);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }
    std::int64_t start_index() const noexcept { return start_index_; }
    double step() const noexcept { return step_; }

    double mean() const noexcept;

    /// Contiguous sub-series [first, first + count).
    TimeSeries slice(std::size_t first, std::size_t count) const;

    bool operator==(const TimeSeries&) const = default;

private:
    std::vector<double> values_;
    std::int64_t start_index_ = 0;
    double step_ = 1.0;
};

/// Sample autocovariances with divisor T and the matching autocorrelations.
struct AcfEstimate {
    std::vector<double> gamma;  ///< gamma(0..K)
    std::vector<double> r;      ///< r(0..K), r(0) == 1
    double mean = 0.0;

    std::size_t max_lag() const noexcept { return gamma.empty() ? 0 : gamma.size() - 1; }
};

enum class SpectrumKind { RawPeriodogram, Smoothed, ModelTheoretical };

std::string_view to_string(SpectrumKind kind) noexcept;

/// Power on a grid of angular frequencies in (0, pi].
struct Spectrum {
    std::vector<double> freqs;
    std::vector<double> power;
    SpectrumKind kind = SpectrumKind::RawPeriodogram;
};

/// gamma(k) = T^-1 sum_{t=1}^{T-k} (y_t - ybar)(y_{t+k} - ybar), k = 0..max_lag.
/// A constant series yields r(k > 0) = 0.
AcfEstimate sample_acf(std::span<const double> values, std::size_t max_lag);
AcfEstimate sample_acf(const TimeSeries& series, std::size_t max_lag);

/// I(w_j) = |sum_t (y_t - ybar) exp(-i w_j t)|^2 / (2 pi T) at w_j = 2 pi j / T, j = 1..floor(T/2).
Spectrum periodogram(std::span<const double> values);
Spectrum periodogram(const TimeSeries& series);

/// O(T^2) direct evaluation of the same sum. Kept as an independent check on the FFT route.
Spectrum periodogram_direct(std::span<const double> values);

/// Daniell (moving-average) smoother with mirror reflection at both ends.
/// Bandwidth must be odd; bandwidth 1 is the identity.
Spectrum smoothed_sdf(const Spectrum& spec, int bandwidth);

}  // namespace featmatch
