#pragma once

#include <cstdint>
#include <random>

namespace featmatch {

/// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stateless per-task seed: identical inputs give identical seeds no matter
/// which worker runs the task or in which order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication,
                                    std::uint64_t cell = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ replication) ^ (cell * 0xD1B54A32D192ED03ULL));
}

/// Thin wrapper around a 64-bit Mersenne twister. Normal variates come from
/// the Marsaglia polar method so the stream is identical across standard
/// library implementations (std::normal_distribution is not specified).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    /// Standard normal restricted to [-bound, bound] by rejection.
    double truncated_normal(double bound);

    /// Poisson variate with the given mean (mean >= 0).
    std::int64_t poisson(double mean);

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace featmatch
