#ifndef RIVERCAST_RNG_HPP
#define RIVERCAST_RNG_HPP

#include <cmath>
#include <cstdint>

namespace rivercast {

/**
 * Deterministic random source.
 *
 * Wraps a splitmix64 core so that every sampled value depends only on the
 * seed and the call sequence, never on libstdc++ distribution internals.
 * All stochastic code in the project (network synthesis, runoff, parameter
 * init, shuffles) draws from this type.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    /// Standard normal via Box-Muller (one value per call, cached pair).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Lognormal with the given log-space parameters.
    double lognormal(double mu_log, double sigma_log) {
        return std::exp(normal(mu_log, sigma_log));
    }

    /// Derive an independent stream (e.g. per reach) from this seed.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace rivercast

#endif
