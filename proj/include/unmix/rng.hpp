#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "unmix/errors.hpp"

namespace unmix {

/// Counter-based splittable generator (SplitMix64 finalizer over key+counter).
/// Identical seed => identical draw sequence on every platform; streams derived
/// via split() are independent of the parent's position.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : key_(seed) {}

    std::uint64_t seed() const { return key_; }

    std::uint64_t next_u64() {
        return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ull);
    }

    /// Derive an independent stream; deterministic in (key, lane), not in counter.
    RngStream split(std::uint64_t lane) const {
        return RngStream(mix(key_ ^ mix(lane + 0xA0761D6478BD642Full)));
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0, 1); safe as a log() argument.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two draws per value, no cached twin).
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(alpha, 1) by Marsaglia-Tsang; alpha < 1 boosted through alpha+1.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw ConfigError("gamma: alpha must be positive");
        if (alpha < 1.0) {
            const double g = gamma(alpha + 1.0);
            return g * std::pow(uniform_open(), 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Symmetric Dirichlet(alpha) over `r` components.
    std::vector<double> dirichlet(double alpha, int r) {
        std::vector<double> a(static_cast<std::size_t>(r));
        for (;;) {
            double sum = 0.0;
            for (auto& v : a) {
                v = gamma(alpha);
                sum += v;
            }
            if (sum > 1e-300) {  // all-underflow redraw (possible at tiny alpha)
                for (auto& v : a) v /= sum;
                return a;
            }
        }
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace unmix
