#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "metapat/special.hpp"

namespace metapat {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named stream derived from a master seed. Stages and studies get
/// disjoint streams so results do not depend on execution order.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ fnv1a(name)) + index);
}

/// Random source used everywhere in the library. Every variate is derived
/// from raw engine output with no cached state, so serializing the engine
/// captures the whole generator.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0)
        : engine_(stream_seed(master, stream, index)) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire's rejection keeps this unbiased.
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= threshold) return x % n;
        }
    }

    double normal() {
        // Marsaglia polar method; the second variate is discarded.
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s < 1.0 && s > 0.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// log of a Gamma(shape, 1) draw. Working in logs keeps tiny shapes from
    /// underflowing to zero.
    double log_gamma(double shape) {
        if (shape < 1.0) {
            // Gamma(a) = Gamma(a + 1) * U^(1/a)
            return log_gamma(shape + 1.0) + std::log(uniform()) / shape;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d * v);
        }
    }

    double gamma(double shape) { return std::exp(log_gamma(shape)); }

    /// Beta(a, b) draw, clamped away from exact 0 and 1.
    double beta(double a, double b) {
        const double lx = log_gamma(a);
        const double ly = log_gamma(b);
        // x / (x + y) = 1 / (1 + exp(ly - lx))
        const double r = 1.0 / (1.0 + std::exp(ly - lx));
        constexpr double lo = 1e-300;
        if (r <= 0.0) return lo;
        if (r >= 1.0) return std::nextafter(1.0, 0.0);
        return r;
    }

    /// Truncated normal on (lower, inf) via the inverse CDF of the upper tail.
    double truncated_normal_above(double mean, double sd, double lower) {
        const double alpha = (lower - mean) / sd;
        const double tail = special::normal_sf(alpha);
        double q = uniform() * tail;
        if (q <= 0.0) q = tail * 0.5;
        return mean - sd * special::normal_quantile(q);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace metapat
