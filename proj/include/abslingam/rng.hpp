#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace abslingam {

// Repo-wide PRNG. All randomness flows through an explicit 64-bit seed and
// the distributions below, so identical seeds give identical streams on any
// platform (std::* distributions are not portable, hence the hand-rolled
// transforms).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % range);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double exponential(double rate) {
        return -std::log1p(-uniform01()) / rate;
    }

    // Box-Muller, one value per call (the spare is cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Marsaglia-Tsang for alpha >= 1, boost trick for alpha < 1.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be positive");
        if (alpha < 1.0) {
            const double u = uniform01();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(int n, double alpha) {
        std::vector<double> v(n);
        double sum = 0.0;
        for (auto& x : v) {
            x = gamma(alpha);
            sum += x;
        }
        for (auto& x : v) x /= sum;
        return v;
    }

    // Signed magnitude uniform on [-hi, -lo] u [lo, hi].
    double signed_uniform(double lo, double hi) {
        const double mag = uniform(lo, hi);
        return bernoulli(0.5) ? mag : -mag;
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace abslingam
