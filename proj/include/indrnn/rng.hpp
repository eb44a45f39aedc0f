#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "indrnn/errors.hpp"
#include "indrnn/tensor.hpp"

namespace indrnn {

// Deterministic, portable random stream.
//
// The engine is std::mt19937_64, whose output sequence is fully specified by
// the C++ standard, so equal seeds give bitwise-equal streams on every
// platform. All value transforms (uniform doubles, Box-Muller normals,
// unbiased bounded integers) are implemented here rather than with the
// standard <random> distributions, which are *not* specified bit-exactly.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Independent child stream derived from (parent seed, index) via
    // SplitMix64. Used to split work across workers deterministically.
    SeededRng child(std::uint64_t index) const {
        return SeededRng(splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * (index + 1)));
    }

    // Uniform in the open interval (0,1): 53-bit mantissa offset by half an ulp.
    double uniform01() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) {
        if (!(lo < hi)) throw ConfigError("uniform: require lo < hi, got [" + std::to_string(lo) + ", " +
                                          std::to_string(hi) + ")");
        return lo + uniform01() * (hi - lo);
    }

    // Box-Muller; one spare value cached.
    double normal(double mean, double std) {
        if (std < 0.0) throw ConfigError("normal: require std >= 0, got " + std::to_string(std));
        if (std == 0.0) return mean;
        if (have_spare_) {
            have_spare_ = false;
            return mean + std * spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + std * r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ConfigError("uniform_int: n must be positive");
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        std::uint64_t r;
        do {
            r = engine_();
        } while (r < threshold);
        return r % n;
    }

    // Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    template <class S = double>
    TensorT<S> sample_uniform(Shape shape, double lo, double hi) {
        TensorT<S> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(uniform(lo, hi));
        return t;
    }

    template <class S = double>
    TensorT<S> sample_normal(Shape shape, double mean, double std) {
        TensorT<S> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(normal(mean, std));
        return t;
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace indrnn
