#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <utility>

namespace oled::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Per-sample stream derivation: all randomness in the toolkit flows from a
// root seed through derive(root, index).
inline std::uint64_t derive(std::uint64_t root, std::uint64_t index) {
    return splitmix64(splitmix64(root) ^ splitmix64(index * 0xD1342543DE82EF95ULL + 1));
}

// Deterministic random stream. Uniform and Gaussian draws are implemented
// explicitly on top of mt19937_64 so sequences are identical across standard
// libraries (std::*_distribution is implementation-defined).
class Stream {
public:
    explicit Stream(std::uint64_t seed) : eng_(seed) {}
    Stream(std::uint64_t root, std::uint64_t index) : eng_(derive(root, index)) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive range. Modulo bias is ~2^-64 per draw; irrelevant here.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // Box-Muller; consumes exactly two u64 per pair.
    std::pair<double, double> gaussian_pair() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * M_PI * u2;
        return {r * std::cos(t), r * std::sin(t)};
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        auto [a, b] = gaussian_pair();
        spare_ = b;
        have_spare_ = true;
        return a;
    }

    // FNV-1a over the serialized engine state; checkpoint provenance only.
    std::uint64_t state_digest() const {
        std::ostringstream os;
        os << eng_;
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : os.str()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace oled::rng
