#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hsi {

// SplitMix64 (Steele, Lea, Flood 2014). Every random choice in the library
// flows from one 64-bit seed through this generator, so two runs with the
// same seed agree bit for bit, and so do reimplementations in other
// languages that follow the same recipe:
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
//   z = (z ^ z>>27) * 0x94D049BB133111EB
//   output = z ^ z>>31
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1); never returns an endpoint, safe under log().
    double next_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform in [0, n). Modulo bias is < n / 2^64, irrelevant at our sizes.
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller; two uniforms consumed per draw.
    double next_gaussian() {
        const double u1 = next_open();
        const double u2 = next_open();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Fisher-Yates, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Derives an independent per-stage seed from a master seed and a stage tag:
// FNV-1a over the tag, folded into the master state, then one SplitMix64
// scramble. Stage seeds depend only on (master, tag), never on call order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : tag) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001B3ULL;
    }
    Rng mix(master ^ h);
    return mix.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
    return derive_seed(derive_seed(master, tag), std::to_string(index));
}

}  // namespace hsi
