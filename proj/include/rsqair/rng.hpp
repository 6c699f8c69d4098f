#ifndef RSQAIR_RNG_HPP
#define RSQAIR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace rsqair {

// splitmix64 finalizer; the basis of every random stream in the project
constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Counter-based stream: state is just (key, counter), so streams are cheap
// to fork, serialize, and replay. Every consumer derives its stream from a
// master seed plus a purpose tag and optional indices; two streams with
// different tags never overlap in practice.
class Rng {
public:
    explicit Rng(uint64_t key, uint64_t counter = 0) : key_(key), counter_(counter) {}

    static Rng derive(uint64_t master, std::string_view tag,
                      uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
        uint64_t k = mix64(master ^ fnv1a64(tag));
        k = mix64(k ^ (a * 0x9e3779b97f4a7c15ull));
        k = mix64(k ^ (b * 0xc2b2ae3d27d4eb4full));
        k = mix64(k ^ (c * 0x165667b19e3779f9ull));
        return Rng(k);
    }

    uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++ * 0xd6e8feb86659fd93ull)); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // (0, 1]
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Box-Muller, two counter increments per draw, no cached spare
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // standard logistic noise, used for concrete/Gumbel-sigmoid sampling
    double logistic() {
        double u = uniform();
        u = std::fmin(std::fmax(u, 1e-12), 1.0 - 1e-12);
        return std::log(u) - std::log1p(-u);
    }

    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t key_;
    uint64_t counter_;
};

}  // namespace rsqair

#endif
