#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cepred {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Child seed for an independent stream (per DIMM, per tree, per repeat...).
// Parallel and serial execution see the same seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    splitmix64(s);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(master, a), b);
}

// mt19937_64 with hand-rolled value mappings. std::*_distribution output is
// implementation-defined, so every mapping from raw bits lives here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, n); n == 0 returns 0
    std::uint64_t next_below(std::uint64_t n) { return n ? gen_() % n : 0; }

    std::uint32_t next_index(std::uint32_t n) {
        return static_cast<std::uint32_t>(next_below(n));
    }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // exponential inter-arrival gap for a Poisson process of the given rate
    double next_exponential(double rate) { return -std::log1p(-next_unit()) / rate; }

    bool next_bernoulli(double p) { return next_unit() < p; }

private:
    std::mt19937_64 gen_;
};

}  // namespace cepred
