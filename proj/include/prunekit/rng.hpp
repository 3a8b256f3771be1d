#pragma once

#include <cstdint>
#include <random>

namespace prunekit {

// splitmix64; used to fan a master seed out into per-component seeds so
// each component stays reproducible on its own.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    // in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(gen_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace prunekit
