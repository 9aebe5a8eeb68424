#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace owmmd {

/// SplitMix64 finalizer (Steele, Lea & Flood). Constants:
///   x += 0x9E3779B97F4A7C15
///   x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
///   x = (x ^ (x >> 27)) * 0x94D049BB133111EB
///   x ^= x >> 31
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derive a task seed from a master seed and a path of integer tags, e.g.
/// (experiment id, repeat index, stage tag). Each tag is folded in with one
/// SplitMix64 round, so seeds depend only on the path and never on thread
/// scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(master);
    for (const std::uint64_t tag : path) {
        h = splitmix64(h ^ splitmix64(tag + 0x632BE59BD9B4E019ULL));
    }
    return h;
}

/// Stage tags used when deriving seeds; fixed so reruns stay reproducible.
enum class Stage : std::uint64_t {
    Observed = 1,
    Simulated = 2,
    Points = 3,
    MdeTrial = 10,
    MdeSelect = 11,
    MdeStep = 12,
    GofFit = 20,
    GofBootstrapData = 21,
    GofBootstrapFit = 22,
    GofBootstrapDelta = 23,
    GofStatistic = 24,
    AbcPrior = 30,
    AbcCandidate = 31,
};

constexpr std::uint64_t tag(Stage s) noexcept { return static_cast<std::uint64_t>(s); }

/// Owns one Mersenne Twister. Uniforms use the top 53 bits; normals go through
/// the inverse CDF so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1).
    double uniform_open() {
        double u = 0.0;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace owmmd
