#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rbfdqn {

// Mixes a master seed with a stream name so that independent consumers
// (env, exploration, HER, PER, ...) never share a random sequence.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

// Thin wrapper over mt19937_64 with distribution code written out by hand,
// so sequences are identical across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
    Rng(std::uint64_t master, std::string_view stream) : engine_(derive_seed(master, stream)) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

} // namespace rbfdqn
