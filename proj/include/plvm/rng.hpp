#pragma once

#include <cstdint>
#include <random>

namespace plvm {

/// Seeded, splittable random source.
///
/// A stream is identified by (seed, stream id). Identical pairs produce
/// identical sequences; split() derives child streams so that parallel chains
/// and bootstrap replicates each get their own generator from one user seed.
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }

    result_type operator()() { return engine_(); }

    /// Uniform draw on [0, 1).
    double uniform() { return std::generate_canonical<double, 53>(engine_); }

    /// Child stream number `child` of this stream. Does not advance *this.
    Rng split(std::uint64_t child) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace plvm
