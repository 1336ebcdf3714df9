#include "plvm/rng.hpp"

#include <array>

namespace plvm {

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream)
{
    const std::array<std::uint32_t, 4> words{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(seeded_engine(seed, stream))
{
}

Rng Rng::split(std::uint64_t child) const
{
    return Rng(seed_, mix64(stream_ ^ mix64(child + 1)));
}

}  // namespace plvm
