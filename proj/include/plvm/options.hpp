#pragma once

#include <cstdint>

namespace plvm {

/// Shared by the Gibbs samplers. iters counts all sweeps, warmup included;
/// (iters - warmup) / thin draws are kept per chain.
struct GibbsOptions {
    long iters = 2000;
    long warmup = 1000;
    long thin = 1;
    int chains = 4;
    std::uint64_t seed = 0;
    int threads = 0;
};

/// Shared by the coordinate-ascent fits. Restart r uses stream r of seed.
struct CaviOptions {
    long max_iters = 500;
    double tol = 1e-6;
    int restarts = 3;
    std::uint64_t seed = 0;
    double init_noise = 0.5;  // sd of the Gaussian logits for initial responsibilities
    int threads = 0;
};

}  // namespace plvm
