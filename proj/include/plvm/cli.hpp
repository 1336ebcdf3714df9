#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plvm/types.hpp"

namespace plvm {

/// Fully resolved run configuration. Optional members are model specific.
struct RunConfig {
    std::string model;   // dmm | lda | gap | zgap | unigram
    std::string method;  // gibbs | vb | bootstrap | hmc | advi
    Index K = 0;
    std::uint64_t seed = 0;
    int threads = 0;

    // Dirichlet models
    std::optional<double> alpha;
    std::optional<double> gamma;
    // GaP: either explicit hyperparameters or an expected per-sample total
    std::optional<double> a0, b0, c0, d0;
    std::optional<double> expected_total;
    double p0 = 0;
    // Unigram inverse-gamma prior
    double prior_a = 1;
    double prior_b = 1;

    // MCMC
    long iters = 2000;
    long warmup = 1000;
    long thin = 1;
    int chains = 4;
    int leapfrog_steps = 32;
    double target_accept = 0.8;
    // Variational
    long max_iters = 500;
    double tol = 1e-6;
    int restarts = 3;
    long advi_iters = 10000;
    double eta = 0.05;
    int grad_samples = 8;
    long draws = 1000;  // draws from a fitted variational family
    int replicates = 50;  // bootstrap

    // simulate
    Index D = 20;
    Index V = 325;
    double N = 1625;
    Index T = 10;
    double sigma0_sq = 1;

    // paths
    std::string counts;
    std::string sample_meta;
    std::string taxonomy;
    std::string out;
};

/// Which fields a subcommand needs; drives required-field validation.
enum class ConfigUse { simulate, fit };

/// Merges a JSON config object (may be empty) with flag overrides (a JSON
/// object of the same keys). Flags win; each conflict is appended to
/// `conflicts`. When no seed is given anywhere, PLVM_SEED is used. Unknown
/// keys, wrong types, missing fields and invalid values are all collected
/// and reported in one ConfigError.
RunConfig parse_config(const std::string &file_json, const std::string &flags_json, ConfigUse use,
                       std::vector<std::string> *conflicts = nullptr);

/// The resolved configuration as a JSON object (the format parse_config reads).
std::string config_to_json(const RunConfig &config);

/// Runs the command line; returns 0 on success, 1 on validation errors,
/// 2 on numerical failure.
int run_cli(int argc, const char *const *argv);

}  // namespace plvm
