#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/posterior.hpp"
#include "plvm/rng.hpp"
#include "plvm/types.hpp"

namespace plvm {

/// Logit trajectory mu (T x V; row t is mu_t, row 0 the initial state),
/// shared step variance sigma2, and the slot t(d) of every sample.
struct UnigramState {
    MatrixXd mu;
    double sigma2 = 1;
    std::vector<Index> time_index;

    Index num_slots() const { return mu.rows(); }
};

/// One slot per distinct sampling time, in increasing time order.
struct TimeSlots {
    std::vector<double> times;
    std::vector<Index> slot_of;  // per sample
};

TimeSlots make_time_slots(const std::vector<double> &times);

struct UnigramSimulation {
    CountMatrix data;  // times are the slot numbers 0..T-1
    UnigramState truth;
};

/// mu_0 ~ N(0, s I), mu_t ~ N(mu_{t-1}, s I), x_d ~ Mult(N_d, S(mu_{t(d)})).
UnigramSimulation simulate_unigram(Index T, Index V, const std::vector<Index> &time_index, const CountVector &totals,
                                   double sigma0_sq, Rng &rng);

/// Inverse-gamma prior on sigma2 (shape a, scale b).
struct UnigramPrior {
    double a = 1;
    double b = 1;
};

/// Counts aggregated per slot: the likelihood depends on the data only
/// through C_t = sum_{t(d) = t} x_d and N_t = sum_v C_tv.
struct UnigramData {
    MatrixXd counts;   // T x V
    VectorXd totals;   // T
    double log_coefficient = 0;  // sum_d log multinomial coefficient

    UnigramData(const CountArray &x, const std::vector<Index> &time_index, Index T);
    Index slots() const { return counts.rows(); }
    Index features() const { return counts.cols(); }
};

/// Multinomial log-likelihood plus random-walk and inverse-gamma log priors.
double unigram_log_posterior(const MatrixXd &mu, double sigma2, const UnigramData &data,
                             const UnigramPrior &prior = {});
double unigram_log_posterior(const MatrixXd &mu, double sigma2, const CountArray &x,
                             const std::vector<Index> &time_index, const UnigramPrior &prior = {});

/// Log density on the unconstrained scale (mu, omega = log sigma2), i.e.
/// the log posterior plus the log-Jacobian omega, with its gradient.
struct UnigramGradient {
    double value = 0;
    MatrixXd mu;          // T x V
    double log_sigma2 = 0;
};

UnigramGradient unigram_grad(const MatrixXd &mu, double log_sigma2, const UnigramData &data,
                             const UnigramPrior &prior = {});

struct HmcOptions {
    long warmup = 1000;
    long draws = 1000;
    int chains = 4;
    int leapfrog_steps = 32;
    double target_accept = 0.8;
    double initial_step = 0.05;
    double step_jitter = 0.2;          // per-iteration step is eps * U(1 - j, 1 + j); breaks periodic orbits
    bool adapt_metric = true;          // windowed diagonal metric during warmup
    double divergence_warning = 0.05;  // fraction of kept iterations
    std::uint64_t seed = 0;
    int threads = 0;
};

struct AdviOptions {
    long iters = 10000;
    int grad_samples = 8;
    double eta = 0.05;
    long eval_every = 100;
    int elbo_samples = 100;
    double tol_rel_obj = 0.01;
    long draws = 1000;
    std::uint64_t seed = 0;
};

enum class UnigramMethod { hmc, advi };

struct UnigramFitOptions {
    UnigramPrior prior;
    HmcOptions hmc;
    AdviOptions advi;
};

/// Generic static-trajectory HMC with dual-averaging step size on a flat
/// parameter vector. `log_density` returns the value and fills the gradient.
struct HmcResult {
    MatrixXd draws;  // dim x kept
    double step_size = 0;
    double accept_rate = 0;
    long divergent = 0;
    VectorXd inverse_metric;
};

using LogDensityFn = std::function<double(const VectorXd &, VectorXd &)>;

HmcResult run_hmc(const LogDensityFn &log_density, VectorXd init, const HmcOptions &opts, Rng &rng);

/// Mean-field Gaussian ADVI on a flat parameter vector.
struct AdviResult {
    VectorXd mean;
    VectorXd log_sd;
    std::vector<double> elbo_trace;  // one entry per evaluation
    long iterations = 0;
    bool converged = false;
};

AdviResult run_advi(const LogDensityFn &log_density, VectorXd init, const AdviOptions &opts, Rng &rng);

/// Parameters "mu" (T x V) and "sigma2". Requires sample times; slots follow
/// make_time_slots. The HMC arm runs opts.hmc.chains chains; the ADVI arm
/// returns one chain of draws from the fitted factors.
PosteriorSamples fit_unigram(const CountMatrix &x, UnigramMethod method, const UnigramFitOptions &opts);

}  // namespace plvm
