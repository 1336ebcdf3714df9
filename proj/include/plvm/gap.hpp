#pragma once

#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/distributions.hpp"
#include "plvm/options.hpp"
#include "plvm/posterior.hpp"
#include "plvm/rng.hpp"
#include "plvm/types.hpp"

namespace plvm {

/// Gamma hyperparameters, shape-rate: theta_dk ~ Gamma(a0, b0), beta_vk ~ Gamma(c0, d0).
struct GapHyper {
    double a0 = 1;
    double b0 = 1;
    double c0 = 1;
    double d0 = 1;

    void validate() const;
};

/// a0 = c0 = d0 = 1 and b0 = V K / target, so that
/// E[N_d] = V K (a0 / b0)(c0 / d0) equals the target exactly.
GapHyper hyperparams_for_expected_total(double target, Index K, Index V);

struct GapParams {
    MatrixXd theta;  // D x K, >= 0
    MatrixXd beta;   // V x K, >= 0
    GapHyper hyper;
    double p0 = 0;   // structural-zero probability, in [0, 1)
};

/// true where an entry was structurally zeroed.
using ZeroMask = RowMatrix<bool>;

struct GapSimulation {
    CountMatrix data;
    GapParams truth;
    ZeroMask mask;
};

/// theta, beta entrywise gamma; x_dv ~ Poi((Theta B^T)_dv); each entry then
/// zeroed independently with probability p0.
GapSimulation simulate_gap(Index D, Index V, Index K, const GapHyper &hyper, double p0, Rng &rng);

enum class ZeroInflation { none, known_p0 };

/// none: sum of log Poi(x_dv; lambda_dv). known_p0: zeros contribute
/// log(p0 + (1 - p0) exp(-lambda)), positives log(1 - p0) + log Poi.
/// -inf when x_dv > 0 and lambda_dv = 0. ConfigError for mode none with p0 > 0.
double gap_log_likelihood(const CountArray &x, const MatrixXd &theta, const MatrixXd &beta, ZeroInflation mode,
                          double p0);
double gap_log_likelihood(const CountMatrix &x, const GapParams &params, ZeroInflation mode);

/// Augmented Gibbs sampler. Each positive cell carries latent topic counts
/// s_dv. ~ Mult(x_dv, theta_d. * beta_v.); with p0 > 0 every zero cell carries
/// a structural-zero indicator, and structural cells are left out of the
/// gamma rate sums. A sweep updates latents, then theta, then beta.
class GapGibbs {
public:
    GapGibbs(const CountArray &x, Index K, const GapHyper &hyper, double p0, Rng rng);

    void sweep();
    void sample_latent();
    void sample_theta();
    void sample_beta();

    const MatrixXd &theta() const { return theta_; }
    const MatrixXd &beta() const { return beta_; }
    void set_theta(const MatrixXd &theta) { theta_ = theta; }
    void set_beta(const MatrixXd &beta) { beta_ = beta; }
    /// Structural-zero indicator per zero cell, same order as zero_cells().
    const std::vector<char> &structural() const { return structural_; }
    const std::vector<Cell> &zero_cells() const { return zero_cells_; }

private:
    Index K_;
    GapHyper hyper_;
    double p0_;
    std::vector<Cell> cells_;
    std::vector<Cell> zero_cells_;
    std::vector<char> structural_;
    MatrixXd doc_topic_;      // D x K, sum_v s_dvk
    MatrixXd feature_topic_;  // V x K, sum_d s_dvk
    MatrixXd theta_;
    MatrixXd beta_;
    Rng rng_;
};

/// Chains on split streams of opts.seed; parameters "theta" and "beta".
PosteriorSamples fit_gap_gibbs(const CountMatrix &x, Index K, const GapHyper &hyper, double p0,
                               const GibbsOptions &opts);

/// Mean-field fit: gamma factors for theta and beta, multinomial factors
/// for the latent counts of positive cells, Bernoulli factors for
/// structural zeros (all zero when p0 = 0).
struct GapVariationalFit {
    MatrixXd theta_shape, theta_rate;  // D x K
    MatrixXd beta_shape, beta_rate;    // V x K
    std::vector<Cell> cells;
    MatrixXd responsibilities;         // nnz x K
    std::vector<Cell> zero_cells;
    VectorXd structural_prob;          // one per zero cell
    std::vector<double> elbo_trace;    // entry 0 is the initialization
    int restart = 0;
    bool converged = false;

    MatrixXd theta_mean() const { return theta_shape.cwiseQuotient(theta_rate); }
    MatrixXd beta_mean() const { return beta_shape.cwiseQuotient(beta_rate); }
    double elbo() const { return elbo_trace.back(); }
    PosteriorSamples sample(Index draws, Rng &rng) const;
};

GapVariationalFit fit_gap_cavi(const CountMatrix &x, Index K, const GapHyper &hyper, double p0,
                               const CaviOptions &opts);

}  // namespace plvm
