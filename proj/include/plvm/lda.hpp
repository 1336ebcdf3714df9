#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/distributions.hpp"
#include "plvm/options.hpp"
#include "plvm/posterior.hpp"
#include "plvm/rng.hpp"
#include "plvm/types.hpp"

namespace plvm {

/// Dirichlet concentration, either symmetric (one value) or a full vector.
class DirichletPrior {
public:
    DirichletPrior(double value) : values_(VectorXd::Constant(1, value)) {}  // NOLINT: implicit on purpose
    explicit DirichletPrior(VectorXd values) : values_(std::move(values)) {}

    /// Concentration vector of length n; throws if sizes disagree or any value <= 0.
    VectorXd resolve(Index n) const;

private:
    VectorXd values_;
};

struct LdaParams {
    MatrixXd theta;  // D x K, rows on the simplex
    MatrixXd beta;   // V x K, columns on the simplex
    VectorXd alpha;  // K
    VectorXd gamma;  // V

    Index num_topics() const { return beta.cols(); }
};

struct LdaSimulation {
    CountMatrix data;
    LdaParams truth;
};

/// beta_k ~ Dir(gamma), theta_d ~ Dir(alpha), x_d ~ Mult(N_d, B theta_d).
LdaSimulation simulate_lda(const CountVector &totals, Index V, Index K, const DirichletPrior &alpha,
                           const DirichletPrior &gamma, Rng &rng);

/// Sum over samples of log Mult(x_d | N_d, B theta_d), multinomial
/// coefficient included. -inf when a positive count has zero probability.
double lda_log_likelihood(const CountMatrix &x, const LdaParams &params);
double lda_log_likelihood(const CountArray &x, const MatrixXd &theta, const MatrixXd &beta);

/// Collapsed Gibbs sampler over token topic labels with theta and B
/// integrated out. Labels are stored as per-(sample, feature) count vectors
/// of length K rather than per-token arrays; a sweep makes x_dv updates per
/// cell, each a decrement / sample / increment on a uniformly chosen token.
class LdaCollapsedGibbs {
public:
    LdaCollapsedGibbs(const CountArray &x, Index K, const VectorXd &alpha, const VectorXd &gamma, Rng rng);

    void sweep();

    const std::vector<Cell> &cells() const { return cells_; }
    /// Label counts of nonzero cell c, K entries starting at c * K.
    const std::vector<Count> &cell_labels() const { return cell_labels_; }
    const RowMatrix<Count> &doc_topic() const { return doc_topic_; }
    const RowMatrix<Count> &feature_topic() const { return feature_topic_; }

    /// theta_d ~ Dir(alpha + n_d.), one row per sample.
    MatrixXd draw_theta();
    /// beta_k ~ Dir(gamma + n_.k), one column per topic.
    MatrixXd draw_beta();

private:
    Index K_;
    VectorXd alpha_;
    VectorXd gamma_;
    double gamma_sum_;
    std::vector<Cell> cells_;
    std::vector<Count> cell_labels_;
    RowMatrix<Count> doc_topic_;
    RowMatrix<Count> feature_topic_;
    std::vector<Count> topic_totals_;
    std::vector<double> weights_;
    Rng rng_;
};

/// Runs `chains` independent collapsed-Gibbs chains (split streams of
/// opts.seed); after warmup every thin-th sweep emits one (theta, beta) draw.
PosteriorSamples fit_lda_gibbs(const CountMatrix &x, Index K, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const GibbsOptions &opts);

/// Mean-field fit of the token-form model: Dirichlet factors for every theta_d
/// and beta_k plus per-(d, v) topic responsibilities shared by the tokens of
/// that cell.
struct LdaVariationalFit {
    MatrixXd theta_concentration;  // D x K
    MatrixXd beta_concentration;   // V x K
    std::vector<Cell> cells;
    MatrixXd responsibilities;     // nnz x K
    std::vector<double> elbo_trace;  // entry 0 is the initialization
    int restart = 0;
    bool converged = false;

    MatrixXd theta_mean() const;
    MatrixXd beta_mean() const;
    double elbo() const { return elbo_trace.back(); }

    /// `draws` independent draws of (theta, beta) from the variational factors.
    PosteriorSamples sample(Index draws, Rng &rng) const;
};

LdaVariationalFit fit_lda_cavi(const CountMatrix &x, Index K, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const CaviOptions &opts);

/// ELBO of a variational state (exposed for testing).
double lda_elbo(const CountArray &x, const std::vector<Cell> &cells, const VectorXd &alpha, const VectorXd &gamma,
                const MatrixXd &theta_conc, const MatrixXd &beta_conc, const MatrixXd &resp);

// Dirichlet-multinomial mixture: one topic label per sample.

struct DmmParams {
    std::vector<Index> z;  // 0-based labels
    VectorXd theta;        // K mixing weights
    MatrixXd beta;         // V x K
    VectorXd gamma;        // V
};

struct DmmSimulation {
    CountMatrix data;
    DmmParams truth;
};

/// beta_k ~ Dir(gamma), z_d ~ Mult(1, theta), x_d ~ Mult(N_d, beta_{z_d}).
DmmSimulation simulate_dmm(const CountVector &totals, Index V, const ProbVector &theta, const DirichletPrior &gamma,
                           Rng &rng);

struct DmmFit {
    PosteriorSamples samples;  // z (D), theta (K), beta (V x K)
    MatrixXd membership;       // D x K, Rao-Blackwellized P(z_d = k | x), labels of chain 0
    MatrixXd co_membership;    // D x D, P(z_d = z_d' | x)
};

/// Collapsed Gibbs over sample labels with a Dir(1) prior on theta and
/// Dir(gamma) on each topic.
DmmFit fit_dmm_gibbs(const CountMatrix &x, Index K, const DirichletPrior &gamma, const GibbsOptions &opts);

}  // namespace plvm
