#include "plvm/lda.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "plvm/parallel.hpp"

namespace plvm {

VectorXd DirichletPrior::resolve(Index n) const
{
    VectorXd out;
    if (values_.size() == 1)
        out = VectorXd::Constant(n, values_[0]);
    else if (values_.size() == n)
        out = values_;
    else
        throw DomainError("Dirichlet prior has length " + std::to_string(values_.size()) + ", expected 1 or " +
                          std::to_string(n));
    if (!out.allFinite() || (out.array() <= 0).any()) throw DomainError("Dirichlet concentrations must be > 0");
    return out;
}

LdaSimulation simulate_lda(const CountVector &totals, Index V, Index K, const DirichletPrior &alpha,
                           const DirichletPrior &gamma, Rng &rng)
{
    const Index D = totals.size();
    if (D < 1 || V < 1 || K < 1) throw DomainError("simulate_lda: D, V and K must be >= 1");
    if ((totals.array() < 0).any()) throw DomainError("simulate_lda: totals must be >= 0");

    LdaParams truth;
    truth.alpha = alpha.resolve(K);
    truth.gamma = gamma.resolve(V);
    truth.beta.resize(V, K);
    for (Index k = 0; k < K; ++k) truth.beta.col(k) = sample_dirichlet(truth.gamma, rng);
    truth.theta.resize(D, K);
    for (Index d = 0; d < D; ++d) truth.theta.row(d) = sample_dirichlet(truth.alpha, rng).transpose();

    CountArray counts(D, V);
    for (Index d = 0; d < D; ++d) {
        VectorXd p = truth.beta * truth.theta.row(d).transpose();
        p /= p.sum();
        counts.row(d) = sample_multinomial_weights(totals[d], p, rng).transpose();
    }
    return {CountMatrix(std::move(counts)), std::move(truth)};
}

double lda_log_likelihood(const CountArray &x, const MatrixXd &theta, const MatrixXd &beta)
{
    if (theta.rows() != x.rows() || beta.rows() != x.cols() || theta.cols() != beta.cols())
        throw DomainError("lda_log_likelihood: dimension mismatch");
    double total = 0;
    for (Index d = 0; d < x.rows(); ++d) {
        const VectorXd p = beta * theta.row(d).transpose();
        const double ll = log_multinomial_pmf(x.row(d).transpose(), p);
        if (ll == -std::numeric_limits<double>::infinity()) return ll;
        total += ll;
    }
    return total;
}

double lda_log_likelihood(const CountMatrix &x, const LdaParams &params)
{
    return lda_log_likelihood(x.counts(), params.theta, params.beta);
}

// Collapsed Gibbs

LdaCollapsedGibbs::LdaCollapsedGibbs(const CountArray &x, Index K, const VectorXd &alpha, const VectorXd &gamma,
                                     Rng rng)
    : K_(K),
      alpha_(alpha),
      gamma_(gamma),
      gamma_sum_(gamma.sum()),
      cells_(nonzero_cells(x)),
      doc_topic_(RowMatrix<Count>::Zero(x.rows(), K)),
      feature_topic_(RowMatrix<Count>::Zero(x.cols(), K)),
      topic_totals_(static_cast<std::size_t>(K), 0),
      weights_(static_cast<std::size_t>(K), 0.0),
      rng_(std::move(rng))
{
    if (K < 1) throw ConfigError("LDA: K must be >= 1");
    if (alpha.size() != K || gamma.size() != x.cols()) throw DomainError("LDA: prior dimensions do not match data");
    cell_labels_.assign(cells_.size() * static_cast<std::size_t>(K), 0);
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        const auto &cell = cells_[c];
        for (Count n = 0; n < cell.count; ++n) {
            const auto k = static_cast<Index>(rng_() % static_cast<std::uint64_t>(K));
            ++cell_labels_[c * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)];
            ++doc_topic_(cell.doc, k);
            ++feature_topic_(cell.feature, k);
            ++topic_totals_[static_cast<std::size_t>(k)];
        }
    }
}

void LdaCollapsedGibbs::sweep()
{
    // Tokens in a cell are exchangeable, so each update picks one uniformly
    // at random (label k with probability n_k / x_dv) and resamples it from
    // its full conditional. That is a mixture of exact Gibbs updates, which
    // leaves the collapsed posterior invariant; removing tokens from fixed
    // old-label groups would not.
    const auto K = static_cast<std::size_t>(K_);
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        const auto &cell = cells_[c];
        Count *labels = cell_labels_.data() + c * K;
        Count *dt = doc_topic_.row(cell.doc).data();
        Count *ft = feature_topic_.row(cell.feature).data();
        const double g = gamma_[cell.feature];
        std::uniform_int_distribution<Count> pick(0, cell.count - 1);
        for (Count n = 0; n < cell.count; ++n) {
            std::size_t k_old = 0;
            if (K > 1) {
                Count r = pick(rng_);
                while (r >= labels[k_old]) r -= labels[k_old++];
            }
            --labels[k_old];
            --dt[k_old];
            --ft[k_old];
            --topic_totals_[k_old];
            double total = 0;
            for (std::size_t k = 0; k < K; ++k) {
                const double w = (static_cast<double>(dt[k]) + alpha_[static_cast<Index>(k)]) *
                                 (static_cast<double>(ft[k]) + g) /
                                 (static_cast<double>(topic_totals_[k]) + gamma_sum_);
                total += w;
                weights_[k] = total;
            }
            const double u = rng_.uniform() * total;
            std::size_t k_new = 0;
            while (k_new + 1 < K && weights_[k_new] <= u) ++k_new;
            ++labels[k_new];
            ++dt[k_new];
            ++ft[k_new];
            ++topic_totals_[k_new];
        }
    }
}

MatrixXd LdaCollapsedGibbs::draw_theta()
{
    MatrixXd theta(doc_topic_.rows(), K_);
    for (Index d = 0; d < doc_topic_.rows(); ++d)
        theta.row(d) = sample_dirichlet(alpha_ + doc_topic_.row(d).transpose().cast<double>(), rng_).transpose();
    return theta;
}

MatrixXd LdaCollapsedGibbs::draw_beta()
{
    MatrixXd beta(feature_topic_.rows(), K_);
    for (Index k = 0; k < K_; ++k)
        beta.col(k) = sample_dirichlet(gamma_ + feature_topic_.col(k).cast<double>(), rng_);
    return beta;
}

namespace {

Index retained_draws(const GibbsOptions &opts)
{
    if (opts.chains < 1) throw ConfigError("Gibbs: chains must be >= 1");
    if (opts.thin < 1) throw ConfigError("Gibbs: thin must be >= 1");
    if (opts.warmup < 0 || opts.iters <= opts.warmup) throw ConfigError("Gibbs: iters must exceed warmup");
    return static_cast<Index>((opts.iters - opts.warmup) / opts.thin);
}

void fill_gibbs_metadata(PosteriorSamples &s, const char *model, const GibbsOptions &opts)
{
    s.metadata.model = model;
    s.metadata.method = "gibbs";
    s.metadata.seed = opts.seed;
    s.metadata.warmup = opts.warmup;
    s.metadata.iters = opts.iters;
    s.metadata.thin = opts.thin;
}

}  // namespace

PosteriorSamples fit_lda_gibbs(const CountMatrix &x, Index K, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const GibbsOptions &opts)
{
    if (K < 1) throw ConfigError("fit_lda_gibbs: K must be >= 1");
    const Count tokens = x.counts().sum();
    if (K > tokens) throw ConfigError("fit_lda_gibbs: K exceeds the total token count");
    const Index draws = retained_draws(opts);
    const VectorXd a = alpha.resolve(K);
    const VectorXd g = gamma.resolve(x.num_features());

    PosteriorSamples s(opts.chains, draws);
    fill_gibbs_metadata(s, "lda", opts);
    s.add_parameter("theta", 2, x.num_samples(), K);
    s.add_parameter("beta", 2, x.num_features(), K);

    const Rng root(opts.seed);
    parallel_for(opts.chains, opts.threads, [&](Index chain) {
        LdaCollapsedGibbs sampler(x.counts(), K, a, g, root.split(static_cast<std::uint64_t>(chain)));
        Index kept = 0;
        for (long it = 0; it < opts.iters && kept < draws; ++it) {
            sampler.sweep();
            if (it >= opts.warmup && (it - opts.warmup + 1) % opts.thin == 0) {
                s.set_draw("theta", chain, kept, sampler.draw_theta());
                s.set_draw("beta", chain, kept, sampler.draw_beta());
                ++kept;
            }
        }
    });
    return s;
}

// Coordinate-ascent VB

MatrixXd LdaVariationalFit::theta_mean() const
{
    return theta_concentration.array().colwise() / theta_concentration.rowwise().sum().array();
}

MatrixXd LdaVariationalFit::beta_mean() const
{
    return beta_concentration.array().rowwise() / beta_concentration.colwise().sum().array();
}

PosteriorSamples LdaVariationalFit::sample(Index draws, Rng &rng) const
{
    PosteriorSamples s(1, draws);
    s.metadata.model = "lda";
    s.metadata.method = "vb";
    s.add_parameter("theta", 2, theta_concentration.rows(), theta_concentration.cols());
    s.add_parameter("beta", 2, beta_concentration.rows(), beta_concentration.cols());
    MatrixXd theta(theta_concentration.rows(), theta_concentration.cols());
    MatrixXd beta(beta_concentration.rows(), beta_concentration.cols());
    for (Index t = 0; t < draws; ++t) {
        for (Index d = 0; d < theta.rows(); ++d)
            theta.row(d) = sample_dirichlet(theta_concentration.row(d).transpose(), rng).transpose();
        for (Index k = 0; k < beta.cols(); ++k) beta.col(k) = sample_dirichlet(beta_concentration.col(k), rng);
        s.set_draw("theta", 0, t, theta);
        s.set_draw("beta", 0, t, beta);
    }
    return s;
}

namespace {

MatrixXd expected_log_rows(const MatrixXd &conc)
{
    MatrixXd out(conc.rows(), conc.cols());
    for (Index r = 0; r < conc.rows(); ++r) out.row(r) = dirichlet_expected_log(conc.row(r).transpose()).transpose();
    return out;
}

MatrixXd expected_log_cols(const MatrixXd &conc)
{
    MatrixXd out(conc.rows(), conc.cols());
    for (Index k = 0; k < conc.cols(); ++k) out.col(k) = dirichlet_expected_log(conc.col(k));
    return out;
}

/// log Dir normalizer plus (a - 1) E[log x] for one factor.
long double dirichlet_cross(const VectorXd &prior, const VectorXd &elog)
{
    long double out = std::lgamma(prior.sum());
    for (Index i = 0; i < prior.size(); ++i)
        out += -static_cast<long double>(std::lgamma(prior[i])) + (prior[i] - 1.0) * elog[i];
    return out;
}

}  // namespace

double lda_elbo(const CountArray &x, const std::vector<Cell> &cells, const VectorXd &alpha, const VectorXd &gamma,
                const MatrixXd &theta_conc, const MatrixXd &beta_conc, const MatrixXd &resp)
{
    const MatrixXd elog_theta = expected_log_rows(theta_conc);
    const MatrixXd elog_beta = expected_log_cols(beta_conc);
    long double total = 0;
    for (Index d = 0; d < theta_conc.rows(); ++d) {
        total += dirichlet_cross(alpha, elog_theta.row(d).transpose());
        total -= dirichlet_cross(theta_conc.row(d).transpose(), elog_theta.row(d).transpose());
    }
    for (Index k = 0; k < beta_conc.cols(); ++k) {
        total += dirichlet_cross(gamma, elog_beta.col(k));
        total -= dirichlet_cross(beta_conc.col(k), elog_beta.col(k));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto &cell = cells[c];
        long double s = 0;
        for (Index k = 0; k < resp.cols(); ++k) {
            const double r = resp(static_cast<Index>(c), k);
            if (r <= 0) continue;
            s += r * (elog_theta(cell.doc, k) + elog_beta(cell.feature, k) - std::log(r));
        }
        total += static_cast<long double>(cell.count) * s - log_factorial(cell.count);
    }
    for (Index d = 0; d < x.rows(); ++d) total += log_factorial(x.row(d).sum());
    return static_cast<double>(total);
}

namespace {

LdaVariationalFit cavi_single(const CountArray &x, Index K, const VectorXd &alpha, const VectorXd &gamma,
                              const CaviOptions &opts, Rng rng, int restart)
{
    LdaVariationalFit fit;
    fit.restart = restart;
    fit.cells = nonzero_cells(x);
    const auto nnz = static_cast<Index>(fit.cells.size());
    const Index D = x.rows();
    const Index V = x.cols();

    fit.responsibilities.resize(nnz, K);
    VectorXd logits(K);
    for (Index c = 0; c < nnz; ++c) {
        for (Index k = 0; k < K; ++k) logits[k] = sample_normal(0.0, opts.init_noise * opts.init_noise, rng);
        fit.responsibilities.row(c) = softmax(logits).transpose();
    }

    auto update_factors = [&] {
        fit.theta_concentration = alpha.transpose().replicate(D, 1);
        fit.beta_concentration = gamma.replicate(1, K);
        for (Index c = 0; c < nnz; ++c) {
            const auto &cell = fit.cells[static_cast<std::size_t>(c)];
            const double n = static_cast<double>(cell.count);
            fit.theta_concentration.row(cell.doc) += n * fit.responsibilities.row(c);
            fit.beta_concentration.row(cell.feature) += n * fit.responsibilities.row(c);
        }
    };
    auto elbo = [&] {
        const double e = lda_elbo(x, fit.cells, alpha, gamma, fit.theta_concentration, fit.beta_concentration,
                                  fit.responsibilities);
        if (!std::isfinite(e))
            throw NumericalError("LDA CAVI: non-finite ELBO at iteration " + std::to_string(fit.elbo_trace.size()),
                                 static_cast<long>(fit.elbo_trace.size()));
        return e;
    };

    update_factors();
    fit.elbo_trace.push_back(elbo());

    for (long it = 0; it < opts.max_iters; ++it) {
        const MatrixXd elog_theta = expected_log_rows(fit.theta_concentration);
        const MatrixXd elog_beta = expected_log_cols(fit.beta_concentration);
        for (Index c = 0; c < nnz; ++c) {
            const auto &cell = fit.cells[static_cast<std::size_t>(c)];
            logits = elog_theta.row(cell.doc).transpose() + elog_beta.row(cell.feature).transpose();
            fit.responsibilities.row(c) = softmax(logits).transpose();
        }
        // theta and beta factors depend on the responsibilities only, so one
        // pass sets both to their coordinate optima.
        update_factors();
        const double prev = fit.elbo_trace.back();
        const double cur = elbo();
        fit.elbo_trace.push_back(cur);
        if (std::abs(cur - prev) <= opts.tol * std::abs(prev)) {
            fit.converged = true;
            break;
        }
    }
    (void)V;
    return fit;
}

}  // namespace

LdaVariationalFit fit_lda_cavi(const CountMatrix &x, Index K, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const CaviOptions &opts)
{
    if (K < 1) throw ConfigError("fit_lda_cavi: K must be >= 1");
    if (opts.restarts < 1) throw ConfigError("fit_lda_cavi: restarts must be >= 1");
    if (opts.max_iters < 1) throw ConfigError("fit_lda_cavi: max_iters must be >= 1");
    const VectorXd a = alpha.resolve(K);
    const VectorXd g = gamma.resolve(x.num_features());
    std::vector<LdaVariationalFit> fits(static_cast<std::size_t>(opts.restarts));
    const Rng root(opts.seed);
    parallel_for(opts.restarts, opts.threads, [&](Index r) {
        fits[static_cast<std::size_t>(r)] =
            cavi_single(x.counts(), K, a, g, opts, root.split(static_cast<std::uint64_t>(r)), static_cast<int>(r));
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < fits.size(); ++r)
        if (fits[r].elbo() > fits[best].elbo()) best = r;
    return std::move(fits[best]);
}

}  // namespace plvm
