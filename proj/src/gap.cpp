#include "plvm/gap.hpp"

#include <cmath>
#include <limits>

#include "plvm/parallel.hpp"

namespace plvm {

void GapHyper::validate() const
{
    for (double h : {a0, b0, c0, d0})
        if (!(h > 0) || !std::isfinite(h)) throw DomainError("GaP hyperparameters must be finite and > 0");
}

GapHyper hyperparams_for_expected_total(double target, Index K, Index V)
{
    if (!(target > 0) || !std::isfinite(target)) throw DomainError("expected total must be > 0");
    if (K < 1 || V < 1) throw DomainError("K and V must be >= 1");
    GapHyper h;
    h.b0 = static_cast<double>(V) * static_cast<double>(K) / target;
    return h;
}

namespace {

void check_p0(double p0)
{
    if (!(p0 >= 0 && p0 < 1)) throw DomainError("p0 must lie in [0, 1)");
}

}  // namespace

GapSimulation simulate_gap(Index D, Index V, Index K, const GapHyper &hyper, double p0, Rng &rng)
{
    if (D < 1 || V < 1 || K < 1) throw DomainError("simulate_gap: D, V and K must be >= 1");
    hyper.validate();
    check_p0(p0);
    GapParams truth;
    truth.hyper = hyper;
    truth.p0 = p0;
    truth.theta.resize(D, K);
    truth.beta.resize(V, K);
    for (Index k = 0; k < K; ++k)
        for (Index d = 0; d < D; ++d) truth.theta(d, k) = sample_gamma(hyper.a0, hyper.b0, rng);
    for (Index k = 0; k < K; ++k)
        for (Index v = 0; v < V; ++v) truth.beta(v, k) = sample_gamma(hyper.c0, hyper.d0, rng);

    const MatrixXd rate = truth.theta * truth.beta.transpose();
    CountArray counts(D, V);
    ZeroMask mask = ZeroMask::Constant(D, V, false);
    for (Index d = 0; d < D; ++d)
        for (Index v = 0; v < V; ++v) {
            counts(d, v) = sample_poisson(rate(d, v), rng);
            if (p0 > 0 && rng.uniform() < p0) {
                mask(d, v) = true;
                counts(d, v) = 0;
            }
        }
    return {CountMatrix(std::move(counts)), std::move(truth), std::move(mask)};
}

double gap_log_likelihood(const CountArray &x, const MatrixXd &theta, const MatrixXd &beta, ZeroInflation mode,
                          double p0)
{
    if (theta.rows() != x.rows() || beta.rows() != x.cols() || theta.cols() != beta.cols())
        throw DomainError("gap_log_likelihood: dimension mismatch");
    if (mode == ZeroInflation::none && p0 > 0)
        throw ConfigError("gap_log_likelihood: p0 > 0 requires the zero-inflated likelihood");
    if (mode == ZeroInflation::known_p0) check_p0(p0);
    const bool inflated = mode == ZeroInflation::known_p0 && p0 > 0;
    const double log_keep = std::log1p(-p0);
    const MatrixXd rate = theta * beta.transpose();
    long double total = 0;
    for (Index d = 0; d < x.rows(); ++d)
        for (Index v = 0; v < x.cols(); ++v) {
            const double lambda = rate(d, v);
            const Count n = x(d, v);
            if (n == 0 && inflated) {
                total += std::log(p0 + (1 - p0) * std::exp(-lambda));
                continue;
            }
            const double lp = log_poisson_pmf(n, lambda);
            if (lp == -std::numeric_limits<double>::infinity()) return lp;
            total += lp + (inflated ? log_keep : 0.0);
        }
    return static_cast<double>(total);
}

double gap_log_likelihood(const CountMatrix &x, const GapParams &params, ZeroInflation mode)
{
    return gap_log_likelihood(x.counts(), params.theta, params.beta, mode, params.p0);
}

// Gibbs

GapGibbs::GapGibbs(const CountArray &x, Index K, const GapHyper &hyper, double p0, Rng rng)
    : K_(K), hyper_(hyper), p0_(p0), rng_(std::move(rng))
{
    if (K < 1) throw ConfigError("GaP: K must be >= 1");
    hyper.validate();
    check_p0(p0);
    cells_ = nonzero_cells(x);
    if (p0 > 0) {
        for (Index d = 0; d < x.rows(); ++d)
            for (Index v = 0; v < x.cols(); ++v)
                if (x(d, v) == 0) zero_cells_.push_back({d, v, 0});
        structural_.assign(zero_cells_.size(), 0);
    }
    doc_topic_ = MatrixXd::Zero(x.rows(), K);
    feature_topic_ = MatrixXd::Zero(x.cols(), K);
    theta_.resize(x.rows(), K);
    beta_.resize(x.cols(), K);
    for (Index k = 0; k < K; ++k) {
        for (Index d = 0; d < x.rows(); ++d) theta_(d, k) = sample_gamma(hyper.a0, hyper.b0, rng_);
        for (Index v = 0; v < x.cols(); ++v) beta_(v, k) = sample_gamma(hyper.c0, hyper.d0, rng_);
    }
}

void GapGibbs::sample_latent()
{
    doc_topic_.setZero();
    feature_topic_.setZero();
    VectorXd w(K_);
    for (const auto &c : cells_) {
        w = theta_.row(c.doc).transpose().cwiseProduct(beta_.row(c.feature).transpose());
        if (!(w.sum() > 0)) w.setOnes();
        const CountVector s = sample_multinomial_weights(c.count, w, rng_);
        for (Index k = 0; k < K_; ++k) {
            doc_topic_(c.doc, k) += static_cast<double>(s[k]);
            feature_topic_(c.feature, k) += static_cast<double>(s[k]);
        }
    }
    for (std::size_t i = 0; i < zero_cells_.size(); ++i) {
        const auto &c = zero_cells_[i];
        const double lambda = theta_.row(c.doc).dot(beta_.row(c.feature));
        const double pi = p0_ / (p0_ + (1 - p0_) * std::exp(-lambda));
        structural_[i] = rng_.uniform() < pi ? 1 : 0;
    }
}

void GapGibbs::sample_theta()
{
    MatrixXd rate = (hyper_.b0 + beta_.colwise().sum().array()).replicate(theta_.rows(), 1).matrix();
    for (std::size_t i = 0; i < zero_cells_.size(); ++i)
        if (structural_[i]) rate.row(zero_cells_[i].doc) -= beta_.row(zero_cells_[i].feature);
    for (Index d = 0; d < theta_.rows(); ++d)
        for (Index k = 0; k < K_; ++k)
            theta_(d, k) = sample_gamma(hyper_.a0 + doc_topic_(d, k), std::max(rate(d, k), hyper_.b0), rng_);
}

void GapGibbs::sample_beta()
{
    MatrixXd rate = (hyper_.d0 + theta_.colwise().sum().array()).replicate(beta_.rows(), 1).matrix();
    for (std::size_t i = 0; i < zero_cells_.size(); ++i)
        if (structural_[i]) rate.row(zero_cells_[i].feature) -= theta_.row(zero_cells_[i].doc);
    for (Index v = 0; v < beta_.rows(); ++v)
        for (Index k = 0; k < K_; ++k)
            beta_(v, k) = sample_gamma(hyper_.c0 + feature_topic_(v, k), std::max(rate(v, k), hyper_.d0), rng_);
}

void GapGibbs::sweep()
{
    sample_latent();
    sample_theta();
    sample_beta();
}

PosteriorSamples fit_gap_gibbs(const CountMatrix &x, Index K, const GapHyper &hyper, double p0,
                               const GibbsOptions &opts)
{
    if (K < 1) throw ConfigError("fit_gap_gibbs: K must be >= 1");
    if (K > x.counts().sum()) throw ConfigError("fit_gap_gibbs: K exceeds the total token count");
    if (opts.chains < 1) throw ConfigError("Gibbs: chains must be >= 1");
    if (opts.thin < 1) throw ConfigError("Gibbs: thin must be >= 1");
    if (opts.warmup < 0 || opts.iters <= opts.warmup) throw ConfigError("Gibbs: iters must exceed warmup");
    const auto draws = static_cast<Index>((opts.iters - opts.warmup) / opts.thin);

    PosteriorSamples s(opts.chains, draws);
    s.metadata.model = p0 > 0 ? "zgap" : "gap";
    s.metadata.method = "gibbs";
    s.metadata.seed = opts.seed;
    s.metadata.warmup = opts.warmup;
    s.metadata.iters = opts.iters;
    s.metadata.thin = opts.thin;
    s.add_parameter("theta", 2, x.num_samples(), K);
    s.add_parameter("beta", 2, x.num_features(), K);

    const Rng root(opts.seed);
    parallel_for(opts.chains, opts.threads, [&](Index chain) {
        GapGibbs sampler(x.counts(), K, hyper, p0, root.split(static_cast<std::uint64_t>(chain)));
        Index kept = 0;
        for (long it = 0; it < opts.iters && kept < draws; ++it) {
            sampler.sweep();
            if (it >= opts.warmup && (it - opts.warmup + 1) % opts.thin == 0) {
                s.set_draw("theta", chain, kept, sampler.theta());
                s.set_draw("beta", chain, kept, sampler.beta());
                ++kept;
            }
        }
    });
    return s;
}

// Coordinate-ascent VB

PosteriorSamples GapVariationalFit::sample(Index draws, Rng &rng) const
{
    PosteriorSamples s(1, draws);
    s.metadata.model = "gap";
    s.metadata.method = "vb";
    s.add_parameter("theta", 2, theta_shape.rows(), theta_shape.cols());
    s.add_parameter("beta", 2, beta_shape.rows(), beta_shape.cols());
    MatrixXd theta(theta_shape.rows(), theta_shape.cols());
    MatrixXd beta(beta_shape.rows(), beta_shape.cols());
    for (Index t = 0; t < draws; ++t) {
        for (Index k = 0; k < theta.cols(); ++k) {
            for (Index d = 0; d < theta.rows(); ++d) theta(d, k) = sample_gamma(theta_shape(d, k), theta_rate(d, k), rng);
            for (Index v = 0; v < beta.rows(); ++v) beta(v, k) = sample_gamma(beta_shape(v, k), beta_rate(v, k), rng);
        }
        s.set_draw("theta", 0, t, theta);
        s.set_draw("beta", 0, t, beta);
    }
    return s;
}

namespace {

/// E_q[log Gamma(x; a, b)] - E_q[log q(x)] for q = Gamma(shape, rate).
long double gamma_factor_terms(const MatrixXd &shape, const MatrixXd &rate, double a, double b)
{
    long double total = 0;
    const double prior_norm = a * std::log(b) - std::lgamma(a);
    for (Index j = 0; j < shape.cols(); ++j)
        for (Index i = 0; i < shape.rows(); ++i) {
            const double s = shape(i, j);
            const double r = rate(i, j);
            const double mean = s / r;
            const double elog = digamma(s) - std::log(r);
            total += prior_norm + (a - 1) * elog - b * mean;
            total -= s * std::log(r) - std::lgamma(s) + (s - 1) * elog - r * mean;
        }
    return total;
}

double bernoulli_entropy_term(double pi, double p0)
{
    double out = 0;
    if (pi > 0) out += pi * (std::log(p0) - std::log(pi));
    if (pi < 1) out += (1 - pi) * (std::log1p(-p0) - std::log1p(-pi));
    return out;
}

class GapCavi {
public:
    GapCavi(const CountArray &x, Index K, const GapHyper &hyper, double p0, const CaviOptions &opts, Rng rng,
            int restart)
        : x_(x), K_(K), h_(hyper), p0_(p0), opts_(opts)
    {
        fit_.restart = restart;
        fit_.cells = nonzero_cells(x);
        if (p0 > 0)
            for (Index d = 0; d < x.rows(); ++d)
                for (Index v = 0; v < x.cols(); ++v)
                    if (x(d, v) == 0) fit_.zero_cells.push_back({d, v, 0});
        fit_.structural_prob = VectorXd::Constant(static_cast<Index>(fit_.zero_cells.size()), p0);
        fit_.responsibilities.resize(static_cast<Index>(fit_.cells.size()), K);
        VectorXd logits(K);
        for (Index c = 0; c < fit_.responsibilities.rows(); ++c) {
            for (Index k = 0; k < K; ++k) logits[k] = sample_normal(0.0, opts.init_noise * opts.init_noise, rng);
            fit_.responsibilities.row(c) = softmax(logits).transpose();
        }
        // Beta factor from the initial responsibilities and the prior mean of theta.
        fit_.theta_shape = MatrixXd::Constant(x.rows(), K, h_.a0);
        fit_.theta_rate = MatrixXd::Constant(x.rows(), K, h_.b0);
        update_beta();
        update_theta();
    }

    GapVariationalFit run()
    {
        fit_.elbo_trace.push_back(checked_elbo());
        for (long it = 0; it < opts_.max_iters; ++it) {
            update_responsibilities();
            update_structural();
            update_theta();
            update_beta();
            const double prev = fit_.elbo_trace.back();
            const double cur = checked_elbo();
            fit_.elbo_trace.push_back(cur);
            if (std::abs(cur - prev) <= opts_.tol * std::abs(prev)) {
                fit_.converged = true;
                break;
            }
        }
        return std::move(fit_);
    }

private:
    MatrixXd elog(const MatrixXd &shape, const MatrixXd &rate) const
    {
        return shape.unaryExpr([](double s) { return digamma(s); }) - rate.array().log().matrix();
    }

    void update_responsibilities()
    {
        const MatrixXd lt = elog(fit_.theta_shape, fit_.theta_rate);
        const MatrixXd lb = elog(fit_.beta_shape, fit_.beta_rate);
        for (Index c = 0; c < fit_.responsibilities.rows(); ++c) {
            const auto &cell = fit_.cells[static_cast<std::size_t>(c)];
            fit_.responsibilities.row(c) = softmax((lt.row(cell.doc) + lb.row(cell.feature)).transpose()).transpose();
        }
    }

    void update_structural()
    {
        if (p0_ <= 0) return;
        const MatrixXd et = fit_.theta_mean();
        const MatrixXd eb = fit_.beta_mean();
        const double prior_logit = std::log(p0_) - std::log1p(-p0_);
        for (std::size_t i = 0; i < fit_.zero_cells.size(); ++i) {
            const auto &c = fit_.zero_cells[i];
            const double logit = prior_logit + et.row(c.doc).dot(eb.row(c.feature));
            fit_.structural_prob[static_cast<Index>(i)] = 1.0 / (1.0 + std::exp(-logit));
        }
    }

    void update_theta()
    {
        const MatrixXd eb = fit_.beta_mean();
        fit_.theta_shape = MatrixXd::Constant(x_.rows(), K_, h_.a0);
        fit_.theta_rate = (h_.b0 + eb.colwise().sum().array()).replicate(x_.rows(), 1).matrix();
        for (std::size_t i = 0; i < fit_.zero_cells.size(); ++i) {
            const auto &c = fit_.zero_cells[i];
            fit_.theta_rate.row(c.doc) -= fit_.structural_prob[static_cast<Index>(i)] * eb.row(c.feature);
        }
        for (Index c = 0; c < fit_.responsibilities.rows(); ++c) {
            const auto &cell = fit_.cells[static_cast<std::size_t>(c)];
            fit_.theta_shape.row(cell.doc) += static_cast<double>(cell.count) * fit_.responsibilities.row(c);
        }
        fit_.theta_rate = fit_.theta_rate.cwiseMax(h_.b0);
    }

    void update_beta()
    {
        const MatrixXd et = fit_.theta_mean();
        fit_.beta_shape = MatrixXd::Constant(x_.cols(), K_, h_.c0);
        fit_.beta_rate = (h_.d0 + et.colwise().sum().array()).replicate(x_.cols(), 1).matrix();
        for (std::size_t i = 0; i < fit_.zero_cells.size(); ++i) {
            const auto &c = fit_.zero_cells[i];
            fit_.beta_rate.row(c.feature) -= fit_.structural_prob[static_cast<Index>(i)] * et.row(c.doc);
        }
        for (Index c = 0; c < fit_.responsibilities.rows(); ++c) {
            const auto &cell = fit_.cells[static_cast<std::size_t>(c)];
            fit_.beta_shape.row(cell.feature) += static_cast<double>(cell.count) * fit_.responsibilities.row(c);
        }
        fit_.beta_rate = fit_.beta_rate.cwiseMax(h_.d0);
    }

    double elbo() const
    {
        const MatrixXd lt = elog(fit_.theta_shape, fit_.theta_rate);
        const MatrixXd lb = elog(fit_.beta_shape, fit_.beta_rate);
        const MatrixXd et = fit_.theta_mean();
        const MatrixXd eb = fit_.beta_mean();
        long double total = 0;
        // Expected Poisson rate over every cell, minus structural zeros.
        total -= static_cast<long double>(et.colwise().sum().dot(eb.colwise().sum()));
        for (std::size_t i = 0; i < fit_.zero_cells.size(); ++i) {
            const auto &c = fit_.zero_cells[i];
            const double pi = fit_.structural_prob[static_cast<Index>(i)];
            total += pi * et.row(c.doc).dot(eb.row(c.feature));
            total += bernoulli_entropy_term(pi, p0_);
        }
        const double log_keep = p0_ > 0 ? std::log1p(-p0_) : 0.0;
        for (std::size_t c = 0; c < fit_.cells.size(); ++c) {
            const auto &cell = fit_.cells[c];
            long double s = 0;
            for (Index k = 0; k < K_; ++k) {
                const double r = fit_.responsibilities(static_cast<Index>(c), k);
                if (r <= 0) continue;
                s += r * (lt(cell.doc, k) + lb(cell.feature, k) - std::log(r));
            }
            total += static_cast<long double>(cell.count) * s - log_factorial(cell.count) + log_keep;
        }
        total += gamma_factor_terms(fit_.theta_shape, fit_.theta_rate, h_.a0, h_.b0);
        total += gamma_factor_terms(fit_.beta_shape, fit_.beta_rate, h_.c0, h_.d0);
        return static_cast<double>(total);
    }

    double checked_elbo() const
    {
        const double e = elbo();
        const auto it = static_cast<long>(fit_.elbo_trace.size());
        if (!std::isfinite(e)) throw NumericalError("GaP CAVI: non-finite ELBO at iteration " + std::to_string(it), it);
        return e;
    }

    const CountArray &x_;
    Index K_;
    GapHyper h_;
    double p0_;
    CaviOptions opts_;
    GapVariationalFit fit_;
};

}  // namespace

GapVariationalFit fit_gap_cavi(const CountMatrix &x, Index K, const GapHyper &hyper, double p0,
                               const CaviOptions &opts)
{
    if (K < 1) throw ConfigError("fit_gap_cavi: K must be >= 1");
    if (opts.restarts < 1) throw ConfigError("fit_gap_cavi: restarts must be >= 1");
    if (opts.max_iters < 1) throw ConfigError("fit_gap_cavi: max_iters must be >= 1");
    hyper.validate();
    check_p0(p0);
    std::vector<GapVariationalFit> fits(static_cast<std::size_t>(opts.restarts));
    const Rng root(opts.seed);
    parallel_for(opts.restarts, opts.threads, [&](Index r) {
        GapCavi cavi(x.counts(), K, hyper, p0, opts, root.split(static_cast<std::uint64_t>(r)), static_cast<int>(r));
        fits[static_cast<std::size_t>(r)] = cavi.run();
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < fits.size(); ++r)
        if (fits[r].elbo() > fits[best].elbo()) best = r;
    return std::move(fits[best]);
}

}  // namespace plvm
