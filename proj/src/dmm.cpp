#include <cmath>
#include <span>

#include "plvm/lda.hpp"
#include "plvm/parallel.hpp"

namespace plvm {

DmmSimulation simulate_dmm(const CountVector &totals, Index V, const ProbVector &theta, const DirichletPrior &gamma,
                           Rng &rng)
{
    const Index D = totals.size();
    const Index K = theta.size();
    if (D < 1 || V < 1) throw DomainError("simulate_dmm: D and V must be >= 1");
    if ((totals.array() < 0).any()) throw DomainError("simulate_dmm: totals must be >= 0");

    DmmParams truth;
    truth.theta = theta.values();
    truth.gamma = gamma.resolve(V);
    truth.beta.resize(V, K);
    for (Index k = 0; k < K; ++k) truth.beta.col(k) = sample_dirichlet(truth.gamma, rng);
    truth.z.resize(static_cast<std::size_t>(D));
    CountArray counts(D, V);
    const std::span<const double> w(truth.theta.data(), static_cast<std::size_t>(K));
    for (Index d = 0; d < D; ++d) {
        const Index k = sample_categorical(w, rng);
        truth.z[static_cast<std::size_t>(d)] = k;
        counts.row(d) = sample_multinomial_weights(totals[d], truth.beta.col(k), rng).transpose();
    }
    return {CountMatrix(std::move(counts)), std::move(truth)};
}

namespace {

struct DmmChainResult {
    MatrixXd membership;
    MatrixXd co_membership;
};

/// Collapsed sampler over sample labels; theta and beta integrated out.
class DmmSampler {
public:
    DmmSampler(const CountArray &x, Index K, const VectorXd &gamma, Rng rng)
        : K_(K), gamma_(gamma), gamma_sum_(gamma.sum()), rng_(std::move(rng))
    {
        const Index D = x.rows();
        rows_.resize(static_cast<std::size_t>(D));
        totals_.resize(static_cast<std::size_t>(D));
        for (Index d = 0; d < D; ++d) {
            for (Index v = 0; v < x.cols(); ++v)
                if (x(d, v) > 0) rows_[static_cast<std::size_t>(d)].push_back({d, v, x(d, v)});
            totals_[static_cast<std::size_t>(d)] = x.row(d).sum();
        }
        docs_per_topic_ = VectorXd::Zero(K);
        feature_topic_ = MatrixXd::Zero(x.cols(), K);
        topic_totals_ = VectorXd::Zero(K);
        z_.resize(static_cast<std::size_t>(D));
        for (Index d = 0; d < D; ++d) {
            const auto k = static_cast<Index>(rng_() % static_cast<std::uint64_t>(K));
            z_[static_cast<std::size_t>(d)] = k;
            move(d, k, +1);
        }
        probs_ = MatrixXd::Zero(D, K);
    }

    void sweep()
    {
        VectorXd logp(K_);
        for (Index d = 0; d < static_cast<Index>(z_.size()); ++d) {
            move(d, z_[static_cast<std::size_t>(d)], -1);
            const auto &cells = rows_[static_cast<std::size_t>(d)];
            const double n = static_cast<double>(totals_[static_cast<std::size_t>(d)]);
            for (Index k = 0; k < K_; ++k) {
                double lp = std::log(docs_per_topic_[k] + 1.0) + std::lgamma(gamma_sum_ + topic_totals_[k]) -
                            std::lgamma(gamma_sum_ + topic_totals_[k] + n);
                for (const auto &c : cells) {
                    const double base = gamma_[c.feature] + feature_topic_(c.feature, k);
                    lp += std::lgamma(base + static_cast<double>(c.count)) - std::lgamma(base);
                }
                logp[k] = lp;
            }
            const VectorXd p = softmax(logp);
            probs_.row(d) = p.transpose();
            const Index k_new = sample_categorical(std::span<const double>(p.data(), static_cast<std::size_t>(K_)), rng_);
            z_[static_cast<std::size_t>(d)] = k_new;
            move(d, k_new, +1);
        }
    }

    const std::vector<Index> &labels() const { return z_; }
    /// Full conditionals P(z_d = k | z_-d, x) from the last sweep.
    const MatrixXd &conditionals() const { return probs_; }

    VectorXd draw_theta() { return sample_dirichlet(VectorXd::Ones(K_) + docs_per_topic_, rng_); }

    MatrixXd draw_beta()
    {
        MatrixXd beta(feature_topic_.rows(), K_);
        for (Index k = 0; k < K_; ++k) beta.col(k) = sample_dirichlet(gamma_ + feature_topic_.col(k), rng_);
        return beta;
    }

private:
    void move(Index d, Index k, int sign)
    {
        docs_per_topic_[k] += sign;
        for (const auto &c : rows_[static_cast<std::size_t>(d)])
            feature_topic_(c.feature, k) += sign * static_cast<double>(c.count);
        topic_totals_[k] += sign * static_cast<double>(totals_[static_cast<std::size_t>(d)]);
    }

    Index K_;
    VectorXd gamma_;
    double gamma_sum_;
    std::vector<std::vector<Cell>> rows_;
    std::vector<Count> totals_;
    std::vector<Index> z_;
    VectorXd docs_per_topic_;
    MatrixXd feature_topic_;
    VectorXd topic_totals_;
    MatrixXd probs_;
    Rng rng_;
};

}  // namespace

DmmFit fit_dmm_gibbs(const CountMatrix &x, Index K, const DirichletPrior &gamma, const GibbsOptions &opts)
{
    if (K < 1) throw ConfigError("fit_dmm_gibbs: K must be >= 1");
    if (opts.chains < 1) throw ConfigError("Gibbs: chains must be >= 1");
    if (opts.thin < 1) throw ConfigError("Gibbs: thin must be >= 1");
    if (opts.warmup < 0 || opts.iters <= opts.warmup) throw ConfigError("Gibbs: iters must exceed warmup");
    const auto draws = static_cast<Index>((opts.iters - opts.warmup) / opts.thin);
    const Index D = x.num_samples();
    const VectorXd g = gamma.resolve(x.num_features());

    DmmFit fit;
    fit.samples = PosteriorSamples(opts.chains, draws);
    auto &s = fit.samples;
    s.metadata.model = "dmm";
    s.metadata.method = "gibbs";
    s.metadata.seed = opts.seed;
    s.metadata.warmup = opts.warmup;
    s.metadata.iters = opts.iters;
    s.metadata.thin = opts.thin;
    s.add_parameter("z", 1, D);
    s.add_parameter("theta", 1, K);
    s.add_parameter("beta", 2, x.num_features(), K);

    std::vector<DmmChainResult> results(static_cast<std::size_t>(opts.chains));
    const Rng root(opts.seed);
    parallel_for(opts.chains, opts.threads, [&](Index chain) {
        DmmSampler sampler(x.counts(), K, g, root.split(static_cast<std::uint64_t>(chain)));
        auto &res = results[static_cast<std::size_t>(chain)];
        res.membership = MatrixXd::Zero(D, K);
        res.co_membership = MatrixXd::Zero(D, D);
        VectorXd z(D);
        Index kept = 0;
        for (long it = 0; it < opts.iters && kept < draws; ++it) {
            sampler.sweep();
            if (it < opts.warmup || (it - opts.warmup + 1) % opts.thin != 0) continue;
            const auto &labels = sampler.labels();
            for (Index d = 0; d < D; ++d) {
                z[d] = static_cast<double>(labels[static_cast<std::size_t>(d)]);
                for (Index e = 0; e < D; ++e)
                    if (labels[static_cast<std::size_t>(d)] == labels[static_cast<std::size_t>(e)])
                        res.co_membership(d, e) += 1;
            }
            res.membership += sampler.conditionals();
            s.set_draw("z", chain, kept, z);
            s.set_draw("theta", chain, kept, sampler.draw_theta());
            s.set_draw("beta", chain, kept, sampler.draw_beta());
            ++kept;
        }
    });

    // Per-chain label orderings are arbitrary, so membership is only
    // meaningful within a chain; chain 0 is reported. Co-membership is
    // label-invariant and pooled.
    const double total = static_cast<double>(draws) * opts.chains;
    fit.membership = results[0].membership / static_cast<double>(draws);
    fit.co_membership = MatrixXd::Zero(D, D);
    for (const auto &r : results) fit.co_membership += r.co_membership;
    fit.co_membership /= total;
    return fit;
}

}  // namespace plvm
