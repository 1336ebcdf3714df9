#include "plvm/bootstrap.hpp"

#include <cmath>
#include <optional>

#include "plvm/align.hpp"
#include "plvm/parallel.hpp"

namespace plvm {

PosteriorSamples parametric_bootstrap(const ParamSet &fitted, const SimulateFn &simulate, const RefitFn &refit,
                                      const BootstrapOptions &opts)
{
    if (opts.replicates < 1) throw ConfigError("bootstrap: replicates must be >= 1");
    const auto ref = fitted.find(opts.align_param);
    if (ref == fitted.end()) throw ConfigError("bootstrap: fitted parameters lack '" + opts.align_param + "'");

    std::vector<std::optional<ParamSet>> reps(static_cast<std::size_t>(opts.replicates));
    const Rng root(opts.seed);
    parallel_for(opts.replicates, opts.threads, [&](Index b) {
        Rng rng = root.split(static_cast<std::uint64_t>(b));
        try {
            const CountMatrix xb = simulate(fitted, rng);
            ParamSet est = refit(xb, rng);
            const TopicPermutation perm = align_topics(ref->second, est.at(opts.align_param));
            for (const auto &name : opts.topic_params) {
                auto it = est.find(name);
                if (it != est.end()) it->second = apply_alignment(it->second, perm);
            }
            for (const auto &[name, value] : est)
                if (!value.allFinite()) throw NumericalError("bootstrap: non-finite refit", 0);
            reps[static_cast<std::size_t>(b)] = std::move(est);
        } catch (const Error &) {
            reps[static_cast<std::size_t>(b)].reset();
        }
    });

    std::vector<const ParamSet *> ok;
    for (const auto &r : reps)
        if (r) ok.push_back(&*r);
    const auto failed = static_cast<long>(reps.size() - ok.size());
    if (static_cast<double>(failed) > opts.max_failure_fraction * opts.replicates)
        throw NumericalError("bootstrap: " + std::to_string(failed) + " of " + std::to_string(opts.replicates) +
                                 " replicates failed",
                             failed);

    PosteriorSamples s(1, static_cast<Index>(ok.size()));
    s.metadata.method = "bootstrap";
    s.metadata.seed = opts.seed;
    s.metadata.iters = opts.replicates;
    s.metadata.extra["failed_replicates"] = std::to_string(failed);
    if (failed > 0) s.metadata.warnings.push_back(std::to_string(failed) + " bootstrap replicates failed");
    if (ok.empty()) return s;
    for (const auto &[name, value] : *ok.front())
        s.add_parameter(name, value.cols() == 1 ? 1 : 2, value.rows(), value.cols());
    for (std::size_t b = 0; b < ok.size(); ++b)
        for (const auto &[name, value] : *ok[b]) s.set_draw(name, 0, static_cast<Index>(b), value);
    return s;
}

PosteriorSamples lda_bootstrap(const CountMatrix &x, const LdaVariationalFit &fit, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const CaviOptions &cavi, const BootstrapOptions &opts)
{
    const CountVector totals = library_sizes(x);
    const ParamSet fitted{{"theta", fit.theta_mean()}, {"beta", fit.beta_mean()}};
    const Index K = fit.beta_concentration.cols();
    const SimulateFn simulate = [&](const ParamSet &p, Rng &rng) {
        const MatrixXd &theta = p.at("theta");
        const MatrixXd &beta = p.at("beta");
        CountArray counts(theta.rows(), beta.rows());
        for (Index d = 0; d < theta.rows(); ++d)
            counts.row(d) = sample_multinomial_weights(totals[d], beta * theta.row(d).transpose(), rng).transpose();
        return x.with_counts(std::move(counts));
    };
    const RefitFn refit = [&](const CountMatrix &xb, Rng &rng) {
        CaviOptions o = cavi;
        o.seed = rng();
        o.threads = 1;
        const LdaVariationalFit f = fit_lda_cavi(xb, K, alpha, gamma, o);
        return ParamSet{{"theta", f.theta_mean()}, {"beta", f.beta_mean()}};
    };
    PosteriorSamples s = parametric_bootstrap(fitted, simulate, refit, opts);
    s.metadata.model = "lda";
    return s;
}

PosteriorSamples gap_bootstrap(const CountMatrix &x, const GapVariationalFit &fit, const GapHyper &hyper, double p0,
                               const CaviOptions &cavi, const BootstrapOptions &opts)
{
    const ParamSet fitted{{"theta", fit.theta_mean()}, {"beta", fit.beta_mean()}};
    const Index K = fit.beta_shape.cols();
    const SimulateFn simulate = [&](const ParamSet &p, Rng &rng) {
        const MatrixXd rate = p.at("theta") * p.at("beta").transpose();
        CountArray counts(rate.rows(), rate.cols());
        for (Index d = 0; d < rate.rows(); ++d)
            for (Index v = 0; v < rate.cols(); ++v) {
                counts(d, v) = sample_poisson(rate(d, v), rng);
                if (p0 > 0 && rng.uniform() < p0) counts(d, v) = 0;
            }
        return x.with_counts(std::move(counts));
    };
    const RefitFn refit = [&](const CountMatrix &xb, Rng &rng) {
        CaviOptions o = cavi;
        o.seed = rng();
        o.threads = 1;
        const GapVariationalFit f = fit_gap_cavi(xb, K, hyper, p0, o);
        return ParamSet{{"theta", f.theta_mean()}, {"beta", f.beta_mean()}};
    };
    PosteriorSamples s = parametric_bootstrap(fitted, simulate, refit, opts);
    s.metadata.model = p0 > 0 ? "zgap" : "gap";
    return s;
}

}  // namespace plvm
