#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "oracles.hpp"
#include "plvm/distributions.hpp"
#include "plvm/gap.hpp"

using namespace plvm;

namespace {

/// Mean and batch-means standard error of a correlated series.
std::pair<double, double> batch_mean(const std::vector<double> &x, int batches = 50)
{
    const std::size_t b = x.size() / static_cast<std::size_t>(batches);
    std::vector<double> means;
    for (int i = 0; i < batches; ++i)
        means.push_back(oracle::mean(std::vector<double>(x.begin() + static_cast<long>(i * b),
                                                         x.begin() + static_cast<long>((i + 1) * b))));
    return {oracle::mean(means), std::sqrt(oracle::variance(means) / batches)};
}

}  // namespace

TEST_CASE("hyperparams_for_expected_total: exact identity")
{
    const GapHyper h = hyperparams_for_expected_total(1625, 2, 325);
    CHECK(h.a0 == 1);
    CHECK(h.c0 == 1);
    CHECK(h.d0 == 1);
    CHECK((h.a0 / h.b0) * (h.c0 / h.d0) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(325 * 2 * (h.a0 / h.b0) * (h.c0 / h.d0) == doctest::Approx(1625).epsilon(1e-15));
    CHECK(hyperparams_for_expected_total(3250, 2, 325).b0 == doctest::Approx(h.b0 / 2).epsilon(1e-15));
    CHECK_THROWS_AS(hyperparams_for_expected_total(0, 2, 3), DomainError);
}

TEST_CASE("hyperparams_for_expected_total: simulated totals match the target")
{
    const double target = 200;
    const GapHyper h = hyperparams_for_expected_total(target, 2, 50);
    Rng rng(1);
    std::vector<double> totals;
    for (int i = 0; i < 10000; ++i) {
        const auto s = simulate_gap(1, 50, 2, h, 0, rng);
        totals.push_back(static_cast<double>(s.data.counts().sum()));
    }
    CHECK(std::abs(oracle::mean(totals) - target) < 3 * std::sqrt(oracle::variance(totals) / 10000));
}

TEST_CASE("simulate_gap: mask behaviour")
{
    Rng rng(2);
    const GapHyper h = hyperparams_for_expected_total(500, 2, 30);
    const auto none = simulate_gap(10, 30, 2, h, 0, rng);
    CHECK_FALSE(none.mask.any());
    const auto z = simulate_gap(100, 325, 2, hyperparams_for_expected_total(6500, 2, 325), 0.2, rng);
    const double n = 100.0 * 325;
    const double frac = static_cast<double>(z.mask.count()) / n;
    CHECK(std::abs(frac - 0.2) < 2.5758 * std::sqrt(0.2 * 0.8 / n));
    for (Index d = 0; d < 100; ++d)
        for (Index v = 0; v < 325; ++v)
            if (z.mask(d, v)) CHECK(z.data.counts()(d, v) == 0);
    CHECK((z.truth.theta.array() >= 0).all());
    CHECK_THROWS_AS(simulate_gap(2, 2, 1, h, 1.0, rng), DomainError);
}

TEST_CASE("simulate_gap: K = 1 column totals follow beta")
{
    Rng rng(3);
    const auto s = simulate_gap(2000, 5, 1, GapHyper{2, 1, 2, 1}, 0, rng);
    const double theta_sum = s.truth.theta.sum();
    for (Index v = 0; v < 5; ++v) {
        const double expect = s.truth.beta(v, 0) * theta_sum;
        CHECK(std::abs(static_cast<double>(s.data.counts().col(v).sum()) - expect) < 3.5 * std::sqrt(expect));
    }
}

TEST_CASE("gap_log_likelihood: examples")
{
    Rng rng(4);
    MatrixXd theta(3, 2), beta(4, 2);
    for (Index i = 0; i < theta.size(); ++i) theta.data()[i] = sample_gamma(1, 1, rng);
    for (Index i = 0; i < beta.size(); ++i) beta.data()[i] = sample_gamma(1, 1, rng);
    const MatrixXd lambda = theta * beta.transpose();
    const CountArray zero = CountArray::Zero(3, 4);
    CHECK(gap_log_likelihood(zero, theta, beta, ZeroInflation::none, 0) == doctest::Approx(-lambda.sum()));
    // p0 -> 1: every zero cell contributes log(p0 + ...) -> 0
    CHECK(std::abs(gap_log_likelihood(zero, theta, beta, ZeroInflation::known_p0, 1 - 1e-12)) < 1e-10);
    CHECK_THROWS_AS(gap_log_likelihood(zero, theta, beta, ZeroInflation::none, 0.1), ConfigError);

    for (int rep = 0; rep < 20; ++rep) {
        CountArray x(3, 4);
        for (Index d = 0; d < 3; ++d)
            for (Index v = 0; v < 4; ++v) x(d, v) = rng() % 3 == 0 ? 0 : sample_poisson(lambda(d, v), rng);
        const double p0 = 0.3;
        long double plain = 0, inflated = 0;
        for (Index d = 0; d < 3; ++d)
            for (Index v = 0; v < 4; ++v) {
                const long double l = lambda(d, v);
                plain += oracle::log_poisson(x(d, v), l);
                inflated += x(d, v) == 0 ? logl(p0 + (1 - p0) * expl(-l)) : log1pl(-p0) + oracle::log_poisson(x(d, v), l);
            }
        CHECK(std::abs(gap_log_likelihood(x, theta, beta, ZeroInflation::none, 0) - static_cast<double>(plain)) < 1e-9);
        CHECK(std::abs(gap_log_likelihood(x, theta, beta, ZeroInflation::known_p0, p0) - static_cast<double>(inflated)) <
              1e-9);
        CHECK(gap_log_likelihood(x, theta, beta, ZeroInflation::known_p0, 0) ==
              gap_log_likelihood(x, theta, beta, ZeroInflation::none, 0));
        // scale non-identifiability, exact for power-of-two factors
        MatrixXd t2 = theta, b2 = beta;
        t2.col(1) *= 4;
        b2.col(1) /= 4;
        CHECK(gap_log_likelihood(x, t2, b2, ZeroInflation::known_p0, p0) ==
              gap_log_likelihood(x, theta, beta, ZeroInflation::known_p0, p0));
    }
    CountArray pos(1, 1);
    pos << 2;
    CHECK(gap_log_likelihood(pos, MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), ZeroInflation::none, 0) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("GapGibbs: all-zero data gives the closed-form theta conditional")
{
    const GapHyper h{2, 3, 1, 1};
    GapGibbs g(CountArray::Zero(1, 3), 1, h, 0, Rng(5));
    MatrixXd beta(3, 1);
    beta << 0.5, 1.0, 1.5;
    g.set_beta(beta);
    g.sample_latent();
    const int n = 100000;
    std::vector<double> draws;
    for (int i = 0; i < n; ++i) {
        g.sample_theta();
        draws.push_back(g.theta()(0, 0));
    }
    const double rate = 3 + 3.0;
    CHECK(std::abs(oracle::mean(draws) - 2 / rate) < 3 * std::sqrt(2 / (rate * rate) / n));
    CHECK(std::abs(oracle::variance(draws) - 2 / (rate * rate)) < 0.03 * 2 / (rate * rate));
}

TEST_CASE("GapGibbs: successive-conditional check recovers the prior")
{
    // Draw (theta, beta, x) from the joint, run one sweep from the true
    // parameters, and the new parameters must again follow the prior.
    const GapHyper h{2, 1, 1.5, 2};
    for (double p0 : {0.0, 0.3}) {
        Rng rng(6);
        const int reps = 20000;
        std::vector<double> th, be;
        for (int r = 0; r < reps; ++r) {
            const auto sim = simulate_gap(2, 2, 2, h, p0, rng);
            GapGibbs g(sim.data.counts(), 2, h, p0, rng.split(static_cast<std::uint64_t>(r) + 1000));
            g.set_theta(sim.truth.theta);
            g.set_beta(sim.truth.beta);
            g.sweep();
            th.push_back(g.theta()(0, 0));
            be.push_back(g.beta()(1, 1));
        }
        CHECK(std::abs(oracle::mean(th) - 2.0) < 3 * std::sqrt(2.0 / reps));
        CHECK(std::abs(oracle::mean(be) - 0.75) < 3 * std::sqrt(1.5 / 4 / reps));
    }
}

TEST_CASE("GapGibbs: D = V = K = 1 moments match quadrature")
{
    const Count x = 3;
    // posterior density on (u, w) = (log theta, log beta), prior Gamma(1, 1) for both
    long double z = 0, m_theta = 0, m_prod = 0;
    const int n = 1500;
    const double lo = -12, hi = 5, step = (hi - lo) / n;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            const long double t = expl(lo + i * step), b = expl(lo + j * step);
            const long double w = expl(-t - b - t * b + 3 * logl(t * b) + logl(t) + logl(b));
            z += w;
            m_theta += w * t;
            m_prod += w * t * b;
        }
    const double e_theta = static_cast<double>(m_theta / z), e_prod = static_cast<double>(m_prod / z);

    CountArray data(1, 1);
    data << x;
    GapGibbs g(data, 1, GapHyper{1, 1, 1, 1}, 0, Rng(7));
    for (int i = 0; i < 1000; ++i) g.sweep();
    std::vector<double> th, prod;
    for (int i = 0; i < 200000; ++i) {
        g.sweep();
        th.push_back(g.theta()(0, 0));
        prod.push_back(g.theta()(0, 0) * g.beta()(0, 0));
    }
    const auto [mt, set] = batch_mean(th);
    const auto [mp, sep] = batch_mean(prod);
    CHECK(std::abs(mt - e_theta) < 3 * set);
    CHECK(std::abs(mp - e_prod) < 3 * sep);
}

TEST_CASE("fit_gap_gibbs: labels, nonnegativity, determinism")
{
    Rng rng(8);
    const auto sim = simulate_gap(8, 12, 2, hyperparams_for_expected_total(100, 2, 12), 0.2, rng);
    GibbsOptions o;
    o.iters = 60;
    o.warmup = 20;
    o.chains = 2;
    o.seed = 3;
    const auto a = fit_gap_gibbs(sim.data, 2, sim.truth.hyper, 0.2, o);
    const auto b = fit_gap_gibbs(sim.data, 2, sim.truth.hyper, 0.2, o);
    CHECK(a.metadata.model == "zgap");
    CHECK(fit_gap_gibbs(sim.data, 2, sim.truth.hyper, 0, o).metadata.model == "gap");
    CHECK(a.param("theta").values == b.param("theta").values);
    for (double v : a.param("beta").values) CHECK(v >= 0);
    CHECK_THROWS_AS(fit_gap_gibbs(CountMatrix(CountArray::Zero(2, 2)), 1, sim.truth.hyper, 0, o), ConfigError);
}

TEST_CASE("fit_gap_cavi: K = 1 all-zero data matches the exact conditional family")
{
    const GapHyper h{2, 3, 1.5, 2};
    CaviOptions o;
    o.seed = 1;
    o.restarts = 1;
    o.tol = 0;
    o.max_iters = 2000;
    const auto fit = fit_gap_cavi(CountMatrix(CountArray::Zero(2, 3)), 1, h, 0, o);
    const VectorXd eb = fit.beta_mean().col(0);
    const VectorXd et = fit.theta_mean().col(0);
    for (Index d = 0; d < 2; ++d) {
        CHECK(fit.theta_shape(d, 0) == doctest::Approx(2));
        CHECK(fit.theta_rate(d, 0) == doctest::Approx(3 + eb.sum()));
    }
    for (Index v = 0; v < 3; ++v) {
        CHECK(fit.beta_shape(v, 0) == doctest::Approx(1.5));
        CHECK(fit.beta_rate(v, 0) == doctest::Approx(2 + et.sum()));
    }
}

TEST_CASE("fit_gap_cavi: ELBO is nondecreasing on random instances")
{
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        const Index D = 3 + static_cast<Index>(rng() % 8), V = 4 + static_cast<Index>(rng() % 20);
        const Index K = 1 + static_cast<Index>(rng() % 3);
        const double p0 = rep % 2 ? 0.2 : 0.0;
        const auto sim = simulate_gap(D, V, K, hyperparams_for_expected_total(100 + rng() % 400, K, V), p0, rng);
        CaviOptions o;
        o.max_iters = 100;
        o.tol = 0;
        o.restarts = 1;
        o.seed = rng();
        const auto fit = fit_gap_cavi(sim.data, K, sim.truth.hyper, p0, o);
        for (std::size_t i = 1; i < fit.elbo_trace.size(); ++i)
            CHECK(fit.elbo_trace[i] - fit.elbo_trace[i - 1] >= -1e-8);
        if (p0 > 0) {
            CHECK(fit.structural_prob.size() == static_cast<Index>(fit.zero_cells.size()));
            CHECK((fit.structural_prob.array() >= 0).all());
            CHECK((fit.structural_prob.array() <= 1).all());
        }
    }
}

TEST_CASE("fit_gap_cavi: reproducible and sampled draws are nonnegative")
{
    Rng rng(10);
    const auto sim = simulate_gap(10, 15, 2, hyperparams_for_expected_total(300, 2, 15), 0, rng);
    CaviOptions o;
    o.seed = 4;
    const auto a = fit_gap_cavi(sim.data, 2, sim.truth.hyper, 0, o);
    const auto b = fit_gap_cavi(sim.data, 2, sim.truth.hyper, 0, o);
    CHECK(a.elbo_trace == b.elbo_trace);
    Rng d(1);
    const auto s = a.sample(200, d);
    for (double v : s.param("theta").values) CHECK(v >= 0);
    CHECK((s.mean("beta") - a.beta_mean()).cwiseAbs().maxCoeff() < 0.1 * a.beta_mean().maxCoeff());
}
