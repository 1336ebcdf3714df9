#include "plvm/unigram.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "plvm/distributions.hpp"
#include "plvm/parallel.hpp"
#include "plvm/transforms.hpp"

namespace plvm {

TimeSlots make_time_slots(const std::vector<double> &times)
{
    TimeSlots out;
    std::map<double, Index> slot;
    for (double t : times) {
        if (!std::isfinite(t)) throw DomainError("sample times must be finite");
        slot.emplace(t, 0);
    }
    for (auto &[t, s] : slot) {
        s = static_cast<Index>(out.times.size());
        out.times.push_back(t);
    }
    for (double t : times) out.slot_of.push_back(slot.at(t));
    return out;
}

namespace {

void check_time_index(const std::vector<Index> &time_index, Index D, Index T)
{
    if (T < 1) throw DomainError("unigram: T must be >= 1");
    if (static_cast<Index>(time_index.size()) != D) throw DomainError("unigram: time_index length differs from D");
    for (Index t : time_index)
        if (t < 0 || t >= T) throw DomainError("unigram: time_index entry outside 0..T-1");
}

}  // namespace

UnigramSimulation simulate_unigram(Index T, Index V, const std::vector<Index> &time_index, const CountVector &totals,
                                   double sigma0_sq, Rng &rng)
{
    if (!(sigma0_sq > 0)) throw DomainError("simulate_unigram: sigma0_sq must be > 0");
    if (V < 1) throw DomainError("simulate_unigram: V must be >= 1");
    const Index D = totals.size();
    check_time_index(time_index, D, T);
    if ((totals.array() < 0).any()) throw DomainError("simulate_unigram: totals must be >= 0");

    UnigramState truth;
    truth.sigma2 = sigma0_sq;
    truth.time_index = time_index;
    truth.mu.resize(T, V);
    for (Index t = 0; t < T; ++t)
        for (Index v = 0; v < V; ++v)
            truth.mu(t, v) = sample_normal(t == 0 ? 0.0 : truth.mu(t - 1, v), sigma0_sq, rng);

    CountArray counts(D, V);
    std::vector<double> times(static_cast<std::size_t>(D));
    for (Index d = 0; d < D; ++d) {
        const Index t = time_index[static_cast<std::size_t>(d)];
        const VectorXd p = softmax(truth.mu.row(t).transpose());
        counts.row(d) = sample_multinomial_weights(totals[d], p, rng).transpose();
        times[static_cast<std::size_t>(d)] = static_cast<double>(t);
    }
    return {CountMatrix(std::move(counts), std::move(times)), std::move(truth)};
}

UnigramData::UnigramData(const CountArray &x, const std::vector<Index> &time_index, Index T)
{
    check_time_index(time_index, x.rows(), T);
    counts = MatrixXd::Zero(T, x.cols());
    for (Index d = 0; d < x.rows(); ++d) {
        counts.row(time_index[static_cast<std::size_t>(d)]) += x.row(d).cast<double>();
        log_coefficient += log_factorial(x.row(d).sum());
        for (Index v = 0; v < x.cols(); ++v) log_coefficient -= log_factorial(x(d, v));
    }
    totals = counts.rowwise().sum();
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Sum of squared walk increments, mu_{-1} = 0.
double walk_sum_squares(const MatrixXd &mu)
{
    double q = mu.row(0).squaredNorm();
    for (Index t = 1; t < mu.rows(); ++t) q += (mu.row(t) - mu.row(t - 1)).squaredNorm();
    return q;
}

double log_likelihood(const MatrixXd &mu, const UnigramData &data)
{
    double ll = data.log_coefficient;
    for (Index t = 0; t < mu.rows(); ++t) {
        if (data.totals[t] == 0) continue;
        ll += data.counts.row(t).dot(mu.row(t)) - data.totals[t] * log_sum_exp(mu.row(t));
    }
    return ll;
}

void check_shape(const MatrixXd &mu, const UnigramData &data)
{
    if (mu.rows() != data.slots() || mu.cols() != data.features())
        throw DomainError("unigram: mu must be T x V matching the data");
}

}  // namespace

double unigram_log_posterior(const MatrixXd &mu, double sigma2, const UnigramData &data, const UnigramPrior &prior)
{
    if (!(sigma2 > 0)) throw DomainError("unigram_log_posterior: sigma2 must be > 0");
    check_shape(mu, data);
    const double n = static_cast<double>(mu.size());
    const double walk = -0.5 * n * (kLog2Pi + std::log(sigma2)) - walk_sum_squares(mu) / (2 * sigma2);
    return log_likelihood(mu, data) + walk + log_inv_gamma_pdf(sigma2, prior.a, prior.b);
}

double unigram_log_posterior(const MatrixXd &mu, double sigma2, const CountArray &x,
                             const std::vector<Index> &time_index, const UnigramPrior &prior)
{
    return unigram_log_posterior(mu, sigma2, UnigramData(x, time_index, mu.rows()), prior);
}

UnigramGradient unigram_grad(const MatrixXd &mu, double log_sigma2, const UnigramData &data,
                             const UnigramPrior &prior)
{
    check_shape(mu, data);
    const double sigma2 = std::exp(log_sigma2);
    const Index T = mu.rows();
    const double n = static_cast<double>(mu.size());
    const double q = walk_sum_squares(mu);

    UnigramGradient g;
    g.value = log_likelihood(mu, data) - 0.5 * n * (kLog2Pi + log_sigma2) - q / (2 * sigma2) +
              prior.a * std::log(prior.b) - std::lgamma(prior.a) - (prior.a + 1) * log_sigma2 - prior.b / sigma2 +
              log_sigma2;
    g.log_sigma2 = -0.5 * n + q / (2 * sigma2) - prior.a + prior.b / sigma2;

    g.mu.resize(T, mu.cols());
    for (Index t = 0; t < T; ++t) {
        g.mu.row(t) = data.counts.row(t) - data.totals[t] * softmax(mu.row(t).transpose()).transpose();
        const auto prev = t == 0 ? VectorXd::Zero(mu.cols()).transpose().eval() : mu.row(t - 1).eval();
        g.mu.row(t) -= (mu.row(t) - prev) / sigma2;
        if (t + 1 < T) g.mu.row(t) += (mu.row(t + 1) - mu.row(t)) / sigma2;
    }
    return g;
}

// HMC

namespace {

struct Point {
    VectorXd q;
    VectorXd grad;
    double logp = 0;
};

Point evaluate(const LogDensityFn &f, const VectorXd &q)
{
    Point p;
    p.q = q;
    p.grad.resize(q.size());
    p.logp = f(q, p.grad);
    return p;
}

bool finite(const Point &p) { return std::isfinite(p.logp) && p.grad.allFinite(); }

struct Transition {
    Point end;
    double accept_prob = 0;
    bool divergent = false;
};

constexpr double kDivergence = 1000;

Transition leapfrog_trajectory(const LogDensityFn &f, const Point &start, const VectorXd &momentum,
                               const VectorXd &inv_metric, double eps, int steps)
{
    const double h0 = -start.logp + 0.5 * momentum.cwiseProduct(inv_metric).dot(momentum);
    Transition tr;
    VectorXd q = start.q;
    VectorXd p = momentum;
    VectorXd grad = start.grad;
    double logp = start.logp;
    for (int s = 0; s < steps; ++s) {
        p += 0.5 * eps * grad;
        q += eps * inv_metric.cwiseProduct(p);
        Point next = evaluate(f, q);
        if (!finite(next)) {
            tr.divergent = true;
            return tr;
        }
        grad = next.grad;
        logp = next.logp;
        p += 0.5 * eps * grad;
        const double h = -logp + 0.5 * p.cwiseProduct(inv_metric).dot(p);
        if (!std::isfinite(h) || h - h0 > kDivergence) {
            tr.divergent = true;
            return tr;
        }
    }
    const double h1 = -logp + 0.5 * p.cwiseProduct(inv_metric).dot(p);
    tr.end.q = q;
    tr.end.grad = grad;
    tr.end.logp = logp;
    tr.accept_prob = std::min(1.0, std::exp(h0 - h1));
    return tr;
}

VectorXd draw_momentum(const VectorXd &inv_metric, Rng &rng)
{
    VectorXd p(inv_metric.size());
    for (Index i = 0; i < p.size(); ++i) p[i] = sample_normal(0.0, 1.0 / inv_metric[i], rng);
    return p;
}

/// Doubles or halves eps until a single leapfrog step crosses acceptance 1/2.
double reasonable_step(const LogDensityFn &f, const Point &x, const VectorXd &inv_metric, double eps, Rng &rng)
{
    const VectorXd p = draw_momentum(inv_metric, rng);
    auto accept = [&](double e) {
        const Transition tr = leapfrog_trajectory(f, x, p, inv_metric, e, 1);
        return tr.divergent ? 0.0 : tr.accept_prob;
    };
    const int dir = accept(eps) > 0.5 ? 1 : -1;
    for (int i = 0; i < 100; ++i) {
        const double next = dir > 0 ? eps * 2 : eps / 2;
        const double a = accept(next);
        if ((dir > 0 && a < 0.5) || (dir < 0 && a > 0.5)) return dir > 0 ? eps : next;
        eps = next;
    }
    return eps;
}

class DualAveraging {
public:
    DualAveraging(double eps, double target) : target_(target) { restart(eps); }

    void restart(double eps)
    {
        mu_ = std::log(10 * eps);
        h_bar_ = 0;
        x_bar_ = 0;
        m_ = 0;
    }

    double update(double accept_prob)
    {
        ++m_;
        const double m = static_cast<double>(m_);
        h_bar_ = (1 - 1 / (m + kT0)) * h_bar_ + (target_ - accept_prob) / (m + kT0);
        const double log_eps = mu_ - std::sqrt(m) / kGamma * h_bar_;
        const double w = std::pow(m, -kKappa);
        x_bar_ = w * log_eps + (1 - w) * x_bar_;
        return std::exp(log_eps);
    }

    double final_step() const { return std::exp(x_bar_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kT0 = 10;
    static constexpr double kKappa = 0.75;
    double target_;
    double mu_ = 0;
    double h_bar_ = 0;
    double x_bar_ = 0;
    long m_ = 0;
};

/// Iterations at which a metric window closes, following the usual
/// fast / slow / fast warmup split with doubling slow windows.
std::vector<long> metric_window_ends(long warmup, long &init_buffer)
{
    long init = 75, term = 50, base = 25;
    if (warmup < 20) return {};
    if (init + term + base > warmup) {
        init = static_cast<long>(0.15 * static_cast<double>(warmup));
        term = static_cast<long>(0.1 * static_cast<double>(warmup));
        base = warmup - init - term;
    }
    init_buffer = init;
    std::vector<long> ends;
    const long stop = warmup - term;
    long start = init;
    long w = base;
    while (start < stop) {
        long end = start + w;
        if (end + 2 * w > stop) end = stop;
        ends.push_back(end);
        start = end;
        w *= 2;
    }
    return ends;
}

}  // namespace

HmcResult run_hmc(const LogDensityFn &log_density, VectorXd init, const HmcOptions &opts, Rng &rng)
{
    if (opts.warmup < 0 || opts.draws < 1) throw ConfigError("HMC: need warmup >= 0 and draws >= 1");
    if (opts.leapfrog_steps < 1) throw ConfigError("HMC: leapfrog_steps must be >= 1");
    if (!(opts.step_jitter >= 0 && opts.step_jitter < 1)) throw ConfigError("HMC: step_jitter must be in [0, 1)");
    const Index dim = init.size();
    Point x = evaluate(log_density, init);
    if (!finite(x)) throw NumericalError("HMC: initial point has non-finite density", 0);

    HmcResult res;
    res.inverse_metric = VectorXd::Ones(dim);
    double eps = reasonable_step(log_density, x, res.inverse_metric, opts.initial_step, rng);
    DualAveraging da(eps, opts.target_accept);

    long init_buffer = 0;
    const std::vector<long> ends = opts.adapt_metric ? metric_window_ends(opts.warmup, init_buffer) : std::vector<long>{};
    std::size_t window = 0;
    VectorXd w_mean = VectorXd::Zero(dim);
    VectorXd w_m2 = VectorXd::Zero(dim);
    long w_n = 0;

    res.draws.resize(dim, opts.draws);
    double accept_sum = 0;
    const long total = opts.warmup + opts.draws;
    for (long it = 0; it < total; ++it) {
        const VectorXd p = draw_momentum(res.inverse_metric, rng);
        const double jitter = 1 + opts.step_jitter * (2 * rng.uniform() - 1);
        const Transition tr =
            leapfrog_trajectory(log_density, x, p, res.inverse_metric, eps * jitter, opts.leapfrog_steps);
        const double a = tr.divergent ? 0.0 : tr.accept_prob;
        if (!tr.divergent && rng.uniform() < a) x = tr.end;

        if (it < opts.warmup) {
            eps = da.update(a);
            if (window < ends.size() && it >= init_buffer) {
                ++w_n;
                const VectorXd delta = x.q - w_mean;
                w_mean += delta / static_cast<double>(w_n);
                w_m2 += delta.cwiseProduct(x.q - w_mean);
                if (it + 1 == ends[window]) {
                    const double n = static_cast<double>(w_n);
                    const VectorXd var = w_m2 / std::max(n - 1, 1.0);
                    res.inverse_metric = (n / (n + 5)) * var.array() + 1e-3 * (5 / (n + 5));
                    w_mean.setZero();
                    w_m2.setZero();
                    w_n = 0;
                    ++window;
                    eps = reasonable_step(log_density, x, res.inverse_metric, eps, rng);
                    da.restart(eps);
                }
            }
            if (it + 1 == opts.warmup) eps = da.final_step();
        } else {
            const long k = it - opts.warmup;
            res.draws.col(k) = x.q;
            accept_sum += a;
            if (tr.divergent) ++res.divergent;
        }
    }
    res.step_size = eps;
    res.accept_rate = accept_sum / static_cast<double>(opts.draws);
    return res;
}

// ADVI

AdviResult run_advi(const LogDensityFn &log_density, VectorXd init, const AdviOptions &opts, Rng &rng)
{
    if (opts.iters < 1 || opts.grad_samples < 1 || opts.eval_every < 1 || opts.elbo_samples < 1)
        throw ConfigError("ADVI: iteration and sample counts must be >= 1");
    if (!(opts.eta > 0)) throw ConfigError("ADVI: eta must be > 0");
    const Index dim = init.size();
    AdviResult res;
    res.mean = std::move(init);
    res.log_sd = VectorXd::Zero(dim);

    VectorXd z(dim), g(dim), eps(dim);
    auto elbo = [&] {
        double sum = 0;
        for (int s = 0; s < opts.elbo_samples; ++s) {
            for (Index i = 0; i < dim; ++i) eps[i] = sample_normal(0.0, 1.0, rng);
            z = res.mean + res.log_sd.array().exp().matrix().cwiseProduct(eps);
            sum += log_density(z, g);
        }
        const double entropy = 0.5 * static_cast<double>(dim) * (1 + kLog2Pi) + res.log_sd.sum();
        return sum / opts.elbo_samples + entropy;
    };

    // Adaptive step sequence: eta * k^(-1/2) / (tau + sqrt(s_k)), with s_k an
    // exponential moving average of squared gradients.
    constexpr double kTau = 1;
    constexpr double kAlpha = 0.1;
    VectorXd s_mean, s_sd;
    const auto cb_size = static_cast<std::size_t>(
        std::max(0.1 * static_cast<double>(opts.iters) / static_cast<double>(opts.eval_every), 2.0));
    std::vector<double> rel_changes;
    double prev_elbo = 0;
    bool have_prev = false;

    VectorXd grad_mean(dim), grad_log_sd(dim);
    for (long it = 1; it <= opts.iters; ++it) {
        grad_mean.setZero();
        grad_log_sd.setZero();
        const VectorXd sd = res.log_sd.array().exp();
        for (int s = 0; s < opts.grad_samples; ++s) {
            for (Index i = 0; i < dim; ++i) eps[i] = sample_normal(0.0, 1.0, rng);
            z = res.mean + sd.cwiseProduct(eps);
            log_density(z, g);
            if (!g.allFinite()) throw NumericalError("ADVI: non-finite gradient at iteration " + std::to_string(it), it);
            grad_mean += g;
            grad_log_sd += g.cwiseProduct(eps).cwiseProduct(sd);
        }
        grad_mean /= opts.grad_samples;
        grad_log_sd = grad_log_sd / opts.grad_samples + VectorXd::Ones(dim);

        if (it == 1) {
            s_mean = grad_mean.cwiseAbs2();
            s_sd = grad_log_sd.cwiseAbs2();
        } else {
            s_mean = kAlpha * grad_mean.cwiseAbs2() + (1 - kAlpha) * s_mean;
            s_sd = kAlpha * grad_log_sd.cwiseAbs2() + (1 - kAlpha) * s_sd;
        }
        const double decay = opts.eta * std::pow(static_cast<double>(it), -0.5 + 1e-16);
        res.mean.array() += decay * grad_mean.array() / (kTau + s_mean.array().sqrt());
        res.log_sd.array() += decay * grad_log_sd.array() / (kTau + s_sd.array().sqrt());
        res.iterations = it;

        if (it % opts.eval_every == 0) {
            const double e = elbo();
            if (!std::isfinite(e)) throw NumericalError("ADVI: non-finite ELBO at iteration " + std::to_string(it), it);
            res.elbo_trace.push_back(e);
            if (have_prev) {
                rel_changes.push_back(std::abs((e - prev_elbo) / e));
                if (rel_changes.size() > cb_size) rel_changes.erase(rel_changes.begin());
                double mean = 0;
                for (double r : rel_changes) mean += r;
                mean /= static_cast<double>(rel_changes.size());
                std::vector<double> sorted = rel_changes;
                std::sort(sorted.begin(), sorted.end());
                const double median = quantile_sorted(sorted, 0.5);
                if (mean < opts.tol_rel_obj || median < opts.tol_rel_obj) {
                    res.converged = true;
                    break;
                }
            }
            prev_elbo = e;
            have_prev = true;
        }
    }
    return res;
}

// Fitting

namespace {

VectorXd pack(const MatrixXd &mu, double omega)
{
    VectorXd q(mu.size() + 1);
    q.head(mu.size()) = Eigen::Map<const VectorXd>(mu.data(), mu.size());
    q[mu.size()] = omega;
    return q;
}

MatrixXd unpack_mu(const VectorXd &q, Index T, Index V) { return Eigen::Map<const MatrixXd>(q.data(), T, V); }

/// Centered empirical log proportions (pseudocount 0.5) plus N(0, 0.1^2)
/// jitter; omega from the increments of that path.
VectorXd initial_point(const UnigramData &data, Rng &rng)
{
    const Index T = data.slots();
    const Index V = data.features();
    MatrixXd mu(T, V);
    for (Index t = 0; t < T; ++t) {
        VectorXd p = (data.counts.row(t).transpose().array() + 0.5).matrix();
        p /= p.sum();
        mu.row(t) = g_transform(p).transpose();
        for (Index v = 0; v < V; ++v) mu(t, v) += sample_normal(0.0, 0.01, rng);
    }
    const double q = walk_sum_squares(mu) / static_cast<double>(mu.size());
    return pack(mu, std::log(std::clamp(q, 1e-3, 1e3)));
}

}  // namespace

PosteriorSamples fit_unigram(const CountMatrix &x, UnigramMethod method, const UnigramFitOptions &opts)
{
    if (!x.has_times()) throw ConfigError("fit_unigram: sample times are required");
    const TimeSlots slots = make_time_slots(*x.times());
    const auto T = static_cast<Index>(slots.times.size());
    const Index V = x.num_features();
    const UnigramData data(x.counts(), slots.slot_of, T);
    const UnigramPrior prior = opts.prior;
    if (!(prior.a > 0 && prior.b > 0)) throw ConfigError("fit_unigram: prior a and b must be > 0");

    const LogDensityFn density = [&data, &prior, T, V](const VectorXd &q, VectorXd &grad) {
        const UnigramGradient g = unigram_grad(unpack_mu(q, T, V), q[T * V], data, prior);
        grad.head(T * V) = Eigen::Map<const VectorXd>(g.mu.data(), T * V);
        grad[T * V] = g.log_sigma2;
        return g.value;
    };

    std::ostringstream times;
    for (std::size_t i = 0; i < slots.times.size(); ++i) times << (i ? "," : "") << slots.times[i];

    auto store_draw = [&](PosteriorSamples &s, Index chain, Index draw, const VectorXd &q) {
        s.set_draw("mu", chain, draw, unpack_mu(q, T, V));
        s.set_scalar("sigma2", chain, draw, std::exp(q[T * V]));
    };

    if (method == UnigramMethod::hmc) {
        const HmcOptions &h = opts.hmc;
        if (h.chains < 1) throw ConfigError("fit_unigram: chains must be >= 1");
        PosteriorSamples s(h.chains, h.draws);
        s.metadata.model = "unigram";
        s.metadata.method = "hmc";
        s.metadata.seed = h.seed;
        s.metadata.warmup = h.warmup;
        s.metadata.iters = h.warmup + h.draws;
        s.metadata.extra["slot_times"] = times.str();
        s.add_parameter("mu", 2, T, V);
        s.add_parameter("sigma2", 0, 1);
        std::vector<HmcResult> results(static_cast<std::size_t>(h.chains));
        const Rng root(h.seed);
        parallel_for(h.chains, h.threads, [&](Index chain) {
            Rng rng = root.split(static_cast<std::uint64_t>(chain));
            VectorXd init = initial_point(data, rng);
            results[static_cast<std::size_t>(chain)] = run_hmc(density, std::move(init), h, rng);
            const auto &r = results[static_cast<std::size_t>(chain)];
            for (Index t = 0; t < h.draws; ++t) store_draw(s, chain, t, r.draws.col(t));
        });
        long divergent = 0;
        std::ostringstream steps, accepts;
        for (std::size_t c = 0; c < results.size(); ++c) {
            divergent += results[c].divergent;
            steps << (c ? "," : "") << results[c].step_size;
            accepts << (c ? "," : "") << results[c].accept_rate;
        }
        s.metadata.extra["divergent"] = std::to_string(divergent);
        s.metadata.extra["step_size"] = steps.str();
        s.metadata.extra["accept_rate"] = accepts.str();
        const double frac = static_cast<double>(divergent) / static_cast<double>(h.draws * h.chains);
        if (frac > h.divergence_warning)
            s.metadata.warnings.push_back("divergent transitions: " + std::to_string(divergent) + " of " +
                                          std::to_string(h.draws * h.chains));
        return s;
    }

    const AdviOptions &a = opts.advi;
    if (a.draws < 1) throw ConfigError("fit_unigram: ADVI draws must be >= 1");
    Rng rng(a.seed);
    VectorXd init = initial_point(data, rng);
    const AdviResult r = run_advi(density, std::move(init), a, rng);
    PosteriorSamples s(1, a.draws);
    s.metadata.model = "unigram";
    s.metadata.method = "advi";
    s.metadata.seed = a.seed;
    s.metadata.iters = r.iterations;
    s.metadata.extra["slot_times"] = times.str();
    s.metadata.extra["elbo_final"] = r.elbo_trace.empty() ? "" : std::to_string(r.elbo_trace.back());
    s.metadata.extra["converged"] = r.converged ? "true" : "false";
    if (!r.converged) s.metadata.warnings.push_back("ADVI stopped at max iterations before the ELBO converged");
    s.add_parameter("mu", 2, T, V);
    s.add_parameter("sigma2", 0, 1);
    const VectorXd sd = r.log_sd.array().exp();
    VectorXd q(r.mean.size());
    for (Index t = 0; t < a.draws; ++t) {
        for (Index i = 0; i < q.size(); ++i) q[i] = r.mean[i] + sd[i] * sample_normal(0.0, 1.0, rng);
        store_draw(s, 0, t, q);
    }
    return s;
}

}  // namespace plvm
