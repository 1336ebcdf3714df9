#include "plvm/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

namespace plvm {

namespace {

void require(bool ok, const char *what)
{
    if (!ok) throw DomainError(what);
}

}  // namespace

double sample_gamma(double shape, double rate, Rng &rng)
{
    require(std::isfinite(shape) && shape > 0 && std::isfinite(rate) && rate > 0,
            "gamma: shape and rate must be finite and > 0");
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    return dist(rng);
}

double sample_inv_gamma(double shape, double scale, Rng &rng)
{
    require(std::isfinite(shape) && shape > 0 && std::isfinite(scale) && scale > 0,
            "inv_gamma: shape and scale must be finite and > 0");
    return 1.0 / sample_gamma(shape, scale, rng);
}

double sample_normal(double mean, double variance, Rng &rng)
{
    require(std::isfinite(mean) && std::isfinite(variance) && variance >= 0,
            "normal: mean finite and variance >= 0 required");
    if (variance == 0) return mean;
    std::normal_distribution<double> dist(mean, std::sqrt(variance));
    return dist(rng);
}

Count sample_poisson(double mean, Rng &rng)
{
    require(std::isfinite(mean) && mean >= 0, "poisson: mean must be finite and >= 0");
    if (mean == 0) return 0;
    std::poisson_distribution<Count> dist(mean);
    return dist(rng);
}

Count sample_binomial(Count trials, double prob, Rng &rng)
{
    require(trials >= 0, "binomial: trials must be >= 0");
    require(prob >= 0 && prob <= 1, "binomial: probability outside [0, 1]");
    if (trials == 0 || prob == 0) return 0;
    if (prob == 1) return trials;
    std::binomial_distribution<Count> dist(trials, prob);
    return dist(rng);
}

VectorXd sample_dirichlet(const VectorXd &alpha, Rng &rng)
{
    require(alpha.size() > 0 && alpha.allFinite() && (alpha.array() > 0).all(),
            "dirichlet: concentrations must be finite and > 0");
    const Index n = alpha.size();
    if (n == 1) return VectorXd::Ones(1);

    // log G_i, with G ~ Gamma(a) drawn as Gamma(a + 1) * U^(1/a) when a < 1
    // so tiny concentrations do not underflow to an all-zero vector.
    VectorXd logs(n);
    for (Index i = 0; i < n; ++i) {
        const double a = alpha[i];
        if (a >= 1) {
            logs[i] = std::log(sample_gamma(a, 1.0, rng));
        } else {
            const double g = sample_gamma(a + 1.0, 1.0, rng);
            double u = rng.uniform();
            while (u == 0.0) u = rng.uniform();
            logs[i] = std::log(g) + std::log(u) / a;
        }
    }
    return softmax(logs);
}

CountVector sample_multinomial_weights(Count trials, const VectorXd &weights, Rng &rng)
{
    require(trials >= 0, "multinomial: trials must be >= 0");
    require(weights.size() > 0 && weights.allFinite() && (weights.array() >= 0).all(),
            "multinomial: weights must be finite and >= 0");
    double remaining_mass = weights.sum();
    require(remaining_mass > 0, "multinomial: weights sum to zero");

    CountVector out = CountVector::Zero(weights.size());
    Count remaining = trials;
    for (Index k = 0; k + 1 < weights.size() && remaining > 0; ++k) {
        const double p = remaining_mass > 0 ? std::clamp(weights[k] / remaining_mass, 0.0, 1.0) : 0.0;
        out[k] = sample_binomial(remaining, p, rng);
        remaining -= out[k];
        remaining_mass -= weights[k];
    }
    if (remaining > 0) {
        // Put the leftover in the last category with positive weight.
        Index last = weights.size() - 1;
        while (last > 0 && weights[last] == 0) --last;
        out[last] += remaining;
    }
    return out;
}

CountVector sample_multinomial(Count trials, const ProbVector &p, Rng &rng)
{
    return sample_multinomial_weights(trials, p.values(), rng);
}

Index sample_categorical(std::span<const double> weights, Rng &rng)
{
    double total = 0;
    for (double w : weights) total += w;
    require(total > 0 && std::isfinite(total), "categorical: weights must have a positive finite sum");
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        u -= weights[k];
        if (u < 0) return static_cast<Index>(k);
    }
    for (std::size_t k = weights.size(); k-- > 0;)
        if (weights[k] > 0) return static_cast<Index>(k);
    return 0;
}

double log_factorial(Count n)
{
    return std::lgamma(static_cast<double>(n) + 1.0);
}

double log_multinomial_pmf(const Eigen::Ref<const CountVector> &x, const Eigen::Ref<const VectorXd> &p)
{
    if (x.size() != p.size()) throw DomainError("multinomial pmf: size mismatch");
    Count total = 0;
    double out = 0;
    for (Index v = 0; v < x.size(); ++v) {
        if (x[v] < 0) throw DomainError("multinomial pmf: negative count");
        if (x[v] == 0) continue;
        if (p[v] <= 0) return -std::numeric_limits<double>::infinity();
        total += x[v];
        out += static_cast<double>(x[v]) * std::log(p[v]) - log_factorial(x[v]);
    }
    return out + log_factorial(total);
}

double log_poisson_pmf(Count x, double mean)
{
    if (x < 0) throw DomainError("poisson pmf: negative count");
    if (x == 0) return -mean;
    if (mean <= 0) return -std::numeric_limits<double>::infinity();
    return static_cast<double>(x) * std::log(mean) - mean - log_factorial(x);
}

double log_gamma_pdf(double x, double shape, double rate)
{
    if (x <= 0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_inv_gamma_pdf(double x, double shape, double scale)
{
    if (x <= 0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double log_normal_pdf(double x, double mean, double variance)
{
    const double r = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + r * r / variance);
}

double log_dirichlet_pdf(const VectorXd &x, const VectorXd &alpha)
{
    if (x.size() != alpha.size()) throw DomainError("dirichlet pdf: size mismatch");
    double out = std::lgamma(alpha.sum());
    for (Index i = 0; i < x.size(); ++i) {
        out -= std::lgamma(alpha[i]);
        out += (alpha[i] - 1.0) * std::log(x[i]);
    }
    return out;
}

double digamma(double x)
{
    return boost::math::digamma(x);
}

VectorXd dirichlet_expected_log(const Eigen::Ref<const VectorXd> &alpha)
{
    const double total = digamma(alpha.sum());
    VectorXd out(alpha.size());
    for (Index i = 0; i < alpha.size(); ++i) out[i] = digamma(alpha[i]) - total;
    return out;
}

}  // namespace plvm
