#pragma once

#include <span>

#include "plvm/rng.hpp"
#include "plvm/transforms.hpp"
#include "plvm/types.hpp"

namespace plvm {

// Samplers. Gamma variates use the shape-rate convention (mean = shape / rate)
// everywhere in the library.

double sample_gamma(double shape, double rate, Rng &rng);

/// Inverse-gamma with density proportional to x^(-shape-1) exp(-scale / x).
double sample_inv_gamma(double shape, double scale, Rng &rng);

double sample_normal(double mean, double variance, Rng &rng);

Count sample_poisson(double mean, Rng &rng);

Count sample_binomial(Count trials, double prob, Rng &rng);

/// Normalized gamma draws; small concentrations are handled in log space.
VectorXd sample_dirichlet(const VectorXd &alpha, Rng &rng);

/// Sequential binomial conditioning; the result sums to `trials`.
CountVector sample_multinomial(Count trials, const ProbVector &p, Rng &rng);

/// Same as above but accepts any nonnegative weights with positive sum.
CountVector sample_multinomial_weights(Count trials, const VectorXd &weights, Rng &rng);

/// Index drawn proportionally to nonnegative weights.
Index sample_categorical(std::span<const double> weights, Rng &rng);

// Log densities.

double log_factorial(Count n);

/// log Mult(x | sum(x), p), including the multinomial coefficient.
/// Returns -inf when some x_v > 0 has p_v == 0.
double log_multinomial_pmf(const Eigen::Ref<const CountVector> &x, const Eigen::Ref<const VectorXd> &p);

double log_poisson_pmf(Count x, double mean);

double log_gamma_pdf(double x, double shape, double rate);

double log_inv_gamma_pdf(double x, double shape, double scale);

double log_normal_pdf(double x, double mean, double variance);

double log_dirichlet_pdf(const VectorXd &x, const VectorXd &alpha);

/// E[log x] under Dirichlet(alpha), one entry per component.
VectorXd dirichlet_expected_log(const Eigen::Ref<const VectorXd> &alpha);

double digamma(double x);

}  // namespace plvm
