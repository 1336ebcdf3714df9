#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/gap.hpp"
#include "plvm/lda.hpp"
#include "plvm/posterior.hpp"
#include "plvm/rng.hpp"

namespace plvm {

/// Point parameters by name, e.g. {"theta": D x K, "beta": V x K}.
using ParamSet = std::map<std::string, MatrixXd>;

using SimulateFn = std::function<CountMatrix(const ParamSet &, Rng &)>;
/// May throw; a throwing replicate is counted as failed and skipped.
using RefitFn = std::function<ParamSet(const CountMatrix &, Rng &)>;

struct BootstrapOptions {
    int replicates = 50;
    std::uint64_t seed = 0;
    int threads = 0;
    double max_failure_fraction = 0.2;
    std::string align_param = "beta";                         // matched against the original fit
    std::vector<std::string> topic_params = {"theta", "beta"};  // columns reordered by the match
};

/// Replicate b simulates from `fitted` and refits on stream b of opts.seed,
/// then has its topic columns aligned to `fitted`. Surviving replicates are
/// stored as the draws of a single chain, in replicate order. Throws
/// NumericalError when more than max_failure_fraction of replicates fail.
PosteriorSamples parametric_bootstrap(const ParamSet &fitted, const SimulateFn &simulate, const RefitFn &refit,
                                      const BootstrapOptions &opts);

/// LDA: replicates keep the observed N_d and are refit by CAVI.
PosteriorSamples lda_bootstrap(const CountMatrix &x, const LdaVariationalFit &fit, const DirichletPrior &alpha,
                               const DirichletPrior &gamma, const CaviOptions &cavi, const BootstrapOptions &opts);

/// GaP / Z-GaP: replicates drawn from Poi(Theta B^T) with structural zeros at
/// rate p0, refit by CAVI with the same p0.
PosteriorSamples gap_bootstrap(const CountMatrix &x, const GapVariationalFit &fit, const GapHyper &hyper, double p0,
                               const CaviOptions &cavi, const BootstrapOptions &opts);

}  // namespace plvm
