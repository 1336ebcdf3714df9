#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/posterior.hpp"
#include "plvm/rng.hpp"
#include "plvm/types.hpp"

namespace plvm {

enum class ModelKind { dmm, lda, gap, unigram };

ModelKind model_kind_from_string(const std::string &name);
std::string to_string(ModelKind kind);

struct PredictiveOptions {
    double p0 = 0;   // structural-zero rate for GaP replicates
    int threads = 0;
};

/// S replicated datasets. Each picks one pooled posterior draw uniformly with
/// replacement and simulates from it: LDA, DMM and unigram keep the observed
/// N_d, GaP draws its own totals. Replicate s uses its own split stream.
std::vector<CountMatrix> draw_posterior_predictive(ModelKind model, const CountMatrix &observed,
                                                   const PosteriorSamples &s, Index S, Rng &rng,
                                                   const PredictiveOptions &opts = {});

/// One statistic: observed values and one row of reference values per replicate.
struct PpcReport {
    std::string statistic;
    std::vector<std::string> features;  // per element, may be empty
    std::vector<std::string> times;     // per element, may be empty
    VectorXd observed;
    MatrixXd replicates;  // S x n

    Index size() const { return observed.size(); }
    Index num_replicates() const { return replicates.rows(); }
};

enum class StatKind { mean, variance, histogram };

struct StatSpec {
    StatKind kind = StatKind::mean;
    std::vector<double> edges;  // histogram bins [e_i, e_{i+1}); the last edge may be +inf
};

/// Per-feature mean or variance (n - 1) over samples, or the histogram of all
/// entries.
PpcReport ppc_scalar_stats(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                           const StatSpec &spec);

/// asinh(x_dv) for each listed feature and each sample, keyed by (feature, time).
PpcReport ppc_timeseries(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                         const std::vector<std::string> &feature_ids);

/// Per element, whether the observed value lies outside the [lo, hi] type-7
/// quantile band of the replicates.
std::vector<bool> outside_band(const PpcReport &report, double lo = 0.025, double hi = 0.975);

struct PcaSummary {
    VectorXd eigenvalues;  // squared singular values / (D - 1), nonincreasing
    MatrixXd left;         // D x r, unit-norm left singular vectors
    MatrixXd scores;       // D x r, left singular vectors times singular values
    MatrixXd loadings;     // m x r, unit-norm right singular vectors
};

/// Top-r SVD summary of a D x m matrix, columns optionally centered first.
PcaSummary pca_summary(const MatrixXd &data, Index r, bool center = true);

struct PcaOptions {
    Index rank = 5;
    Index features = 0;  // top-variance features kept; 0 keeps all
    bool center = true;
};

struct PcaCheck {
    std::vector<Index> features;  // selected on the observed data
    PcaSummary observed;
    std::vector<PcaSummary> replicates;
};

/// asinh transform, top-variance selection on the observed data (the same
/// columns are used for every replicate), then pca_summary.
PcaCheck ppc_pca(const CountMatrix &observed, const std::vector<CountMatrix> &replicates, const PcaOptions &opts);

/// Orthogonal R minimizing ||target.scores R - reference.scores||_F, applied
/// to the scores, left vectors and loadings of `target`.
PcaSummary procrustes_align(const PcaSummary &reference, const PcaSummary &target, MatrixXd *rotation = nullptr);

/// Type-7 quantiles of all pooled entries, observed vs each replicate.
PpcReport ppc_quantile_qq(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                          const std::vector<double> &grid);

/// score_v = mean over (sample, replicate) of |asinh x_dv - asinh x*_dv|,
/// sorted descending (ties keep feature order).
std::vector<std::pair<std::string, double>> species_discrepancy(const CountMatrix &observed,
                                                                const std::vector<CountMatrix> &replicates);

/// CSV with columns statistic,feature,time,kind,replicate_id,value.
std::string ppc_reports_to_csv(const std::vector<PpcReport> &reports);
void write_ppc_reports(const std::vector<PpcReport> &reports, const std::filesystem::path &path);
/// Inverse of write_ppc_reports; statistics and elements keep file order.
std::vector<PpcReport> read_ppc_reports(const std::filesystem::path &path);

}  // namespace plvm
