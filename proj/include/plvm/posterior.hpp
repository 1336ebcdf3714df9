#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "plvm/types.hpp"

namespace plvm {

struct SampleMetadata {
    std::string model;
    std::string method;
    std::uint64_t seed = 0;
    long warmup = 0;
    long iters = 0;
    long thin = 1;
    std::vector<std::string> warnings;
    std::map<std::string, std::string> extra;
};

/// Draws for one named parameter. Each draw is a rows x cols block; rank
/// records whether the parameter is a scalar (0), vector (1) or matrix (2).
struct ParamDraws {
    int rank = 0;
    Index rows = 1;
    Index cols = 1;
    std::vector<double> values;  // [chain][draw][col-major entry]
};

/// Store of posterior draws keyed by parameter name, with axes
/// (chain, draw, index...). All parameters share the (chain, draw) shape.
class PosteriorSamples {
public:
    PosteriorSamples() = default;
    PosteriorSamples(Index chains, Index draws);

    Index num_chains() const { return chains_; }
    Index num_draws() const { return draws_; }
    Index total_draws() const { return chains_ * draws_; }
    bool empty() const { return params_.empty() || total_draws() == 0; }

    /// Registers a parameter; values start at zero.
    void add_parameter(const std::string &name, int rank, Index rows, Index cols = 1);

    bool has(const std::string &name) const { return params_.count(name) > 0; }
    const ParamDraws &param(const std::string &name) const;
    std::vector<std::string> names() const;

    void set_draw(const std::string &name, Index chain, Index draw, const Eigen::Ref<const MatrixXd> &value);
    void set_scalar(const std::string &name, Index chain, Index draw, double value);
    void set_entry(const std::string &name, Index chain, Index draw, Index row, Index col, double value);

    MatrixXd draw(const std::string &name, Index chain, Index draw) const;

    /// Draw number `flat` with chains concatenated in order.
    MatrixXd pooled_draw(const std::string &name, Index flat) const;

    /// All draws of one scalar entry, shape draws x chains.
    MatrixXd entry_draws(const std::string &name, Index row, Index col = 0) const;

    /// Entrywise posterior median over pooled draws.
    MatrixXd median(const std::string &name) const;
    MatrixXd mean(const std::string &name) const;

    /// New store keeping only the given chains, in the given order.
    PosteriorSamples select_chains(const std::vector<Index> &order) const;

    /// Stacks the chains of several stores with identical parameters and draws.
    static PosteriorSamples concat_chains(const std::vector<PosteriorSamples> &parts);

    SampleMetadata metadata;

private:
    Index chains_ = 0;
    Index draws_ = 0;
    std::map<std::string, ParamDraws> params_;

    ParamDraws &mutable_param(const std::string &name);
    std::size_t offset(const ParamDraws &p, Index chain, Index draw) const;
};

/// Type-7 (linear interpolation) sample quantile of already-sorted values.
double quantile_sorted(const std::vector<double> &sorted, double prob);
double quantile_type7(std::vector<double> values, double prob);

struct SummaryRow {
    std::string param;
    Index row = 0;
    Index col = 0;
    double median = 0;
    std::vector<double> quantiles;
    double sd = 0;
};

/// Per-scalar summaries pooled over chains. Requires >= 2 retained draws.
std::vector<SummaryRow> summarize_posterior(const PosteriorSamples &s, const std::vector<double> &probs);

struct DiagnosticRow {
    std::string param;
    Index row = 0;
    Index col = 0;
    double rhat = 1;
    double ess = 0;
    bool degenerate = false;
};

/// Split-Rhat and autocorrelation-based effective sample size per scalar.
/// Requires >= 2 chains with >= 4 draws each.
std::vector<DiagnosticRow> diagnostics(const PosteriorSamples &s);

/// Split-Rhat of a draws x chains block; +inf when chains are constant but
/// disagree, 1 with `degenerate` set when everything is constant.
double split_rhat(const MatrixXd &draws, bool *degenerate = nullptr);

/// Effective sample size of a draws x chains block (initial positive
/// sequence truncation).
double effective_sample_size(const MatrixXd &draws);

// CSV layout: param,idx1,idx2,chain,draw,value (0-based indices; idx1/idx2
// empty for scalars, idx2 empty for vectors). Metadata goes to a JSON sidecar.
void write_samples(const PosteriorSamples &s, const std::filesystem::path &csv_path,
                   const std::filesystem::path &json_path);
PosteriorSamples read_samples(const std::filesystem::path &csv_path, const std::filesystem::path &json_path);

std::string samples_to_csv(const PosteriorSamples &s);
std::string metadata_to_json(const PosteriorSamples &s);

void write_summary_csv(const std::vector<SummaryRow> &rows, const std::vector<double> &probs,
                       const std::filesystem::path &path);
void write_diagnostics_csv(const std::vector<DiagnosticRow> &rows, const std::filesystem::path &path);

}  // namespace plvm
