#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plvm/options.hpp"
#include "plvm/posterior.hpp"
#include "plvm/types.hpp"
#include "plvm/unigram.hpp"

namespace plvm {

/// sqrt(mean_k (sqrt(median_vk) - sqrt(truth_vk))^2) per row v.
VectorXd rmse_sqrt_medians(const MatrixXd &truth, const MatrixXd &median);
/// Same, with the medians taken from the (already aligned) draws of `param`.
VectorXd rmse_sqrt_medians(const MatrixXd &truth, const PosteriorSamples &aligned, const std::string &param = "beta");

/// Sample SD (n - 1) of sqrt(param_v0) over pooled draws, per row v.
VectorXd sd_along_first_topic(const PosteriorSamples &aligned, const std::string &param = "beta");

struct StudyCell {
    Index D = 20;
    Index V = 325;
    double N = 1625;  // per-sample total, or E[N] for GaP
};

/// Simulation grid. Cells are the cross product of D, V and N unless an
/// explicit cell list is given. For model "zgap" the data use each true p0
/// and are fit twice: assuming p0 = 0 ("gap" rows) and given the true p0
/// ("zgap" rows). Unigram trajectories are compared on the raw logit scale:
/// per feature, RMSE over slots of the posterior median of mu, and the SD of
/// the slot-0 draws; sample d is observed at slot d mod T.
struct StudyGrid {
    std::string model = "lda";  // lda | gap | zgap | unigram
    std::vector<Index> D{20, 100};
    std::vector<Index> V{50, 325};
    std::vector<double> N{1625, 6500};
    std::vector<StudyCell> cells;  // overrides the cross product when nonempty
    Index K = 2;
    double alpha = 1;
    double gamma = 1;
    std::vector<double> p0{0.0};
    Index T = 10;            // unigram slots; D samples are spread over them
    double sigma0_sq = 1;
    std::vector<std::string> methods{"gibbs", "vb", "bootstrap"};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    GibbsOptions gibbs{600, 300, 1, 2, 0, 1};
    CaviOptions cavi{500, 1e-6, 3, 0, 0.5, 1};
    int bootstrap_replicates = 50;
    Index vb_draws = 300;
    HmcOptions hmc;
    AdviOptions advi;
    bool normalize_gap = true;  // compare GaP on column-normalized scale
    bool save_draws = true;
    bool record_runtime = true;
    int threads = 0;

    std::vector<StudyCell> expanded_cells() const;
    void validate() const;
    /// Appends one message per invalid setting.
    void collect_problems(std::vector<std::string> &problems) const;
};

/// Parses a grid JSON object. Unknown keys and invalid values are reported
/// together in one ConfigError.
StudyGrid parse_grid(const std::string &json_text);
StudyGrid read_grid(const std::filesystem::path &path);

/// Per-row error and uncertainty for one parameter; rows are labeled by
/// feature id (beta, mu) or sample id (theta).
struct ParamSummary {
    std::string param;
    std::vector<std::string> labels;
    VectorXd rmse;
    VectorXd sd;
};

struct CellResult {
    std::string model;   // fitted model label
    std::string method;
    Index D = 0;
    Index V = 0;
    double N = 0;
    double p0 = 0;       // true zero-inflation rate of the data
    std::uint64_t seed = 0;
    std::vector<ParamSummary> params;
    double runtime_s = 0;
    std::vector<std::string> flags;
    bool failed = false;
    std::string reason;
};

/// Mean of the per-row RMSE of `param` (NaN when absent or failed).
double mean_rmse(const CellResult &r, const std::string &param = "beta");

/// Simulates every (cell, p0, seed), runs every method, aligns to the truth
/// and summarizes. With out_dir set, writes summary.csv, failures.csv, and
/// raw draws under out_dir/draws when save_draws is on. Failures are
/// recorded and the study continues. Results are ordered by job, not by
/// completion.
std::vector<CellResult> run_study(const StudyGrid &grid, const std::optional<std::filesystem::path> &out_dir = {});

/// Columns model,method,D,V,N,p0,seed,param,feature,rmse,sd,runtime_s,flags.
std::string study_summary_csv(const std::vector<CellResult> &results);

}  // namespace plvm
