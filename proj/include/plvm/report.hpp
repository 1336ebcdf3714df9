#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plvm/corpus.hpp"
#include "plvm/posterior.hpp"
#include "plvm/ppc.hpp"
#include "plvm/rng.hpp"
#include "plvm/types.hpp"

namespace plvm {

/// r_kv = beta_kv - sum_{k' != k} beta_k'v, as a V x K matrix.
MatrixXd representativeness_scores(const MatrixXd &beta);

struct RepresentativenessRow {
    std::string feature_id;
    Index topic = 0;
    double score = 0;
    Index rank = 0;  // 1-based within the topic
};

/// The top_m features of topic k by descending score; ties by feature id.
std::vector<RepresentativenessRow> topic_representativeness(const MatrixXd &beta,
                                                            const std::vector<std::string> &feature_ids, Index k,
                                                            Index top_m);

struct FamilyRow {
    std::string family;
    Index topic = 0;
    double mean_score = 0;
    Index size = 0;
};

/// Mean score per (family, topic), families in lexicographic order. Features
/// with an empty family are grouped under "unknown".
std::vector<FamilyRow> family_representativeness(const MatrixXd &beta, const CountMatrix &x);

enum class PlotKind { theta_boxes, beta_intervals, mu_intervals, ppc_overlay, representativeness, qq };

PlotKind plot_kind_from_string(const std::string &name);
std::string to_string(PlotKind kind);

/// Quantile levels of every interval export: 2.5, 25, 50, 75 and 97.5%.
const std::vector<double> &export_quantiles();

// CSV schemas:
//   theta_boxes        sample_id,time,topic,q025,q25,q50,q75,q975       (theta, simplex scale)
//   beta_intervals     feature_id,family,topic,q025,q25,q50,q75,q975    (g scale per topic)
//   mu_intervals       feature_id,time,q025,q25,q50,q75,q975            (g scale per slot)
//   ppc_overlay        feature_id,time,observed,q025,q25,q50,q75,q975   (asinh scale)
//   representativeness topic,rank,feature_id,score
//   qq                 replicate_id,prob,observed,replicate,observed_jittered,replicate_jittered,jitter_width
// The g transform is applied to each draw before quantiles are taken.
std::string export_theta_boxes(const PosteriorSamples &s, const CountMatrix &x);
std::string export_beta_intervals(const PosteriorSamples &s, const CountMatrix &x);
/// Requires sample times; slots follow make_time_slots.
std::string export_mu_intervals(const PosteriorSamples &s, const CountMatrix &x);
/// Requires a timeseries report.
std::string export_ppc_overlay(const PpcReport &timeseries);
std::string export_representativeness(const MatrixXd &beta, const std::vector<std::string> &feature_ids,
                                      Index top_m);
/// Uniform [0, width] jitter is added here only, never in the ppc module.
std::string export_qq(const PpcReport &qq, Rng &rng, double width = 0.2);

}  // namespace plvm
