#pragma once

#include <string>
#include <vector>

#include "plvm/gap.hpp"
#include "plvm/posterior.hpp"
#include "plvm/types.hpp"

namespace plvm {

/// Matching of estimated topics to reference topics: reference topic k is
/// paired with estimated topic perm[k]. Scores are the correlations at the
/// time each pair was selected.
struct TopicPermutation {
    std::vector<Index> perm;
    std::vector<double> match_scores;
    std::vector<bool> flagged;  // reference topic involved a constant column

    Index size() const { return static_cast<Index>(perm.size()); }
    TopicPermutation inverse() const;
    static TopicPermutation identity(Index k);
};

/// Greedy matching on Pearson correlations of sqrt-transformed columns:
/// repeatedly take the unmatched (reference, estimate) pair with the highest
/// correlation. Ties go to the smallest (reference, estimate) index pair.
/// Constant columns score -inf and are matched last, with a flag.
TopicPermutation align_topics(const MatrixXd &reference, const MatrixXd &estimated);

/// Columns reordered so column k of the result is column perm[k] of `topics`.
MatrixXd apply_alignment(const MatrixXd &topics, const TopicPermutation &perm);

/// Reorders the topic axis (columns) of each listed parameter in every draw.
/// Parameters not present are skipped. For vector parameters (e.g. DMM
/// mixing weights) the rows are reordered.
PosteriorSamples apply_alignment(const PosteriorSamples &s, const TopicPermutation &perm,
                                 const std::vector<std::string> &topic_params = {"theta", "beta"});

/// Rescales each column of B to sum 1 and multiplies the matching column of
/// Theta by the old column sum, leaving Theta B^T unchanged up to round-off.
/// All-zero columns are left as they are and flagged.
GapParams normalize_gap_scale(const GapParams &params, std::vector<bool> *flagged = nullptr);
/// Same, applied to every (theta, beta) draw of a store.
PosteriorSamples normalize_gap_scale(const PosteriorSamples &s);

std::string permutation_to_json(const TopicPermutation &perm);
TopicPermutation permutation_from_json(const std::string &text);

}  // namespace plvm
