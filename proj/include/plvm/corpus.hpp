#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plvm/types.hpp"

namespace plvm {

struct Taxon {
    std::string family;
    long long phylo_index = 0;  // rank in tree order, 1..V
};

/// Sample-by-feature abundance table with optional sampling times and
/// per-feature taxonomy. Immutable after construction; every constructor
/// validates the invariants and throws DomainError on violation.
class CountMatrix {
public:
    CountMatrix() = default;

    CountMatrix(CountArray counts,
                std::vector<std::string> sample_ids,
                std::vector<std::string> feature_ids,
                std::optional<std::vector<double>> times = std::nullopt,
                std::optional<std::vector<Taxon>> taxonomy = std::nullopt);

    /// Generated ids s1..sD and f1..fV.
    explicit CountMatrix(CountArray counts, std::optional<std::vector<double>> times = std::nullopt);

    const CountArray &counts() const { return counts_; }
    const std::vector<std::string> &sample_ids() const { return sample_ids_; }
    const std::vector<std::string> &feature_ids() const { return feature_ids_; }
    const std::optional<std::vector<double>> &times() const { return times_; }
    const std::optional<std::vector<Taxon>> &taxonomy() const { return taxonomy_; }

    Index num_samples() const { return counts_.rows(); }
    Index num_features() const { return counts_.cols(); }
    bool has_times() const { return times_.has_value(); }

    /// Copy with different counts but the same ids and metadata.
    CountMatrix with_counts(CountArray counts) const;

    Index feature_index(const std::string &id) const;

private:
    CountArray counts_;
    std::vector<std::string> sample_ids_;
    std::vector<std::string> feature_ids_;
    std::optional<std::vector<double>> times_;
    std::optional<std::vector<Taxon>> taxonomy_;
};

CountMatrix read_counts(const std::filesystem::path &counts_path,
                        const std::optional<std::filesystem::path> &sample_meta_path = std::nullopt,
                        const std::optional<std::filesystem::path> &taxonomy_path = std::nullopt);

void write_counts(const CountMatrix &x, const std::filesystem::path &path);
void write_sample_meta(const CountMatrix &x, const std::filesystem::path &path);
void write_taxonomy(const CountMatrix &x, const std::filesystem::path &path);

/// N_d, total count per sample.
CountVector library_sizes(const CountMatrix &x);

enum class FilterMode { top_abundance, top_variance };

/// Keeps the m features with largest total count or largest variance of
/// asinh-transformed counts, in their original order. Ties go to the
/// lexicographically smaller feature id.
CountMatrix filter_features(const CountMatrix &x, FilterMode mode, Index m);

/// Indices of the features filter_features would keep, ascending.
std::vector<Index> select_features(const CountMatrix &x, FilterMode mode, Index m);

CountMatrix subset_features(const CountMatrix &x, const std::vector<Index> &keep);

/// Nonzero cells in row-major order.
struct Cell {
    Index doc;
    Index feature;
    Count count;
};

std::vector<Cell> nonzero_cells(const CountArray &x);

}  // namespace plvm
