#include "plvm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "plvm/csv.hpp"
#include "plvm/transforms.hpp"

namespace plvm {

namespace {

std::vector<std::string> numbered_ids(const char *prefix, Index n)
{
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i + 1));
    return ids;
}

void require_unique(const std::vector<std::string> &ids, const char *what)
{
    std::set<std::string> seen;
    for (const auto &id : ids)
        if (!seen.insert(id).second) throw DomainError(std::string("duplicate ") + what + " id '" + id + "'");
}

}  // namespace

CountMatrix::CountMatrix(CountArray counts,
                         std::vector<std::string> sample_ids,
                         std::vector<std::string> feature_ids,
                         std::optional<std::vector<double>> times,
                         std::optional<std::vector<Taxon>> taxonomy)
    : counts_(std::move(counts)),
      sample_ids_(std::move(sample_ids)),
      feature_ids_(std::move(feature_ids)),
      times_(std::move(times)),
      taxonomy_(std::move(taxonomy))
{
    if (static_cast<Index>(sample_ids_.size()) != counts_.rows())
        throw DomainError("CountMatrix: sample id count does not match rows");
    if (static_cast<Index>(feature_ids_.size()) != counts_.cols())
        throw DomainError("CountMatrix: feature id count does not match columns");
    if ((counts_.array() < 0).any()) throw DomainError("CountMatrix: negative count");
    require_unique(sample_ids_, "sample");
    require_unique(feature_ids_, "feature");
    if (times_) {
        if (static_cast<Index>(times_->size()) != counts_.rows())
            throw DomainError("CountMatrix: times must have one entry per sample");
        for (double t : *times_)
            if (!std::isfinite(t) || t < 0) throw DomainError("CountMatrix: times must be finite and >= 0");
    }
    if (taxonomy_) {
        if (static_cast<Index>(taxonomy_->size()) != counts_.cols())
            throw DomainError("CountMatrix: taxonomy must have one entry per feature");
        std::vector<long long> ranks;
        for (const auto &t : *taxonomy_) ranks.push_back(t.phylo_index);
        std::sort(ranks.begin(), ranks.end());
        for (std::size_t i = 0; i < ranks.size(); ++i)
            if (ranks[i] != static_cast<long long>(i) + 1)
                throw DomainError("CountMatrix: phylo_index must be a permutation of 1..V");
    }
}

CountMatrix::CountMatrix(CountArray counts, std::optional<std::vector<double>> times)
    : CountMatrix(counts, numbered_ids("s", counts.rows()), numbered_ids("f", counts.cols()), std::move(times))
{
}

CountMatrix CountMatrix::with_counts(CountArray counts) const
{
    return CountMatrix(std::move(counts), sample_ids_, feature_ids_, times_, taxonomy_);
}

Index CountMatrix::feature_index(const std::string &id) const
{
    const auto it = std::find(feature_ids_.begin(), feature_ids_.end(), id);
    if (it == feature_ids_.end()) throw BoundsError("unknown feature id '" + id + "'");
    return static_cast<Index>(it - feature_ids_.begin());
}

CountMatrix read_counts(const std::filesystem::path &counts_path,
                        const std::optional<std::filesystem::path> &sample_meta_path,
                        const std::optional<std::filesystem::path> &taxonomy_path)
{
    const auto lines = csv::read_lines(counts_path);
    if (lines.empty()) throw ParseError("counts file is empty", "header", "");
    const auto header = csv::split(lines.front());
    if (header.empty() || header.front() != "sample_id")
        throw ParseError("counts header must start with 'sample_id'", "header", header.empty() ? "" : header.front());
    std::vector<std::string> feature_ids(header.begin() + 1, header.end());
    for (const auto &f : feature_ids)
        if (f.empty()) throw ParseError("empty feature id in counts header", "header", "");
    {
        std::set<std::string> seen;
        for (const auto &f : feature_ids)
            if (!seen.insert(f).second) throw ParseError("duplicate feature id '" + f + "'", "header", f);
    }

    const Index D = static_cast<Index>(lines.size()) - 1;
    const Index V = static_cast<Index>(feature_ids.size());
    CountArray counts(D, V);
    std::vector<std::string> sample_ids;
    std::set<std::string> seen_samples;
    for (Index d = 0; d < D; ++d) {
        const auto fields = csv::split(lines[static_cast<std::size_t>(d) + 1]);
        const std::string row = fields.empty() ? "" : fields.front();
        if (static_cast<Index>(fields.size()) != V + 1)
            throw ParseError("row '" + row + "' has " + std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(V + 1),
                             row, "");
        if (row.empty()) throw ParseError("empty sample id on line " + std::to_string(d + 2), row, "sample_id");
        if (!seen_samples.insert(row).second) throw ParseError("duplicate sample id '" + row + "'", row, "sample_id");
        sample_ids.push_back(row);
        for (Index v = 0; v < V; ++v) {
            long long value = 0;
            const auto &cell = fields[static_cast<std::size_t>(v) + 1];
            if (!csv::parse_int(cell, value) || value < 0)
                throw ParseError("cell '" + cell + "' at (row " + row + ", column " +
                                     feature_ids[static_cast<std::size_t>(v)] + ") is not a nonnegative integer",
                                 row, feature_ids[static_cast<std::size_t>(v)]);
            counts(d, v) = value;
        }
    }

    std::optional<std::vector<double>> times;
    if (sample_meta_path) {
        const auto meta = csv::read_lines(*sample_meta_path);
        if (meta.empty() || csv::split(meta.front()) != std::vector<std::string>{"sample_id", "time"})
            throw ParseError("sample metadata header must be 'sample_id,time'", "header", "");
        std::unordered_map<std::string, Index> row_of;
        for (Index d = 0; d < D; ++d) row_of[sample_ids[static_cast<std::size_t>(d)]] = d;
        std::vector<double> t(static_cast<std::size_t>(D), 0.0);
        std::vector<bool> seen(static_cast<std::size_t>(D), false);
        for (std::size_t i = 1; i < meta.size(); ++i) {
            const auto fields = csv::split(meta[i]);
            const std::string row = fields.empty() ? "" : fields.front();
            if (fields.size() != 2) throw ParseError("metadata row '" + row + "' must have 2 fields", row, "");
            const auto it = row_of.find(row);
            if (it == row_of.end())
                throw ParseError("metadata sample id '" + row + "' not found in counts", row, "sample_id");
            double value = 0;
            if (!csv::parse_double(fields[1], value) || !std::isfinite(value) || value < 0)
                throw ParseError("time '" + fields[1] + "' at (row " + row + ", column time) is not a nonnegative decimal",
                                 row, "time");
            if (seen[static_cast<std::size_t>(it->second)])
                throw ParseError("duplicate metadata for sample '" + row + "'", row, "sample_id");
            seen[static_cast<std::size_t>(it->second)] = true;
            t[static_cast<std::size_t>(it->second)] = value;
        }
        for (Index d = 0; d < D; ++d)
            if (!seen[static_cast<std::size_t>(d)])
                throw ParseError("sample '" + sample_ids[static_cast<std::size_t>(d)] + "' has no time in metadata",
                                 sample_ids[static_cast<std::size_t>(d)], "time");
        times = std::move(t);
    }

    std::optional<std::vector<Taxon>> taxonomy;
    if (taxonomy_path) {
        const auto tax = csv::read_lines(*taxonomy_path);
        if (tax.empty() ||
            csv::split(tax.front()) != std::vector<std::string>{"feature_id", "family", "phylo_index"})
            throw ParseError("taxonomy header must be 'feature_id,family,phylo_index'", "header", "");
        std::unordered_map<std::string, Index> col_of;
        for (Index v = 0; v < V; ++v) col_of[feature_ids[static_cast<std::size_t>(v)]] = v;
        std::vector<Taxon> t(static_cast<std::size_t>(V));
        std::vector<bool> seen(static_cast<std::size_t>(V), false);
        for (std::size_t i = 1; i < tax.size(); ++i) {
            const auto fields = csv::split(tax[i]);
            const std::string row = fields.empty() ? "" : fields.front();
            if (fields.size() != 3) throw ParseError("taxonomy row '" + row + "' must have 3 fields", row, "");
            const auto it = col_of.find(row);
            if (it == col_of.end())
                throw ParseError("taxonomy feature id '" + row + "' not found in counts", row, "feature_id");
            long long rank = 0;
            if (!csv::parse_int(fields[2], rank))
                throw ParseError("phylo_index '" + fields[2] + "' at (row " + row + ", column phylo_index) is not an integer",
                                 row, "phylo_index");
            if (seen[static_cast<std::size_t>(it->second)])
                throw ParseError("duplicate taxonomy for feature '" + row + "'", row, "feature_id");
            seen[static_cast<std::size_t>(it->second)] = true;
            t[static_cast<std::size_t>(it->second)] = Taxon{fields[1], rank};
        }
        for (Index v = 0; v < V; ++v)
            if (!seen[static_cast<std::size_t>(v)])
                throw ParseError("feature '" + feature_ids[static_cast<std::size_t>(v)] + "' missing from taxonomy",
                                 feature_ids[static_cast<std::size_t>(v)], "feature_id");
        taxonomy = std::move(t);
    }

    try {
        return CountMatrix(std::move(counts), std::move(sample_ids), std::move(feature_ids), std::move(times),
                           std::move(taxonomy));
    } catch (const DomainError &e) {
        throw ParseError(e.what(), "", "");
    }
}

void write_counts(const CountMatrix &x, const std::filesystem::path &path)
{
    std::ostringstream out;
    out << "sample_id";
    for (const auto &f : x.feature_ids()) out << ',' << f;
    out << '\n';
    for (Index d = 0; d < x.num_samples(); ++d) {
        out << x.sample_ids()[static_cast<std::size_t>(d)];
        for (Index v = 0; v < x.num_features(); ++v) out << ',' << x.counts()(d, v);
        out << '\n';
    }
    csv::write_file(path, out.str());
}

void write_sample_meta(const CountMatrix &x, const std::filesystem::path &path)
{
    if (!x.has_times()) throw DomainError("write_sample_meta: matrix has no times");
    std::ostringstream out;
    out << "sample_id,time\n";
    for (Index d = 0; d < x.num_samples(); ++d)
        out << x.sample_ids()[static_cast<std::size_t>(d)] << ','
            << csv::format_double((*x.times())[static_cast<std::size_t>(d)]) << '\n';
    csv::write_file(path, out.str());
}

void write_taxonomy(const CountMatrix &x, const std::filesystem::path &path)
{
    if (!x.taxonomy()) throw DomainError("write_taxonomy: matrix has no taxonomy");
    std::ostringstream out;
    out << "feature_id,family,phylo_index\n";
    for (Index v = 0; v < x.num_features(); ++v) {
        const auto &t = (*x.taxonomy())[static_cast<std::size_t>(v)];
        out << x.feature_ids()[static_cast<std::size_t>(v)] << ',' << t.family << ',' << t.phylo_index << '\n';
    }
    csv::write_file(path, out.str());
}

CountVector library_sizes(const CountMatrix &x)
{
    return x.counts().rowwise().sum();
}

std::vector<Index> select_features(const CountMatrix &x, FilterMode mode, Index m)
{
    const Index V = x.num_features();
    if (m < 1 || m > V) throw BoundsError("filter_features: m must lie in [1, V]");

    VectorXd score(V);
    if (mode == FilterMode::top_abundance) {
        score = x.counts().colwise().sum().transpose().cast<double>();
    } else {
        const MatrixXd t = asinh_transform_matrix(x.counts());
        const Index D = t.rows();
        for (Index v = 0; v < V; ++v) {
            const double mean = t.col(v).mean();
            score[v] = D > 1 ? (t.col(v).array() - mean).square().sum() / static_cast<double>(D - 1) : 0.0;
        }
    }

    std::vector<Index> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), Index{0});
    const auto &ids = x.feature_ids();
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(m));
    std::sort(order.begin(), order.end());
    return order;
}

CountMatrix subset_features(const CountMatrix &x, const std::vector<Index> &keep)
{
    CountArray counts(x.num_samples(), static_cast<Index>(keep.size()));
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        if (keep[j] < 0 || keep[j] >= x.num_features()) throw BoundsError("subset_features: index out of range");
        counts.col(static_cast<Index>(j)) = x.counts().col(keep[j]);
        ids.push_back(x.feature_ids()[static_cast<std::size_t>(keep[j])]);
    }
    std::optional<std::vector<Taxon>> taxonomy;
    if (x.taxonomy()) {
        std::vector<Taxon> t;
        for (Index v : keep) t.push_back((*x.taxonomy())[static_cast<std::size_t>(v)]);
        // Re-rank the retained phylo indices to 1..m, preserving tree order.
        std::vector<std::size_t> order(t.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return t[a].phylo_index < t[b].phylo_index; });
        for (std::size_t r = 0; r < order.size(); ++r) t[order[r]].phylo_index = static_cast<long long>(r) + 1;
        taxonomy = std::move(t);
    }
    return CountMatrix(std::move(counts), x.sample_ids(), std::move(ids), x.times(), std::move(taxonomy));
}

CountMatrix filter_features(const CountMatrix &x, FilterMode mode, Index m)
{
    return subset_features(x, select_features(x, mode, m));
}

std::vector<Cell> nonzero_cells(const CountArray &x)
{
    std::vector<Cell> cells;
    for (Index d = 0; d < x.rows(); ++d)
        for (Index v = 0; v < x.cols(); ++v)
            if (x(d, v) > 0) cells.push_back(Cell{d, v, x(d, v)});
    return cells;
}

}  // namespace plvm
