#include "plvm/report.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "plvm/csv.hpp"
#include "plvm/transforms.hpp"
#include "plvm/unigram.hpp"

namespace plvm {

MatrixXd representativeness_scores(const MatrixXd &beta)
{
    const VectorXd total = beta.rowwise().sum();
    MatrixXd r(beta.rows(), beta.cols());
    for (Index k = 0; k < beta.cols(); ++k) r.col(k) = 2 * beta.col(k) - total;
    return r;
}

std::vector<RepresentativenessRow> topic_representativeness(const MatrixXd &beta,
                                                            const std::vector<std::string> &feature_ids, Index k,
                                                            Index top_m)
{
    const Index V = beta.rows();
    if (static_cast<Index>(feature_ids.size()) != V) throw DomainError("representativeness: feature id count differs");
    if (k < 0 || k >= beta.cols()) throw BoundsError("representativeness: topic index out of range");
    if (top_m < 0 || top_m > V) throw BoundsError("representativeness: top_m must lie in [0, V]");
    const VectorXd r = representativeness_scores(beta).col(k);
    std::vector<Index> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (r[a] != r[b]) return r[a] > r[b];
        return feature_ids[static_cast<std::size_t>(a)] < feature_ids[static_cast<std::size_t>(b)];
    });
    std::vector<RepresentativenessRow> out;
    for (Index i = 0; i < top_m; ++i) {
        const Index v = order[static_cast<std::size_t>(i)];
        out.push_back({feature_ids[static_cast<std::size_t>(v)], k, r[v], i + 1});
    }
    return out;
}

std::vector<FamilyRow> family_representativeness(const MatrixXd &beta, const CountMatrix &x)
{
    if (!x.taxonomy()) throw ConfigError("family_representativeness: taxonomy is required");
    if (beta.rows() != x.num_features()) throw DomainError("family_representativeness: beta rows differ from V");
    const MatrixXd r = representativeness_scores(beta);
    std::map<std::string, std::vector<Index>> groups;
    for (Index v = 0; v < x.num_features(); ++v) {
        const std::string &f = (*x.taxonomy())[static_cast<std::size_t>(v)].family;
        groups[f.empty() ? "unknown" : f].push_back(v);
    }
    std::vector<FamilyRow> out;
    for (const auto &[family, members] : groups)
        for (Index k = 0; k < beta.cols(); ++k) {
            double sum = 0;
            for (Index v : members) sum += r(v, k);
            out.push_back({family, k, sum / static_cast<double>(members.size()), static_cast<Index>(members.size())});
        }
    return out;
}

PlotKind plot_kind_from_string(const std::string &name)
{
    if (name == "theta_boxes") return PlotKind::theta_boxes;
    if (name == "beta_intervals") return PlotKind::beta_intervals;
    if (name == "mu_intervals") return PlotKind::mu_intervals;
    if (name == "ppc_overlay") return PlotKind::ppc_overlay;
    if (name == "representativeness") return PlotKind::representativeness;
    if (name == "qq") return PlotKind::qq;
    throw ConfigError("unknown report kind '" + name + "'");
}

std::string to_string(PlotKind kind)
{
    switch (kind) {
    case PlotKind::theta_boxes: return "theta_boxes";
    case PlotKind::beta_intervals: return "beta_intervals";
    case PlotKind::mu_intervals: return "mu_intervals";
    case PlotKind::ppc_overlay: return "ppc_overlay";
    case PlotKind::representativeness: return "representativeness";
    case PlotKind::qq: return "qq";
    }
    return "";
}

const std::vector<double> &export_quantiles()
{
    static const std::vector<double> q{0.025, 0.25, 0.5, 0.75, 0.975};
    return q;
}

namespace {

constexpr const char *kQuantileHeader = "q025,q25,q50,q75,q975";

/// Entrywise quantiles over pooled draws of f(draw); returns one matrix per level.
template <typename Fn>
std::vector<MatrixXd> draw_quantiles(const PosteriorSamples &s, const std::string &name, Fn &&f)
{
    const Index n = s.total_draws();
    if (n < 1) throw ConfigError("report: no posterior draws");
    std::vector<MatrixXd> mapped;
    mapped.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) mapped.push_back(f(s.pooled_draw(name, i)));
    const Index rows = mapped[0].rows();
    const Index cols = mapped[0].cols();
    const auto &levels = export_quantiles();
    std::vector<MatrixXd> out(levels.size(), MatrixXd(rows, cols));
    std::vector<double> v(static_cast<std::size_t>(n));
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) {
            for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = mapped[static_cast<std::size_t>(i)](r, c);
            std::sort(v.begin(), v.end());
            for (std::size_t q = 0; q < levels.size(); ++q) out[q](r, c) = quantile_sorted(v, levels[q]);
        }
    return out;
}

void write_quantiles(std::ostream &out, const std::vector<MatrixXd> &q, Index r, Index c)
{
    for (const auto &m : q) out << ',' << csv::format_double(m(r, c));
}

void require_param(const PosteriorSamples &s, const std::string &name)
{
    if (!s.has(name)) throw ConfigError("report: posterior samples lack '" + name + "'");
}

/// g transform of each column; entries floored at the smallest normal double.
MatrixXd g_columns(const MatrixXd &m)
{
    MatrixXd out(m.rows(), m.cols());
    for (Index k = 0; k < m.cols(); ++k)
        out.col(k) = g_transform(m.col(k).cwiseMax(std::numeric_limits<double>::min()));
    return out;
}

}  // namespace

std::string export_theta_boxes(const PosteriorSamples &s, const CountMatrix &x)
{
    require_param(s, "theta");
    if (s.param("theta").rows != x.num_samples()) throw DomainError("theta_boxes: theta rows differ from D");
    const auto q = draw_quantiles(s, "theta", [](const MatrixXd &m) { return m; });
    std::ostringstream out;
    out << "sample_id,time,topic," << kQuantileHeader << '\n';
    for (Index d = 0; d < x.num_samples(); ++d)
        for (Index k = 0; k < q[0].cols(); ++k) {
            out << x.sample_ids()[static_cast<std::size_t>(d)] << ','
                << (x.has_times() ? csv::format_double((*x.times())[static_cast<std::size_t>(d)]) : "") << ',' << k;
            write_quantiles(out, q, d, k);
            out << '\n';
        }
    return out.str();
}

std::string export_beta_intervals(const PosteriorSamples &s, const CountMatrix &x)
{
    require_param(s, "beta");
    if (s.param("beta").rows != x.num_features()) throw DomainError("beta_intervals: beta rows differ from V");
    const auto q = draw_quantiles(s, "beta", g_columns);
    std::ostringstream out;
    out << "feature_id,family,topic," << kQuantileHeader << '\n';
    for (Index v = 0; v < x.num_features(); ++v)
        for (Index k = 0; k < q[0].cols(); ++k) {
            out << x.feature_ids()[static_cast<std::size_t>(v)] << ','
                << (x.taxonomy() ? (*x.taxonomy())[static_cast<std::size_t>(v)].family : "") << ',' << k;
            write_quantiles(out, q, v, k);
            out << '\n';
        }
    return out.str();
}

std::string export_mu_intervals(const PosteriorSamples &s, const CountMatrix &x)
{
    require_param(s, "mu");
    if (!x.has_times()) throw ConfigError("mu_intervals: sample times are required");
    const TimeSlots slots = make_time_slots(*x.times());
    if (s.param("mu").rows != static_cast<Index>(slots.times.size()) || s.param("mu").cols != x.num_features())
        throw DomainError("mu_intervals: mu shape does not match the data");
    // g(S(mu_t)) is mu_t with its row mean removed.
    const auto q = draw_quantiles(s, "mu", [](const MatrixXd &m) {
        return MatrixXd(m.colwise() - m.rowwise().mean());
    });
    std::ostringstream out;
    out << "feature_id,time," << kQuantileHeader << '\n';
    for (Index v = 0; v < x.num_features(); ++v)
        for (Index t = 0; t < q[0].rows(); ++t) {
            out << x.feature_ids()[static_cast<std::size_t>(v)] << ','
                << csv::format_double(slots.times[static_cast<std::size_t>(t)]);
            write_quantiles(out, q, t, v);
            out << '\n';
        }
    return out.str();
}

std::string export_ppc_overlay(const PpcReport &ts)
{
    if (ts.statistic != "timeseries") throw ConfigError("ppc_overlay: a timeseries report is required");
    const auto &levels = export_quantiles();
    std::ostringstream out;
    out << "feature_id,time,observed," << kQuantileHeader << '\n';
    std::vector<double> v(static_cast<std::size_t>(ts.num_replicates()));
    for (Index j = 0; j < ts.size(); ++j) {
        if (ts.times[static_cast<std::size_t>(j)].empty()) throw ConfigError("ppc_overlay: missing times");
        out << ts.features[static_cast<std::size_t>(j)] << ',' << ts.times[static_cast<std::size_t>(j)] << ','
            << csv::format_double(ts.observed[j]);
        for (Index s = 0; s < ts.num_replicates(); ++s) v[static_cast<std::size_t>(s)] = ts.replicates(s, j);
        std::sort(v.begin(), v.end());
        for (double l : levels) out << ',' << (v.empty() ? "" : csv::format_double(quantile_sorted(v, l)));
        out << '\n';
    }
    return out.str();
}

std::string export_representativeness(const MatrixXd &beta, const std::vector<std::string> &feature_ids,
                                      Index top_m)
{
    std::ostringstream out;
    out << "topic,rank,feature_id,score\n";
    for (Index k = 0; k < beta.cols(); ++k)
        for (const auto &row : topic_representativeness(beta, feature_ids, k, top_m))
            out << row.topic << ',' << row.rank << ',' << row.feature_id << ',' << csv::format_double(row.score)
                << '\n';
    return out.str();
}

std::string export_qq(const PpcReport &qq, Rng &rng, double width)
{
    if (qq.statistic != "qq") throw ConfigError("qq export: a qq report is required");
    if (!(width >= 0)) throw DomainError("qq export: jitter width must be >= 0");
    std::ostringstream out;
    out << "replicate_id,prob,observed,replicate,observed_jittered,replicate_jittered,jitter_width\n";
    for (Index s = 0; s < qq.num_replicates(); ++s)
        for (Index j = 0; j < qq.size(); ++j) {
            const double o = qq.observed[j];
            const double r = qq.replicates(s, j);
            const double jo = o + width * rng.uniform();
            const double jr = r + width * rng.uniform();
            out << s << ',' << qq.features[static_cast<std::size_t>(j)] << ',' << csv::format_double(o) << ','
                << csv::format_double(r) << ',' << csv::format_double(jo) << ',' << csv::format_double(jr) << ','
                << csv::format_double(width) << '\n';
        }
    return out.str();
}

}  // namespace plvm
