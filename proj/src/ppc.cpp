#include "plvm/ppc.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/SVD>

#include "plvm/csv.hpp"
#include "plvm/distributions.hpp"
#include "plvm/parallel.hpp"
#include "plvm/transforms.hpp"
#include "plvm/unigram.hpp"

namespace plvm {

ModelKind model_kind_from_string(const std::string &name)
{
    if (name == "dmm") return ModelKind::dmm;
    if (name == "lda") return ModelKind::lda;
    if (name == "gap" || name == "zgap") return ModelKind::gap;
    if (name == "unigram") return ModelKind::unigram;
    throw ConfigError("unknown model '" + name + "'");
}

std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::dmm: return "dmm";
    case ModelKind::lda: return "lda";
    case ModelKind::gap: return "gap";
    case ModelKind::unigram: return "unigram";
    }
    return "";
}

namespace {

void require(const PosteriorSamples &s, const std::string &name)
{
    if (!s.has(name)) throw ConfigError("posterior samples lack parameter '" + name + "'");
}

CountArray simulate_one(ModelKind model, const CountMatrix &observed, const CountVector &totals,
                        const std::vector<Index> &slot_of, const PosteriorSamples &s, Index draw, double p0, Rng &rng)
{
    const Index D = observed.num_samples();
    const Index V = observed.num_features();
    CountArray out(D, V);
    switch (model) {
    case ModelKind::lda: {
        const MatrixXd theta = s.pooled_draw("theta", draw);
        const MatrixXd beta = s.pooled_draw("beta", draw);
        for (Index d = 0; d < D; ++d)
            out.row(d) = sample_multinomial_weights(totals[d], beta * theta.row(d).transpose(), rng).transpose();
        break;
    }
    case ModelKind::dmm: {
        const MatrixXd z = s.pooled_draw("z", draw);
        const MatrixXd beta = s.pooled_draw("beta", draw);
        for (Index d = 0; d < D; ++d) {
            const auto k = static_cast<Index>(std::lround(z(d, 0)));
            out.row(d) = sample_multinomial_weights(totals[d], beta.col(k), rng).transpose();
        }
        break;
    }
    case ModelKind::gap: {
        const MatrixXd rate = s.pooled_draw("theta", draw) * s.pooled_draw("beta", draw).transpose();
        for (Index d = 0; d < D; ++d)
            for (Index v = 0; v < V; ++v) {
                out(d, v) = sample_poisson(rate(d, v), rng);
                if (p0 > 0 && rng.uniform() < p0) out(d, v) = 0;
            }
        break;
    }
    case ModelKind::unigram: {
        const MatrixXd mu = s.pooled_draw("mu", draw);
        for (Index d = 0; d < D; ++d) {
            const VectorXd p = softmax(mu.row(slot_of[static_cast<std::size_t>(d)]).transpose());
            out.row(d) = sample_multinomial_weights(totals[d], p, rng).transpose();
        }
        break;
    }
    }
    return out;
}

}  // namespace

std::vector<CountMatrix> draw_posterior_predictive(ModelKind model, const CountMatrix &observed,
                                                   const PosteriorSamples &s, Index S, Rng &rng,
                                                   const PredictiveOptions &opts)
{
    if (S < 1) throw ConfigError("posterior predictive: S must be >= 1");
    if (s.empty()) throw ConfigError("posterior predictive: no posterior draws");
    std::vector<Index> slot_of;
    switch (model) {
    case ModelKind::lda: require(s, "theta"); require(s, "beta"); break;
    case ModelKind::dmm: require(s, "z"); require(s, "beta"); break;
    case ModelKind::gap: require(s, "theta"); require(s, "beta"); break;
    case ModelKind::unigram:
        require(s, "mu");
        if (!observed.has_times()) throw ConfigError("posterior predictive: unigram replicates need sample times");
        slot_of = make_time_slots(*observed.times()).slot_of;
        if (s.param("mu").rows != static_cast<Index>(make_time_slots(*observed.times()).times.size()))
            throw DomainError("posterior predictive: mu slots do not match the observed times");
        break;
    }
    const CountVector totals = library_sizes(observed);
    const Rng root(rng(), rng());
    std::vector<CountArray> reps(static_cast<std::size_t>(S));
    parallel_for(S, opts.threads, [&](Index r) {
        Rng child = root.split(static_cast<std::uint64_t>(r));
        const auto draw = static_cast<Index>(child() % static_cast<std::uint64_t>(s.total_draws()));
        reps[static_cast<std::size_t>(r)] = simulate_one(model, observed, totals, slot_of, s, draw, opts.p0, child);
    });
    std::vector<CountMatrix> out;
    out.reserve(reps.size());
    for (auto &r : reps) out.push_back(observed.with_counts(std::move(r)));
    return out;
}

// Statistics

namespace {

template <typename Stat>
PpcReport make_report(const std::string &name, const CountMatrix &observed, const std::vector<CountMatrix> &reps,
                      Stat &&stat)
{
    PpcReport r;
    r.statistic = name;
    r.observed = stat(observed);
    r.replicates.resize(static_cast<Index>(reps.size()), r.observed.size());
    for (std::size_t s = 0; s < reps.size(); ++s) {
        if (reps[s].num_samples() != observed.num_samples() || reps[s].num_features() != observed.num_features())
            throw DomainError("ppc: replicate shape differs from observed");
        r.replicates.row(static_cast<Index>(s)) = stat(reps[s]).transpose();
    }
    r.features.assign(static_cast<std::size_t>(r.observed.size()), "");
    r.times.assign(static_cast<std::size_t>(r.observed.size()), "");
    return r;
}

std::string label_edge(double e) { return std::isinf(e) ? "inf" : csv::format_double(e); }

}  // namespace

PpcReport ppc_scalar_stats(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                           const StatSpec &spec)
{
    switch (spec.kind) {
    case StatKind::mean:
    case StatKind::variance: {
        const bool var = spec.kind == StatKind::variance;
        if (var && observed.num_samples() < 2) throw DomainError("ppc: variance needs >= 2 samples");
        PpcReport r = make_report(var ? "variance" : "mean", observed, replicates, [var](const CountMatrix &x) {
            const MatrixXd m = x.counts().cast<double>();
            const VectorXd mean = m.colwise().mean().transpose();
            if (!var) return mean;
            const MatrixXd c = m.rowwise() - mean.transpose();
            return VectorXd((c.colwise().squaredNorm() / static_cast<double>(m.rows() - 1)).transpose());
        });
        r.features = observed.feature_ids();
        return r;
    }
    case StatKind::histogram: {
        const auto &e = spec.edges;
        if (e.size() < 2) throw ConfigError("ppc: histogram needs at least two bin edges");
        for (std::size_t i = 1; i < e.size(); ++i)
            if (!(e[i] > e[i - 1])) throw ConfigError("ppc: histogram edges must be strictly increasing");
        PpcReport r = make_report("histogram", observed, replicates, [&e](const CountMatrix &x) {
            VectorXd h = VectorXd::Zero(static_cast<Index>(e.size() - 1));
            for (Index d = 0; d < x.num_samples(); ++d)
                for (Index v = 0; v < x.num_features(); ++v) {
                    const double val = static_cast<double>(x.counts()(d, v));
                    const auto it = std::upper_bound(e.begin(), e.end(), val);
                    if (it == e.begin() || it == e.end()) continue;
                    h[static_cast<Index>(it - e.begin()) - 1] += 1;
                }
            return h;
        });
        for (std::size_t i = 0; i + 1 < e.size(); ++i)
            r.features[i] = "[" + label_edge(e[i]) + ";" + label_edge(e[i + 1]) + ")";
        return r;
    }
    }
    throw ConfigError("ppc: unknown statistic");
}

PpcReport ppc_timeseries(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                         const std::vector<std::string> &feature_ids)
{
    if (!observed.has_times()) throw ConfigError("ppc_timeseries: sample times are required");
    std::vector<Index> cols;
    for (const auto &id : feature_ids) cols.push_back(observed.feature_index(id));
    const Index D = observed.num_samples();
    // Samples in time order; ties keep file order.
    std::vector<Index> order(static_cast<std::size_t>(D));
    std::iota(order.begin(), order.end(), Index{0});
    const auto &times = *observed.times();
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return times[static_cast<std::size_t>(a)] < times[static_cast<std::size_t>(b)]; });

    PpcReport r = make_report("timeseries", observed, replicates, [&](const CountMatrix &x) {
        VectorXd out(static_cast<Index>(cols.size()) * D);
        Index i = 0;
        for (Index v : cols)
            for (Index d : order) out[i++] = std::asinh(static_cast<double>(x.counts()(d, v)));
        return out;
    });
    std::size_t i = 0;
    for (std::size_t f = 0; f < cols.size(); ++f)
        for (Index d : order) {
            r.features[i] = feature_ids[f];
            r.times[i] = csv::format_double(times[static_cast<std::size_t>(d)]);
            ++i;
        }
    return r;
}

std::vector<bool> outside_band(const PpcReport &report, double lo, double hi)
{
    std::vector<bool> out(static_cast<std::size_t>(report.size()), false);
    if (report.num_replicates() == 0) return out;
    for (Index j = 0; j < report.size(); ++j) {
        std::vector<double> col(report.replicates.col(j).data(),
                                report.replicates.col(j).data() + report.num_replicates());
        std::sort(col.begin(), col.end());
        const double a = quantile_sorted(col, lo);
        const double b = quantile_sorted(col, hi);
        out[static_cast<std::size_t>(j)] = report.observed[j] < a || report.observed[j] > b;
    }
    return out;
}

// PCA

PcaSummary pca_summary(const MatrixXd &data, Index r, bool center)
{
    const Index D = data.rows();
    if (r < 1 || r > std::min(D, data.cols())) throw BoundsError("pca: rank must be in 1..min(D, m)");
    if (D < 2) throw BoundsError("pca: need at least two samples");
    MatrixXd m = data;
    if (center) m.rowwise() -= m.colwise().mean();
    Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    PcaSummary out;
    const VectorXd sv = svd.singularValues().head(r);
    out.eigenvalues = sv.array().square() / static_cast<double>(D - 1);
    out.left = svd.matrixU().leftCols(r);
    out.loadings = svd.matrixV().leftCols(r);
    // Sign convention: the largest-magnitude loading of each axis is positive.
    for (Index k = 0; k < r; ++k) {
        Index arg = 0;
        out.loadings.col(k).cwiseAbs().maxCoeff(&arg);
        if (out.loadings(arg, k) < 0) {
            out.loadings.col(k) *= -1;
            out.left.col(k) *= -1;
        }
    }
    out.scores = out.left * sv.asDiagonal();
    return out;
}

PcaCheck ppc_pca(const CountMatrix &observed, const std::vector<CountMatrix> &replicates, const PcaOptions &opts)
{
    const Index m = opts.features == 0 ? observed.num_features() : opts.features;
    if (m > observed.num_features()) throw BoundsError("ppc_pca: more features requested than available");
    if (opts.rank < 1 || opts.rank > std::min(observed.num_samples(), m))
        throw BoundsError("ppc_pca: rank must be in 1..min(D, m)");
    PcaCheck out;
    out.features = select_features(observed, FilterMode::top_variance, m);
    auto transform = [&](const CountMatrix &x) {
        MatrixXd t(x.num_samples(), static_cast<Index>(out.features.size()));
        for (std::size_t j = 0; j < out.features.size(); ++j)
            t.col(static_cast<Index>(j)) = x.counts().col(out.features[j]).cast<double>().array().asinh().matrix();
        return t;
    };
    out.observed = pca_summary(transform(observed), opts.rank, opts.center);
    out.replicates.resize(replicates.size());
    for (std::size_t s = 0; s < replicates.size(); ++s) {
        if (replicates[s].num_features() != observed.num_features() ||
            replicates[s].num_samples() != observed.num_samples())
            throw DomainError("ppc_pca: replicate shape differs from observed");
        out.replicates[s] = pca_summary(transform(replicates[s]), opts.rank, opts.center);
    }
    return out;
}

PcaSummary procrustes_align(const PcaSummary &reference, const PcaSummary &target, MatrixXd *rotation)
{
    if (reference.scores.rows() != target.scores.rows() || reference.scores.cols() != target.scores.cols() ||
        reference.loadings.rows() != target.loadings.rows())
        throw DomainError("procrustes_align: dimension mismatch");
    const MatrixXd cross = target.scores.transpose() * reference.scores;
    Eigen::JacobiSVD<MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
    PcaSummary out = target;
    out.scores = target.scores * R;
    out.left = target.left * R;
    out.loadings = target.loadings * R;
    if (rotation) *rotation = R;
    return out;
}

PpcReport ppc_quantile_qq(const CountMatrix &observed, const std::vector<CountMatrix> &replicates,
                          const std::vector<double> &grid)
{
    for (double p : grid)
        if (!(p > 0 && p < 1)) throw DomainError("ppc_quantile_qq: grid values must lie in (0, 1)");
    PpcReport r = make_report("qq", observed, replicates, [&grid](const CountMatrix &x) {
        std::vector<double> v(static_cast<std::size_t>(x.counts().size()));
        for (Index i = 0; i < x.counts().size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(x.counts().data()[i]);
        std::sort(v.begin(), v.end());
        VectorXd q(static_cast<Index>(grid.size()));
        for (std::size_t i = 0; i < grid.size(); ++i) q[static_cast<Index>(i)] = quantile_sorted(v, grid[i]);
        return q;
    });
    for (std::size_t i = 0; i < grid.size(); ++i) r.features[i] = csv::format_double(grid[i]);
    return r;
}

std::vector<std::pair<std::string, double>> species_discrepancy(const CountMatrix &observed,
                                                                const std::vector<CountMatrix> &replicates)
{
    const Index D = observed.num_samples();
    const Index V = observed.num_features();
    const MatrixXd obs = asinh_transform_matrix(observed.counts());
    VectorXd score = VectorXd::Zero(V);
    for (const auto &rep : replicates) {
        if (rep.num_samples() != D || rep.num_features() != V)
            throw DomainError("species_discrepancy: replicate shape differs from observed");
        score += (obs - asinh_transform_matrix(rep.counts())).cwiseAbs().colwise().sum().transpose();
    }
    if (!replicates.empty() && D > 0) score /= static_cast<double>(D) * static_cast<double>(replicates.size());
    std::vector<std::pair<std::string, double>> out;
    for (Index v = 0; v < V; ++v) out.emplace_back(observed.feature_ids()[static_cast<std::size_t>(v)], score[v]);
    std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
    return out;
}

std::string ppc_reports_to_csv(const std::vector<PpcReport> &reports)
{
    std::ostringstream out;
    out << "statistic,feature,time,kind,replicate_id,value\n";
    for (const auto &r : reports) {
        for (Index j = 0; j < r.size(); ++j)
            out << r.statistic << ',' << r.features[static_cast<std::size_t>(j)] << ','
                << r.times[static_cast<std::size_t>(j)] << ",observed,," << csv::format_double(r.observed[j]) << '\n';
        for (Index s = 0; s < r.num_replicates(); ++s)
            for (Index j = 0; j < r.size(); ++j)
                out << r.statistic << ',' << r.features[static_cast<std::size_t>(j)] << ','
                    << r.times[static_cast<std::size_t>(j)] << ",replicate," << s << ','
                    << csv::format_double(r.replicates(s, j)) << '\n';
    }
    return out.str();
}

void write_ppc_reports(const std::vector<PpcReport> &reports, const std::filesystem::path &path)
{
    csv::write_file(path, ppc_reports_to_csv(reports));
}

std::vector<PpcReport> read_ppc_reports(const std::filesystem::path &path)
{
    const auto lines = csv::read_lines(path);
    if (lines.empty() || lines[0] != "statistic,feature,time,kind,replicate_id,value")
        throw ParseError("ppc report: unexpected header", "1", "");
    struct Partial {
        std::vector<std::string> features, times;
        std::vector<double> observed;
        std::vector<std::vector<double>> replicates;
    };
    std::vector<std::string> order;
    std::map<std::string, Partial> parts;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = csv::split(lines[i]);
        const std::string row = std::to_string(i + 1);
        if (f.size() != 6) throw ParseError("ppc report: expected 6 fields", row, "");
        double value = 0;
        if (!csv::parse_double(f[5], value)) throw ParseError("ppc report: bad value", row, "value");
        if (!parts.count(f[0])) order.push_back(f[0]);
        Partial &p = parts[f[0]];
        if (f[3] == "observed") {
            p.features.push_back(f[1]);
            p.times.push_back(f[2]);
            p.observed.push_back(value);
        } else if (f[3] == "replicate") {
            long long rep = 0;
            if (!csv::parse_int(f[4], rep) || rep < 0) throw ParseError("ppc report: bad replicate id", row, "replicate_id");
            if (static_cast<std::size_t>(rep) >= p.replicates.size()) p.replicates.resize(static_cast<std::size_t>(rep) + 1);
            p.replicates[static_cast<std::size_t>(rep)].push_back(value);
        } else {
            throw ParseError("ppc report: kind must be observed or replicate", row, "kind");
        }
    }
    std::vector<PpcReport> out;
    for (const auto &name : order) {
        Partial &p = parts[name];
        PpcReport r;
        r.statistic = name;
        r.features = p.features;
        r.times = p.times;
        r.observed = Eigen::Map<const VectorXd>(p.observed.data(), static_cast<Index>(p.observed.size()));
        r.replicates.resize(static_cast<Index>(p.replicates.size()), r.observed.size());
        for (std::size_t s = 0; s < p.replicates.size(); ++s) {
            if (p.replicates[s].size() != p.observed.size())
                throw ParseError("ppc report: replicate length differs from observed", "", name);
            for (std::size_t j = 0; j < p.observed.size(); ++j)
                r.replicates(static_cast<Index>(s), static_cast<Index>(j)) = p.replicates[s][j];
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace plvm
