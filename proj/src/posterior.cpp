#include "plvm/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include "json.hpp"
#include <unsupported/Eigen/FFT>

#include "plvm/csv.hpp"

namespace plvm {

PosteriorSamples::PosteriorSamples(Index chains, Index draws) : chains_(chains), draws_(draws)
{
    if (chains < 0 || draws < 0) throw DomainError("PosteriorSamples: negative shape");
}

void PosteriorSamples::add_parameter(const std::string &name, int rank, Index rows, Index cols)
{
    if (rank < 0 || rank > 2) throw DomainError("PosteriorSamples: rank must be 0, 1 or 2");
    ParamDraws p;
    p.rank = rank;
    p.rows = rank == 0 ? 1 : rows;
    p.cols = rank == 2 ? cols : 1;
    p.values.assign(static_cast<std::size_t>(chains_ * draws_ * p.rows * p.cols), 0.0);
    params_[name] = std::move(p);
}

const ParamDraws &PosteriorSamples::param(const std::string &name) const
{
    const auto it = params_.find(name);
    if (it == params_.end()) throw BoundsError("unknown parameter '" + name + "'");
    return it->second;
}

ParamDraws &PosteriorSamples::mutable_param(const std::string &name)
{
    const auto it = params_.find(name);
    if (it == params_.end()) throw BoundsError("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> PosteriorSamples::names() const
{
    std::vector<std::string> out;
    for (const auto &[name, p] : params_) out.push_back(name);
    return out;
}

std::size_t PosteriorSamples::offset(const ParamDraws &p, Index chain, Index draw) const
{
    if (chain < 0 || chain >= chains_ || draw < 0 || draw >= draws_)
        throw BoundsError("PosteriorSamples: (chain, draw) out of range");
    return static_cast<std::size_t>((chain * draws_ + draw) * p.rows * p.cols);
}

void PosteriorSamples::set_draw(const std::string &name, Index chain, Index draw,
                                const Eigen::Ref<const MatrixXd> &value)
{
    auto &p = mutable_param(name);
    if (value.rows() != p.rows || value.cols() != p.cols)
        throw BoundsError("PosteriorSamples: draw shape mismatch for '" + name + "'");
    if (!value.allFinite()) throw NumericalError("non-finite draw for '" + name + "'", static_cast<long>(draw));
    Eigen::Map<MatrixXd>(p.values.data() + offset(p, chain, draw), p.rows, p.cols) = value;
}

void PosteriorSamples::set_scalar(const std::string &name, Index chain, Index draw, double value)
{
    MatrixXd m(1, 1);
    m(0, 0) = value;
    set_draw(name, chain, draw, m);
}

void PosteriorSamples::set_entry(const std::string &name, Index chain, Index draw, Index row, Index col,
                                 double value)
{
    auto &p = mutable_param(name);
    if (row < 0 || row >= p.rows || col < 0 || col >= p.cols) throw BoundsError("set_entry: index out of range");
    if (!std::isfinite(value)) throw NumericalError("non-finite draw for '" + name + "'", static_cast<long>(draw));
    p.values[offset(p, chain, draw) + static_cast<std::size_t>(col * p.rows + row)] = value;
}

MatrixXd PosteriorSamples::draw(const std::string &name, Index chain, Index draw) const
{
    const auto &p = param(name);
    return Eigen::Map<const MatrixXd>(p.values.data() + offset(p, chain, draw), p.rows, p.cols);
}

MatrixXd PosteriorSamples::pooled_draw(const std::string &name, Index flat) const
{
    return draw(name, flat / draws_, flat % draws_);
}

MatrixXd PosteriorSamples::entry_draws(const std::string &name, Index row, Index col) const
{
    const auto &p = param(name);
    if (row < 0 || row >= p.rows || col < 0 || col >= p.cols) throw BoundsError("entry_draws: index out of range");
    MatrixXd out(draws_, chains_);
    const std::size_t entry = static_cast<std::size_t>(col * p.rows + row);
    for (Index c = 0; c < chains_; ++c)
        for (Index t = 0; t < draws_; ++t) out(t, c) = p.values[offset(p, c, t) + entry];
    return out;
}

MatrixXd PosteriorSamples::median(const std::string &name) const
{
    const auto &p = param(name);
    if (total_draws() == 0) throw DomainError("median: no draws");
    MatrixXd out(p.rows, p.cols);
    std::vector<double> buf(static_cast<std::size_t>(total_draws()));
    for (Index j = 0; j < p.cols; ++j)
        for (Index i = 0; i < p.rows; ++i) {
            const MatrixXd e = entry_draws(name, i, j);
            std::copy(e.data(), e.data() + e.size(), buf.begin());
            out(i, j) = quantile_type7(buf, 0.5);
        }
    return out;
}

MatrixXd PosteriorSamples::mean(const std::string &name) const
{
    const auto &p = param(name);
    if (total_draws() == 0) throw DomainError("mean: no draws");
    MatrixXd out = MatrixXd::Zero(p.rows, p.cols);
    for (Index f = 0; f < total_draws(); ++f) out += pooled_draw(name, f);
    return out / static_cast<double>(total_draws());
}

PosteriorSamples PosteriorSamples::select_chains(const std::vector<Index> &order) const
{
    PosteriorSamples out(static_cast<Index>(order.size()), draws_);
    out.metadata = metadata;
    for (const auto &[name, p] : params_) {
        out.add_parameter(name, p.rank, p.rows, p.cols);
        for (std::size_t c = 0; c < order.size(); ++c)
            for (Index t = 0; t < draws_; ++t) out.set_draw(name, static_cast<Index>(c), t, draw(name, order[c], t));
    }
    return out;
}

PosteriorSamples PosteriorSamples::concat_chains(const std::vector<PosteriorSamples> &parts)
{
    if (parts.empty()) return {};
    Index chains = 0;
    for (const auto &p : parts) {
        if (p.num_draws() != parts.front().num_draws() || p.names() != parts.front().names())
            throw DomainError("concat_chains: incompatible stores");
        chains += p.num_chains();
    }
    PosteriorSamples out(chains, parts.front().num_draws());
    out.metadata = parts.front().metadata;
    for (const auto &[name, p] : parts.front().params_) out.add_parameter(name, p.rank, p.rows, p.cols);
    Index base = 0;
    for (const auto &part : parts) {
        for (const auto &name : part.names())
            for (Index c = 0; c < part.num_chains(); ++c)
                for (Index t = 0; t < part.num_draws(); ++t) out.set_draw(name, base + c, t, part.draw(name, c, t));
        base += part.num_chains();
    }
    return out;
}

double quantile_sorted(const std::vector<double> &sorted, double prob)
{
    if (sorted.empty()) throw DomainError("quantile: no values");
    if (!(prob >= 0 && prob <= 1)) throw DomainError("quantile: probability outside [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile_type7(std::vector<double> values, double prob)
{
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, prob);
}

namespace {

double sample_sd(const std::vector<double> &v)
{
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0));
}

template <typename Fn>
void for_each_entry(const PosteriorSamples &s, Fn &&fn)
{
    for (const auto &name : s.names()) {
        const auto &p = s.param(name);
        for (Index j = 0; j < p.cols; ++j)
            for (Index i = 0; i < p.rows; ++i) fn(name, i, j);
    }
}

}  // namespace

std::vector<SummaryRow> summarize_posterior(const PosteriorSamples &s, const std::vector<double> &probs)
{
    if (s.empty()) throw DomainError("summarize_posterior: empty store");
    if (s.total_draws() < 2) throw DomainError("summarize_posterior: need at least 2 draws");
    std::vector<SummaryRow> rows;
    std::vector<double> buf(static_cast<std::size_t>(s.total_draws()));
    for_each_entry(s, [&](const std::string &name, Index i, Index j) {
        const MatrixXd e = s.entry_draws(name, i, j);
        std::copy(e.data(), e.data() + e.size(), buf.begin());
        SummaryRow row{name, i, j, 0.0, {}, sample_sd(buf)};
        std::sort(buf.begin(), buf.end());
        row.median = quantile_sorted(buf, 0.5);
        for (double p : probs) row.quantiles.push_back(quantile_sorted(buf, p));
        rows.push_back(std::move(row));
    });
    return rows;
}

double split_rhat(const MatrixXd &draws, bool *degenerate)
{
    const Index n = draws.rows() / 2;
    const Index m = draws.cols() * 2;
    MatrixXd split(n, m);
    for (Index c = 0; c < draws.cols(); ++c) {
        split.col(2 * c) = draws.col(c).head(n);
        split.col(2 * c + 1) = draws.col(c).segment(draws.rows() - n, n);
    }
    const VectorXd means = split.colwise().mean().transpose();
    VectorXd vars(m);
    for (Index c = 0; c < m; ++c)
        vars[c] = (split.col(c).array() - means[c]).square().sum() / static_cast<double>(n - 1);
    const double W = vars.mean();
    const double B = static_cast<double>(n) * (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
    if (degenerate) *degenerate = false;
    if (W <= 0) {
        if (B <= 0) {
            if (degenerate) *degenerate = true;
            return 1.0;
        }
        return std::numeric_limits<double>::infinity();
    }
    const double var_plus = (static_cast<double>(n - 1) / static_cast<double>(n)) * W + B / static_cast<double>(n);
    return std::sqrt(var_plus / W);
}

namespace {

/// Biased autocovariance at every lag, via zero-padded FFT.
VectorXd autocovariance(const VectorXd &x)
{
    const Index n = x.size();
    Index len = 1;
    while (len < 2 * n) len <<= 1;
    std::vector<double> centered(static_cast<std::size_t>(len), 0.0);
    const double mean = x.mean();
    for (Index i = 0; i < n; ++i) centered[static_cast<std::size_t>(i)] = x[i] - mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, centered);
    for (auto &f : freq) f = std::complex<double>(std::norm(f), 0.0);
    std::vector<double> back;
    fft.inv(back, freq);
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) out[i] = back[static_cast<std::size_t>(i)] / static_cast<double>(n);
    return out;
}

}  // namespace

double effective_sample_size(const MatrixXd &draws)
{
    const Index n = draws.rows();
    const Index m = draws.cols();
    if (n < 4) throw DomainError("effective_sample_size: need >= 4 draws per chain");
    MatrixXd acov(n, m);
    VectorXd means(m);
    for (Index c = 0; c < m; ++c) {
        acov.col(c) = autocovariance(draws.col(c));
        means[c] = draws.col(c).mean();
    }
    const double dn = static_cast<double>(n);
    const VectorXd chain_var = acov.row(0).transpose() * dn / (dn - 1.0);
    const double W = chain_var.mean();
    double var_plus = W * (dn - 1.0) / dn;
    if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
    if (var_plus <= 0) return static_cast<double>(n * m);

    auto rho = [&](Index t) { return 1.0 - (W - acov.row(t).mean()) / var_plus; };

    // Geyer initial positive (monotone) sequence over pairs of lags.
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Index t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair < 0) break;
        pair = std::min(pair, prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
    }
    tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n * m)));
    return static_cast<double>(n * m) / tau;
}

std::vector<DiagnosticRow> diagnostics(const PosteriorSamples &s)
{
    if (s.num_chains() < 2) throw DomainError("diagnostics: need at least 2 chains");
    if (s.num_draws() < 4) throw DomainError("diagnostics: need at least 4 draws per chain");
    std::vector<DiagnosticRow> rows;
    for_each_entry(s, [&](const std::string &name, Index i, Index j) {
        const MatrixXd e = s.entry_draws(name, i, j);
        DiagnosticRow row{name, i, j};
        row.rhat = split_rhat(e, &row.degenerate);
        row.ess = row.degenerate ? static_cast<double>(e.size()) : effective_sample_size(e);
        rows.push_back(row);
    });
    return rows;
}

std::string samples_to_csv(const PosteriorSamples &s)
{
    std::ostringstream out;
    out << "param,idx1,idx2,chain,draw,value\n";
    for (const auto &name : s.names()) {
        const auto &p = s.param(name);
        for (Index c = 0; c < s.num_chains(); ++c)
            for (Index t = 0; t < s.num_draws(); ++t) {
                const MatrixXd m = s.draw(name, c, t);
                for (Index i = 0; i < p.rows; ++i)
                    for (Index j = 0; j < p.cols; ++j) {
                        out << name << ',';
                        if (p.rank >= 1) out << i;
                        out << ',';
                        if (p.rank == 2) out << j;
                        out << ',' << c << ',' << t << ',' << csv::format_double(m(i, j)) << '\n';
                    }
            }
    }
    return out.str();
}

std::string metadata_to_json(const PosteriorSamples &s)
{
    nlohmann::ordered_json j;
    j["model"] = s.metadata.model;
    j["method"] = s.metadata.method;
    j["seed"] = s.metadata.seed;
    j["warmup"] = s.metadata.warmup;
    j["iters"] = s.metadata.iters;
    j["thin"] = s.metadata.thin;
    j["warnings"] = s.metadata.warnings;
    j["extra"] = s.metadata.extra;
    j["chains"] = s.num_chains();
    j["draws"] = s.num_draws();
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto &name : s.names()) {
        const auto &p = s.param(name);
        params[name] = {{"rank", p.rank}, {"rows", p.rows}, {"cols", p.cols}};
    }
    j["params"] = params;
    return j.dump(2) + "\n";
}

void write_samples(const PosteriorSamples &s, const std::filesystem::path &csv_path,
                   const std::filesystem::path &json_path)
{
    csv::write_file(csv_path, samples_to_csv(s));
    csv::write_file(json_path, metadata_to_json(s));
}

PosteriorSamples read_samples(const std::filesystem::path &csv_path, const std::filesystem::path &json_path)
{
    const auto meta_lines = csv::read_lines(json_path);
    std::string text;
    for (const auto &l : meta_lines) text += l + "\n";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("samples metadata: ") + e.what(), "", "");
    }
    PosteriorSamples s(j.at("chains").get<Index>(), j.at("draws").get<Index>());
    s.metadata.model = j.value("model", "");
    s.metadata.method = j.value("method", "");
    s.metadata.seed = j.value("seed", std::uint64_t{0});
    s.metadata.warmup = j.value("warmup", 0L);
    s.metadata.iters = j.value("iters", 0L);
    s.metadata.thin = j.value("thin", 1L);
    if (j.contains("warnings")) s.metadata.warnings = j["warnings"].get<std::vector<std::string>>();
    if (j.contains("extra")) s.metadata.extra = j["extra"].get<std::map<std::string, std::string>>();
    for (const auto &[name, p] : j.at("params").items())
        s.add_parameter(name, p.at("rank").get<int>(), p.at("rows").get<Index>(), p.at("cols").get<Index>());

    const auto lines = csv::read_lines(csv_path);
    if (lines.empty() || lines.front() != "param,idx1,idx2,chain,draw,value")
        throw ParseError("samples CSV header must be 'param,idx1,idx2,chain,draw,value'", "header", "");
    std::map<std::string, std::vector<double> *> slots;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto f = csv::split(lines[li]);
        const std::string row = std::to_string(li + 1);
        if (f.size() != 6) throw ParseError("samples CSV line " + row + " must have 6 fields", row, "");
        const auto &p = s.param(f[0]);
        long long i = 0, jj = 0, c = 0, t = 0;
        double value = 0;
        if ((p.rank >= 1 && !csv::parse_int(f[1], i)) || (p.rank == 2 && !csv::parse_int(f[2], jj)) ||
            !csv::parse_int(f[3], c) || !csv::parse_int(f[4], t) || !csv::parse_double(f[5], value))
            throw ParseError("samples CSV line " + row + " is malformed", row, "");
        if (i < 0 || i >= p.rows || jj < 0 || jj >= p.cols || c < 0 || c >= s.num_chains() || t < 0 ||
            t >= s.num_draws())
            throw ParseError("samples CSV line " + row + " has an index out of range", row, "");
        s.set_entry(f[0], c, t, i, jj, value);
    }
    return s;
}

void write_summary_csv(const std::vector<SummaryRow> &rows, const std::vector<double> &probs,
                       const std::filesystem::path &path)
{
    std::ostringstream out;
    out << "param,idx1,idx2,median";
    for (double p : probs) out << ",q" << csv::format_double(p);
    out << ",sd\n";
    for (const auto &r : rows) {
        out << r.param << ',' << r.row << ',' << r.col << ',' << csv::format_double(r.median);
        for (double q : r.quantiles) out << ',' << csv::format_double(q);
        out << ',' << csv::format_double(r.sd) << '\n';
    }
    csv::write_file(path, out.str());
}

void write_diagnostics_csv(const std::vector<DiagnosticRow> &rows, const std::filesystem::path &path)
{
    std::ostringstream out;
    out << "param,idx1,idx2,rhat,ess,degenerate\n";
    for (const auto &r : rows)
        out << r.param << ',' << r.row << ',' << r.col << ',' << csv::format_double(r.rhat) << ','
            << csv::format_double(r.ess) << ',' << (r.degenerate ? 1 : 0) << '\n';
    csv::write_file(path, out.str());
}

}  // namespace plvm
