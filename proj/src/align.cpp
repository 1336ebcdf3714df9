#include "plvm/align.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace plvm {

TopicPermutation TopicPermutation::identity(Index k)
{
    TopicPermutation p;
    for (Index i = 0; i < k; ++i) p.perm.push_back(i);
    p.match_scores.assign(static_cast<std::size_t>(k), 1.0);
    p.flagged.assign(static_cast<std::size_t>(k), false);
    return p;
}

TopicPermutation TopicPermutation::inverse() const
{
    TopicPermutation inv;
    const std::size_t k = perm.size();
    inv.perm.assign(k, 0);
    inv.match_scores.assign(k, 0.0);
    inv.flagged.assign(k, false);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(perm[i]);
        inv.perm[j] = static_cast<Index>(i);
        inv.match_scores[j] = match_scores.empty() ? 0.0 : match_scores[i];
        inv.flagged[j] = flagged.empty() ? false : flagged[i];
    }
    return inv;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Pearson correlation; -inf when either column is constant.
double correlation(const VectorXd &a, const VectorXd &b)
{
    const VectorXd ca = a.array() - a.mean();
    const VectorXd cb = b.array() - b.mean();
    const double na = ca.norm();
    const double nb = cb.norm();
    if (na == 0 || nb == 0) return kNegInf;
    return ca.dot(cb) / (na * nb);
}

}  // namespace

TopicPermutation align_topics(const MatrixXd &reference, const MatrixXd &estimated)
{
    if (reference.rows() != estimated.rows() || reference.cols() != estimated.cols())
        throw DomainError("align_topics: reference and estimate shapes differ");
    if ((reference.array() < 0).any() || (estimated.array() < 0).any())
        throw DomainError("align_topics: topic entries must be nonnegative");
    const Index K = reference.cols();
    const MatrixXd ref = reference.array().sqrt();
    const MatrixXd est = estimated.array().sqrt();

    MatrixXd corr(K, K);
    for (Index i = 0; i < K; ++i)
        for (Index j = 0; j < K; ++j) corr(i, j) = correlation(ref.col(i), est.col(j));

    TopicPermutation out;
    out.perm.assign(static_cast<std::size_t>(K), -1);
    out.match_scores.assign(static_cast<std::size_t>(K), kNegInf);
    out.flagged.assign(static_cast<std::size_t>(K), false);
    std::vector<bool> ref_used(static_cast<std::size_t>(K), false);
    std::vector<bool> est_used(static_cast<std::size_t>(K), false);

    for (Index step = 0; step < K; ++step) {
        Index bi = -1;
        Index bj = -1;
        double best = 0;
        for (Index i = 0; i < K; ++i) {
            if (ref_used[static_cast<std::size_t>(i)]) continue;
            for (Index j = 0; j < K; ++j) {
                if (est_used[static_cast<std::size_t>(j)]) continue;
                // Strict comparison keeps the smallest (i, j) among ties.
                if (bi < 0 || corr(i, j) > best) {
                    bi = i;
                    bj = j;
                    best = corr(i, j);
                }
            }
        }
        ref_used[static_cast<std::size_t>(bi)] = true;
        est_used[static_cast<std::size_t>(bj)] = true;
        out.perm[static_cast<std::size_t>(bi)] = bj;
        out.match_scores[static_cast<std::size_t>(bi)] = best;
        out.flagged[static_cast<std::size_t>(bi)] = (best == kNegInf);
    }
    return out;
}

MatrixXd apply_alignment(const MatrixXd &topics, const TopicPermutation &perm)
{
    if (topics.cols() != perm.size()) throw DomainError("apply_alignment: topic axis length mismatch");
    MatrixXd out(topics.rows(), topics.cols());
    for (Index k = 0; k < perm.size(); ++k) out.col(k) = topics.col(perm.perm[static_cast<std::size_t>(k)]);
    return out;
}

PosteriorSamples apply_alignment(const PosteriorSamples &s, const TopicPermutation &perm,
                                 const std::vector<std::string> &topic_params)
{
    PosteriorSamples out = s;
    for (const auto &name : topic_params) {
        if (!s.has(name)) continue;
        const auto &p = s.param(name);
        const bool by_rows = p.rank == 1;
        if ((by_rows ? p.rows : p.cols) != perm.size())
            throw DomainError("apply_alignment: topic axis of '" + name + "' has the wrong length");
        for (Index c = 0; c < s.num_chains(); ++c)
            for (Index t = 0; t < s.num_draws(); ++t) {
                const MatrixXd d = s.draw(name, c, t);
                if (by_rows) {
                    MatrixXd r(d.rows(), d.cols());
                    for (Index k = 0; k < perm.size(); ++k) r.row(k) = d.row(perm.perm[static_cast<std::size_t>(k)]);
                    out.set_draw(name, c, t, r);
                } else {
                    out.set_draw(name, c, t, apply_alignment(d, perm));
                }
            }
    }
    return out;
}

namespace {

void normalize_columns(MatrixXd &theta, MatrixXd &beta, std::vector<bool> *flagged)
{
    if (theta.cols() != beta.cols()) throw DomainError("normalize_gap_scale: topic counts differ");
    if (flagged) flagged->assign(static_cast<std::size_t>(beta.cols()), false);
    for (Index k = 0; k < beta.cols(); ++k) {
        const double scale = beta.col(k).sum();
        if (!(scale > 0)) {
            if (flagged) (*flagged)[static_cast<std::size_t>(k)] = true;
            continue;
        }
        beta.col(k) /= scale;
        theta.col(k) *= scale;
    }
}

}  // namespace

GapParams normalize_gap_scale(const GapParams &params, std::vector<bool> *flagged)
{
    GapParams out = params;
    normalize_columns(out.theta, out.beta, flagged);
    return out;
}

PosteriorSamples normalize_gap_scale(const PosteriorSamples &s)
{
    PosteriorSamples out = s;
    for (Index c = 0; c < s.num_chains(); ++c)
        for (Index t = 0; t < s.num_draws(); ++t) {
            MatrixXd theta = s.draw("theta", c, t);
            MatrixXd beta = s.draw("beta", c, t);
            normalize_columns(theta, beta, nullptr);
            out.set_draw("theta", c, t, theta);
            out.set_draw("beta", c, t, beta);
        }
    return out;
}

std::string permutation_to_json(const TopicPermutation &perm)
{
    nlohmann::ordered_json j;
    j["perm"] = perm.perm;
    nlohmann::ordered_json scores = nlohmann::ordered_json::array();
    for (double s : perm.match_scores) {
        if (std::isfinite(s))
            scores.push_back(s);
        else
            scores.push_back(nullptr);
    }
    j["match_scores"] = scores;
    j["flagged"] = perm.flagged;
    return j.dump(2) + "\n";
}

TopicPermutation permutation_from_json(const std::string &text)
{
    const auto j = nlohmann::json::parse(text);
    TopicPermutation p;
    p.perm = j.at("perm").get<std::vector<Index>>();
    for (const auto &s : j.at("match_scores")) p.match_scores.push_back(s.is_null() ? kNegInf : s.get<double>());
    p.flagged = j.value("flagged", std::vector<bool>(p.perm.size(), false));
    return p;
}

}  // namespace plvm
