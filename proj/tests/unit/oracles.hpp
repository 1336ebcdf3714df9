#pragma once

// Independent reference computations for the unit tests. Nothing here calls
// into the library beyond its basic types.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "plvm/types.hpp"

namespace oracle {

using plvm::Count;
using plvm::Index;

/// log Mult(x | sum x, p) in long double via lgammal.
inline long double log_mult_pmf(const std::vector<Count> &x, const std::vector<long double> &p)
{
    long double n = 0, out = 0;
    for (std::size_t v = 0; v < x.size(); ++v) {
        n += static_cast<long double>(x[v]);
        out -= lgammal(static_cast<long double>(x[v]) + 1);
        if (x[v] > 0) {
            if (p[v] <= 0) return -INFINITY;
            out += static_cast<long double>(x[v]) * logl(p[v]);
        }
    }
    return out + lgammal(n + 1);
}

inline long double log_poisson(Count x, long double lambda)
{
    if (x == 0) return -lambda;
    return static_cast<long double>(x) * logl(lambda) - lambda - lgammal(static_cast<long double>(x) + 1);
}

/// Type-7 quantile by sorting a copy.
inline double quantile7(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double mean(const std::vector<double> &v)
{
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

/// Sample variance with two passes.
inline double variance(const std::vector<double> &v)
{
    const double m = mean(v);
    long double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return static_cast<double>(s / static_cast<long double>(v.size() - 1));
}

/// Pearson correlation.
inline double correlation(const std::vector<double> &a, const std::vector<double> &b)
{
    const double ma = mean(a), mb = mean(b);
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return static_cast<double>(sab / sqrtl(saa * sbb));
}

/// All permutations of 0..k-1 in lexicographic order.
inline std::vector<std::vector<Index>> permutations(Index k)
{
    std::vector<Index> p(static_cast<std::size_t>(k));
    std::iota(p.begin(), p.end(), Index{0});
    std::vector<std::vector<Index>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

/// Two-sided p-value of a binomial count against probability p (exact, by
/// summing outcomes no more likely than the observed one).
inline double binomial_two_sided(long k, long n, double p)
{
    auto lpmf = [&](long i) {
        return std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
               (n - i) * std::log1p(-p);
    };
    const double obs = lpmf(k);
    double total = 0;
    for (long i = 0; i <= n; ++i)
        if (lpmf(i) <= obs + 1e-9) total += std::exp(lpmf(i));
    return std::min(1.0, total);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("plvm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Exact collapsed posterior of LDA with K = 2 and symmetric priors, over
/// the per-cell count of tokens labelled topic 0. `cells` lists (doc,
/// feature, count) for the nonzero cells in row-major order.
struct CellCount {
    Index doc, feature;
    Count count;
};

inline std::map<std::vector<Count>, double> lda_k2_posterior(const std::vector<CellCount> &cells, Index D, Index V,
                                                             double alpha, double gamma)
{
    std::map<std::vector<Count>, double> out;
    std::vector<Count> state(cells.size(), 0);
    std::vector<long double> logw;
    std::vector<std::vector<Count>> states;
    while (true) {
        std::vector<long double> ndk(static_cast<std::size_t>(2 * D), 0), nvk(static_cast<std::size_t>(2 * V), 0);
        long double n0 = 0, n1 = 0, lw = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const long double a = static_cast<long double>(state[c]);
            const long double b = static_cast<long double>(cells[c].count - state[c]);
            ndk[static_cast<std::size_t>(2 * cells[c].doc)] += a;
            ndk[static_cast<std::size_t>(2 * cells[c].doc + 1)] += b;
            nvk[static_cast<std::size_t>(2 * cells[c].feature)] += a;
            nvk[static_cast<std::size_t>(2 * cells[c].feature + 1)] += b;
            n0 += a;
            n1 += b;
            // number of token-level assignments with this cell split
            lw += lgammal(static_cast<long double>(cells[c].count) + 1) - lgammal(a + 1) - lgammal(b + 1);
        }
        for (auto n : ndk) lw += lgammal(alpha + n);
        for (auto n : nvk) lw += lgammal(gamma + n);
        lw -= lgammal(V * gamma + n0) + lgammal(V * gamma + n1);
        logw.push_back(lw);
        states.push_back(state);
        std::size_t i = 0;
        while (i < cells.size() && state[i] == cells[i].count) state[i++] = 0;
        if (i == cells.size()) break;
        ++state[i];
    }
    long double m = logw[0];
    for (auto w : logw) m = std::max(m, w);
    long double z = 0;
    for (auto w : logw) z += expl(w - m);
    for (std::size_t i = 0; i < states.size(); ++i) out[states[i]] = static_cast<double>(expl(logw[i] - m) / z);
    return out;
}

/// Total-variation distance between an empirical histogram and a distribution.
inline double total_variation(const std::map<std::vector<Count>, double> &exact,
                              const std::map<std::vector<Count>, long> &counts, long n)
{
    double tv = 0;
    for (const auto &[k, p] : exact) {
        const auto it = counts.find(k);
        const double q = it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n);
        tv += std::abs(p - q);
    }
    for (const auto &[k, c] : counts)
        if (!exact.count(k)) tv += static_cast<double>(c) / static_cast<double>(n);
    return tv / 2;
}

}  // namespace oracle
