// Acceptance battery. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Arguments select criteria by number.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "plvm/align.hpp"
#include "plvm/cli.hpp"
#include "plvm/distributions.hpp"
#include "plvm/gap.hpp"
#include "plvm/lda.hpp"
#include "plvm/ppc.hpp"
#include "plvm/simstudy.hpp"
#include "plvm/unigram.hpp"

using namespace plvm;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes, pinned.
constexpr double kTvBound = 0.02;             // 1: total variation
constexpr long kExactSweeps = 100000;         // 1
constexpr double kExactRuntimeS = 60;         // 1
constexpr double kSeBound = 3;                // 2: Monte Carlo standard errors
constexpr double kGradRelErr = 1e-5;          // 3
constexpr double kElboSlack = -1e-8;          // 4
constexpr double kCoverageAlpha = 0.01;       // 7
constexpr double kEigenFactor = 0.5;          // 8
constexpr double kAlignRate = 0.95;           // 9
constexpr double kAlignNoise = 0.1;           // 9: noise SD as a fraction of the column mean
constexpr double kMaskAlpha = 0.01;           // 10: 99% binomial interval
constexpr double kScaleRelErr = 1e-12;        // 11

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// 1. Collapsed Gibbs vs exact enumeration on a 9-token corpus.
Outcome exact_lda()
{
    const auto start = std::chrono::steady_clock::now();
    CountArray x(2, 3);
    x << 2, 1, 1, 0, 3, 2;
    LdaCollapsedGibbs g(x, 2, VectorXd::Ones(2), VectorXd::Ones(3), Rng(11));
    std::vector<oracle::CellCount> cells;
    for (const auto &c : g.cells()) cells.push_back({c.doc, c.feature, c.count});
    const auto exact = oracle::lda_k2_posterior(cells, 2, 3, 1.0, 1.0);
    for (int i = 0; i < 1000; ++i) g.sweep();
    std::map<std::vector<Count>, long> counts;
    std::vector<Count> key(cells.size());
    for (long i = 0; i < kExactSweeps; ++i) {
        g.sweep();
        for (std::size_t c = 0; c < cells.size(); ++c) key[c] = g.cell_labels()[2 * c];
        ++counts[key];
    }
    const double tv = oracle::total_variation(exact, counts, kExactSweeps);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {tv < kTvBound && secs < kExactRuntimeS,
            "TV " + fmt("%.4f", tv) + " over " + std::to_string(exact.size()) + " states, " + fmt("%.1f s", secs)};
}

// 2. K = 1 LDA beta and all-zero GaP theta conditionals.
Outcome conjugacy()
{
    Rng rng(21);
    CountArray c(5, 4);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = static_cast<Count>(rng() % 7);
    GibbsOptions o;
    o.iters = 20100;
    o.warmup = 100;
    o.chains = 1;
    o.seed = 22;
    o.threads = 1;
    const double gamma = 0.5;
    const auto s = fit_lda_gibbs(CountMatrix(c), 1, 1.0, gamma, o);
    const VectorXd post = (c.colwise().sum().cast<double>().array() + gamma).matrix().transpose();
    const double a0 = post.sum();
    double worst = 0;
    for (Index v = 0; v < 4; ++v) {
        const MatrixXd d = s.entry_draws("beta", v, 0);
        const std::vector<double> draws(d.data(), d.data() + d.size());
        const double m = post[v] / a0;
        const double se = std::sqrt(m * (1 - m) / (a0 + 1) / static_cast<double>(draws.size()));
        worst = std::max(worst, std::abs(oracle::mean(draws) - m) / se);
    }

    const GapHyper h{2, 3, 1, 1};
    GapGibbs gg(CountArray::Zero(1, 3), 1, h, 0, Rng(23));
    MatrixXd beta(3, 1);
    beta << 0.5, 1.0, 1.5;
    gg.set_beta(beta);
    gg.sample_latent();
    std::vector<double> th;
    for (int i = 0; i < 100000; ++i) {
        gg.sample_theta();
        th.push_back(gg.theta()(0, 0));
    }
    const double rate = h.b0 + beta.sum();
    const double z_gap = std::abs(oracle::mean(th) - h.a0 / rate) / std::sqrt(h.a0 / (rate * rate) / th.size());
    worst = std::max(worst, z_gap);
    return {worst < kSeBound, "largest deviation " + fmt("%.2f SE", worst)};
}

// 3. Unigram gradient vs central differences.
Outcome gradients()
{
    Rng rng(31);
    double worst = 0;
    const double h = 1e-5;
    for (int rep = 0; rep < 20; ++rep) {
        const Index T = 1 + static_cast<Index>(rng() % 10), V = 1 + static_cast<Index>(rng() % 20);
        CountArray x(T, V);
        std::vector<Index> slots;
        for (Index d = 0; d < T; ++d) slots.push_back(d);
        for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<Count>(rng() % 50);
        MatrixXd mu(T, V);
        for (Index i = 0; i < mu.size(); ++i) mu.data()[i] = sample_normal(0, 1, rng);
        const double omega = sample_normal(0, 0.5, rng);
        const UnigramData data(x, slots, T);
        const UnigramGradient g = unigram_grad(mu, omega, data);
        for (Index i = 0; i < mu.size(); ++i) {
            MatrixXd up = mu, down = mu;
            up.data()[i] += h;
            down.data()[i] -= h;
            const double fd = (unigram_grad(up, omega, data).value - unigram_grad(down, omega, data).value) / (2 * h);
            worst = std::max(worst, std::abs(g.mu.data()[i] - fd) / (1 + std::abs(g.mu.data()[i])));
        }
        const double fd = (unigram_grad(mu, omega + h, data).value - unigram_grad(mu, omega - h, data).value) / (2 * h);
        worst = std::max(worst, std::abs(g.log_sigma2 - fd) / (1 + std::abs(g.log_sigma2)));
    }
    return {worst < kGradRelErr, "max relative error " + fmt("%.2e", worst)};
}

// 4. CAVI ELBO traces never decrease.
Outcome elbo_monotone()
{
    Rng rng(41);
    double worst = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const Index D = 3 + static_cast<Index>(rng() % 8), V = 4 + static_cast<Index>(rng() % 12);
        const Index K = 2 + static_cast<Index>(rng() % 3);
        CaviOptions o;
        o.seed = rng();
        o.restarts = 1;
        o.max_iters = 200;
        o.tol = 0;
        const auto lda = simulate_lda(CountVector::Constant(D, 60), V, K, 0.5, 0.5, rng);
        const auto f = fit_lda_cavi(lda.data, K, 0.5, 0.5, o);
        for (std::size_t i = 1; i < f.elbo_trace.size(); ++i)
            worst = std::min(worst, f.elbo_trace[i] - f.elbo_trace[i - 1]);
        const auto gap = simulate_gap(D, V, K, hyperparams_for_expected_total(80, K, V), 0, rng);
        const auto gf = fit_gap_cavi(gap.data, K, gap.truth.hyper, 0, o);
        for (std::size_t i = 1; i < gf.elbo_trace.size(); ++i)
            worst = std::min(worst, gf.elbo_trace[i] - gf.elbo_trace[i - 1]);
    }
    return {worst >= kElboSlack, "smallest step " + fmt("%.3e", worst)};
}

std::map<std::pair<std::string, Index>, double> mean_rmse_by(const std::vector<CellResult> &rows,
                                                             const std::function<std::string(const CellResult &)> &key)
{
    std::map<std::pair<std::string, Index>, std::pair<double, int>> acc;
    for (const auto &r : rows) {
        if (r.failed) continue;
        auto &a = acc[{key(r), r.D}];
        a.first += mean_rmse(r);
        a.second += 1;
    }
    std::map<std::pair<std::string, Index>, double> out;
    for (const auto &[k, v] : acc) out[k] = v.first / v.second;
    return out;
}

// 5. LDA: the larger design has smaller error for every method.
Outcome concentration()
{
    StudyGrid g;
    g.model = "lda";
    g.cells = {{20, 325, 1625}, {100, 325, 6500}};
    g.K = 2;
    g.alpha = g.gamma = 1;
    g.seeds = {1, 2, 3, 4, 5};
    g.methods = {"gibbs", "vb", "bootstrap"};
    g.save_draws = false;
    const auto rows = run_study(g);
    const auto m = mean_rmse_by(rows, [](const CellResult &r) { return r.method; });
    bool pass = true;
    std::string detail;
    for (const auto &method : g.methods) {
        const auto small = m.find({method, 20}), large = m.find({method, 100});
        if (small == m.end() || large == m.end()) {
            pass = false;
            detail += method + " missing; ";
            continue;
        }
        pass = pass && large->second < small->second;
        detail += method + " " + fmt("%.4f", small->second) + " -> " + fmt("%.4f", large->second) + "; ";
    }
    return {pass, detail};
}

// 6. Z-GaP data: ignoring zero inflation does not help.
Outcome misspecification()
{
    StudyGrid g;
    g.model = "zgap";
    g.cells = {{100, 325, 6500}};
    g.K = 2;
    g.p0 = {0.2};
    g.seeds = {1, 2, 3, 4, 5};
    g.methods = {"vb", "gibbs"};
    g.save_draws = false;
    const auto rows = run_study(g);
    const auto m = mean_rmse_by(rows, [](const CellResult &r) { return r.model + "/" + r.method; });
    bool pass = true;
    std::string detail;
    for (const auto &method : g.methods) {
        const auto gap = m.find({"gap/" + method, 100}), zgap = m.find({"zgap/" + method, 100});
        if (gap == m.end() || zgap == m.end()) {
            pass = false;
            detail += method + " missing; ";
            continue;
        }
        pass = pass && gap->second >= zgap->second;
        detail += method + " gap " + fmt("%.4f", gap->second) + " vs zgap " + fmt("%.4f", zgap->second) + "; ";
    }
    return {pass, detail};
}

// 7. HMC 50% intervals for mu cover the truth at the nominal rate.
Outcome unigram_coverage()
{
    const Index T = 10, V = 20;
    Rng rng(71);
    std::vector<Index> slots;
    for (Index d = 0; d < T; ++d) slots.push_back(d);
    const auto sim = simulate_unigram(T, V, slots, CountVector::Constant(T, 1000), 1.0, rng);
    UnigramFitOptions o;
    o.hmc.seed = 72;
    const auto s = fit_unigram(sim.data, UnigramMethod::hmc, o);
    // Raw mu is identified only up to a per-slot shift, so the centered
    // coverage is reported alongside; only the raw count is tested.
    long covered = 0, centered = 0;
    for (Index t = 0; t < T; ++t)
        for (Index v = 0; v < V; ++v) {
            const MatrixXd d = s.entry_draws("mu", t, v);
            std::vector<double> draws(d.data(), d.data() + d.size()), shifted;
            for (Index i = 0; i < s.total_draws(); ++i) {
                const MatrixXd m = s.pooled_draw("mu", i);
                shifted.push_back(m(t, v) - m.row(t).mean());
            }
            const double truth = sim.truth.mu(t, v);
            const double truth_c = truth - sim.truth.mu.row(t).mean();
            covered += truth >= oracle::quantile7(draws, 0.25) && truth <= oracle::quantile7(draws, 0.75);
            centered += truth_c >= oracle::quantile7(shifted, 0.25) && truth_c <= oracle::quantile7(shifted, 0.75);
        }
    const long n = T * V;
    const double p = oracle::binomial_two_sided(covered, n, 0.5);
    return {p >= kCoverageAlpha, std::to_string(covered) + "/" + std::to_string(n) + " covered, binomial p " +
                                     fmt("%.4f", p) + " (centered: " + std::to_string(centered) + "/" +
                                     std::to_string(n) + ")"};
}

// 8. Replicates from a K = 4 LDA fit show a drop after the fourth eigenvalue.
Outcome eigen_signature()
{
    const Index D = 56, V = 300, K = 4;
    const Count N = 5000;
    Rng rng(81);
    const auto sim = simulate_lda(CountVector::Constant(D, N), V, K, 1.0, 0.1, rng);
    GibbsOptions o;
    o.iters = 600;
    o.warmup = 300;
    o.chains = 1;
    o.seed = 82;
    const auto post = fit_lda_gibbs(sim.data, K, 1.0, 0.1, o);
    Rng prng(83);
    const auto reps = draw_posterior_predictive(ModelKind::lda, sim.data, post, 100, prng);
    PcaOptions po;
    po.rank = 5;
    const PcaCheck check = ppc_pca(sim.data, reps, po);
    std::vector<double> ratios;
    for (const auto &r : check.replicates) ratios.push_back(r.eigenvalues[4] / r.eigenvalues[3]);
    const double rep_ratio = oracle::quantile7(ratios, 0.5);

    // Full-rank overdispersed data: independent gamma-Poisson entries.
    const VectorXd p = sample_dirichlet(VectorXd::Constant(V, 0.5), rng);
    CountArray od(D, V);
    for (Index d = 0; d < D; ++d)
        for (Index v = 0; v < V; ++v)
            od(d, v) = sample_poisson(static_cast<double>(N) * p[v] * sample_gamma(0.5, 0.5, rng), rng);
    const PcaCheck full = ppc_pca(CountMatrix(od), {}, po);
    const double obs_ratio = full.observed.eigenvalues[4] / full.observed.eigenvalues[3];
    return {rep_ratio < kEigenFactor * obs_ratio,
            "replicate median " + fmt("%.3f", rep_ratio) + " vs full-rank " + fmt("%.3f", obs_ratio)};
}

// 9. Greedy alignment recovers random permutations.
Outcome alignment()
{
    Rng rng(91);
    const Index V = 50;
    const int trials = 200;
    std::string detail;
    bool pass = true;
    for (Index K = 2; K <= 4; ++K) {
        int correct = 0, agrees = 0;
        for (int t = 0; t < trials; ++t) {
            MatrixXd ref(V, K);
            for (Index k = 0; k < K; ++k) ref.col(k) = sample_dirichlet(VectorXd::Ones(V), rng);
            std::vector<Index> applied(static_cast<std::size_t>(K));
            for (Index k = 0; k < K; ++k) applied[static_cast<std::size_t>(k)] = k;
            std::shuffle(applied.begin(), applied.end(), rng);
            MatrixXd est(V, K);
            for (Index k = 0; k < K; ++k) {
                const double sd = kAlignNoise * ref.col(k).mean();
                for (Index v = 0; v < V; ++v)
                    est(v, applied[static_cast<std::size_t>(k)]) = std::max(0.0, ref(v, k) + sample_normal(0, sd * sd, rng));
            }
            const auto perm = align_topics(ref, est).perm;
            correct += perm == applied;
            // Exhaustive search over all K! assignments on the same sqrt-correlation scale.
            double best = -1e300;
            std::vector<Index> arg;
            for (const auto &p : oracle::permutations(static_cast<int>(K))) {
                double sum = 0;
                for (Index k = 0; k < K; ++k) {
                    std::vector<double> a, b;
                    for (Index v = 0; v < V; ++v) {
                        a.push_back(std::sqrt(ref(v, k)));
                        b.push_back(std::sqrt(est(v, p[static_cast<std::size_t>(k)])));
                    }
                    sum += oracle::correlation(a, b);
                }
                if (sum > best) {
                    best = sum;
                    arg.assign(p.begin(), p.end());
                }
            }
            agrees += arg == perm;
        }
        const double rate = static_cast<double>(correct) / trials;
        pass = pass && rate >= kAlignRate && agrees == trials;
        detail += "K=" + std::to_string(K) + " " + std::to_string(correct) + "/" + std::to_string(trials) +
                  " (exhaustive agrees " + std::to_string(agrees) + "); ";
    }
    return {pass, detail};
}

// 10. Structural-zero fraction.
Outcome zero_rate()
{
    Rng rng(101);
    const auto sim = simulate_gap(100, 325, 2, hyperparams_for_expected_total(6500, 2, 325), 0.2, rng);
    long masked = 0;
    for (Index i = 0; i < sim.mask.size(); ++i) masked += sim.mask.data()[i];
    const long n = sim.mask.size();
    const double p = oracle::binomial_two_sided(masked, n, 0.2);
    return {p >= kMaskAlpha, std::to_string(masked) + "/" + std::to_string(n) + " masked, binomial p " + fmt("%.3f", p)};
}

// 11. GaP scale normalization and likelihood invariance.
Outcome scale_invariance()
{
    Rng rng(111);
    const auto sim = simulate_gap(30, 40, 3, hyperparams_for_expected_total(500, 3, 40), 0.1, rng);
    const GapParams n = normalize_gap_scale(sim.truth);
    const MatrixXd before = sim.truth.theta * sim.truth.beta.transpose();
    const MatrixXd after = n.theta * n.beta.transpose();
    const double rel = ((after - before).array().abs() / before.array().abs()).maxCoeff();
    bool exact = true;
    for (double c : {0.25, 2.0, 1024.0}) {
        for (ZeroInflation mode : {ZeroInflation::none, ZeroInflation::known_p0}) {
            const double p0 = mode == ZeroInflation::none ? 0 : 0.1;
            const double a = gap_log_likelihood(sim.data.counts(), sim.truth.theta, sim.truth.beta, mode, p0);
            const double b =
                gap_log_likelihood(sim.data.counts(), sim.truth.theta * c, sim.truth.beta / c, mode, p0);
            exact = exact && a == b;
        }
    }
    return {rel < kScaleRelErr && exact,
            "max relative change " + fmt("%.2e", rel) + (exact ? ", likelihood exact" : ", likelihood NOT exact")};
}

int run_cli_args(const std::vector<std::string> &args)
{
    std::vector<std::string> store{"plvm"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<const char *> argv;
    for (const auto &s : store) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::map<std::string, std::string> csv_files(const fs::path &root)
{
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

// 12. simulate -> fit -> ppc -> report twice gives byte-identical CSVs.
Outcome determinism()
{
    const fs::path base = oracle::scratch_dir("acceptance_determinism");
    const std::vector<std::string> kinds{"theta_boxes", "beta_intervals", "representativeness", "qq"};
    const std::vector<std::string> ukinds{"mu_intervals", "ppc_overlay", "qq"};
    for (const char *run : {"a", "b"}) {
        const fs::path dir = base / run;
        int rc = run_cli_args({"simulate", "--model", "lda", "-k", "3", "--alpha", "1", "--gamma", "1", "-D", "12",
                               "-V", "30", "-N", "200", "-T", "6", "--seed", "121", "--out", (dir / "sim").string()});
        rc |= run_cli_args({"fit", "--model", "lda", "-k", "3", "--alpha", "1", "--gamma", "1", "--method", "gibbs",
                            "--iters", "200", "--warmup", "100", "--chains", "2", "--threads", "2", "--seed", "122",
                            "--counts", (dir / "sim" / "counts.csv").string(), "--out", (dir / "fit").string()});
        rc |= run_cli_args({"ppc", "--fit", (dir / "fit").string(), "--replicates", "30", "--threads", "2"});
        for (const auto &k : kinds) rc |= run_cli_args({"report", "--fit", (dir / "fit").string(), "--kind", k});

        rc |= run_cli_args({"simulate", "--model", "unigram", "-D", "12", "-V", "8", "-N", "300", "-T", "6",
                            "--set", "sigma0_sq=1", "--seed", "123", "--out", (dir / "usim").string()});
        rc |= run_cli_args({"fit", "--model", "unigram", "--method", "hmc", "--iters", "300", "--warmup", "150",
                            "--chains", "2", "--threads", "2", "--seed", "124",
                            "--counts", (dir / "usim" / "counts.csv").string(), "--sample-meta",
                            (dir / "usim" / "sample_meta.csv").string(), "--out", (dir / "ufit").string()});
        rc |= run_cli_args({"ppc", "--fit", (dir / "ufit").string(), "--replicates", "30"});
        for (const auto &k : ukinds) rc |= run_cli_args({"report", "--fit", (dir / "ufit").string(), "--kind", k});
        if (rc != 0) return {false, std::string("pipeline run ") + run + " failed"};
    }
    const auto a = csv_files(base / "a"), b = csv_files(base / "b");
    if (a.size() != b.size()) return {false, "different file sets"};
    std::size_t same = 0;
    std::string diff;
    for (const auto &[name, text] : a) {
        const auto it = b.find(name);
        if (it != b.end() && it->second == text)
            ++same;
        else
            diff += name + " ";
    }
    return {same == a.size(), std::to_string(same) + "/" + std::to_string(a.size()) + " CSV files identical" +
                                  (diff.empty() ? "" : "; differ: " + diff)};
}

}  // namespace

int main(int argc, char **argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"exact-posterior equivalence, LDA", exact_lda},
        {"conjugacy oracles", conjugacy},
        {"unigram gradient correctness", gradients},
        {"CAVI ELBO monotonicity", elbo_monotone},
        {"concentration ordering, LDA", concentration},
        {"misspecification ordering, GaP vs Z-GaP", misspecification},
        {"unigram HMC calibration", unigram_coverage},
        {"eigenvalue signature", eigen_signature},
        {"alignment recovery", alignment},
        {"zero-inflation rate", zero_rate},
        {"GaP scale invariance", scale_invariance},
        {"end-to-end determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
