#include "plvm/simstudy.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "plvm/align.hpp"
#include "plvm/bootstrap.hpp"
#include "plvm/csv.hpp"
#include "plvm/gap.hpp"
#include "plvm/lda.hpp"
#include "plvm/parallel.hpp"

namespace plvm {

VectorXd rmse_sqrt_medians(const MatrixXd &truth, const MatrixXd &median)
{
    if (truth.rows() != median.rows() || truth.cols() != median.cols())
        throw DomainError("rmse_sqrt_medians: shape mismatch");
    if ((truth.array() < 0).any() || (median.array() < 0).any())
        throw DomainError("rmse_sqrt_medians: entries must be nonnegative");
    const MatrixXd diff = median.array().sqrt() - truth.array().sqrt();
    return (diff.rowwise().squaredNorm() / static_cast<double>(truth.cols())).array().sqrt();
}

VectorXd rmse_sqrt_medians(const MatrixXd &truth, const PosteriorSamples &aligned, const std::string &param)
{
    return rmse_sqrt_medians(truth, aligned.median(param));
}

VectorXd sd_along_first_topic(const PosteriorSamples &aligned, const std::string &param)
{
    const Index n = aligned.total_draws();
    if (n < 2) throw DomainError("sd_along_first_topic: need at least two draws");
    const auto &p = aligned.param(param);
    VectorXd mean = VectorXd::Zero(p.rows);
    VectorXd m2 = VectorXd::Zero(p.rows);
    for (Index i = 0; i < n; ++i) {
        const VectorXd x = aligned.pooled_draw(param, i).col(0).cwiseMax(0.0).cwiseSqrt();
        const VectorXd delta = x - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta.cwiseProduct(x - mean);
    }
    return (m2 / static_cast<double>(n - 1)).cwiseMax(0.0).cwiseSqrt();
}

// Grid

std::vector<StudyCell> StudyGrid::expanded_cells() const
{
    if (!cells.empty()) return cells;
    std::vector<StudyCell> out;
    for (Index d : D)
        for (Index v : V)
            for (double n : N) out.push_back({d, v, n});
    return out;
}

namespace {

const std::set<std::string> &methods_for(const std::string &model)
{
    static const std::set<std::string> topic{"gibbs", "vb", "bootstrap"};
    static const std::set<std::string> walk{"hmc", "advi"};
    return model == "unigram" ? walk : topic;
}

}  // namespace

namespace {

void throw_problems(const std::vector<std::string> &problems)
{
    if (problems.empty()) return;
    std::string msg = "invalid study grid:";
    for (const auto &p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
}

}  // namespace

void StudyGrid::validate() const
{
    std::vector<std::string> problems;
    collect_problems(problems);
    throw_problems(problems);
}

void StudyGrid::collect_problems(std::vector<std::string> &problems) const
{
    if (model != "lda" && model != "gap" && model != "zgap" && model != "unigram")
        problems.push_back("model must be one of lda, gap, zgap, unigram");
    const auto all = expanded_cells();
    if (all.empty()) problems.push_back("grid has no cells");
    for (const auto &c : all)
        if (c.D < 1 || c.V < 1 || !(c.N > 0)) problems.push_back("cells need D >= 1, V >= 1 and N > 0");
    if (K < 1) problems.push_back("K must be >= 1");
    if (!(alpha > 0) || !(gamma > 0)) problems.push_back("alpha and gamma must be > 0");
    if (p0.empty()) problems.push_back("p0 list must be nonempty");
    for (double p : p0)
        if (!(p >= 0 && p < 1)) problems.push_back("p0 values must lie in [0, 1)");
    if (model == "zgap" && std::none_of(p0.begin(), p0.end(), [](double p) { return p > 0; }))
        problems.push_back("zgap needs a positive true p0");
    if (model == "unigram" && (T < 1 || !(sigma0_sq > 0))) problems.push_back("unigram needs T >= 1 and sigma0_sq > 0");
    if (methods.empty()) problems.push_back("methods must be nonempty");
    for (const auto &m : methods)
        if (!methods_for(model).count(m)) problems.push_back("method '" + m + "' is not available for " + model);
    if (seeds.empty()) problems.push_back("seeds must be nonempty");
    if (gibbs.iters <= gibbs.warmup || gibbs.chains < 1 || gibbs.thin < 1)
        problems.push_back("gibbs needs iters > warmup, chains >= 1, thin >= 1");
    if (cavi.max_iters < 1 || cavi.restarts < 1) problems.push_back("cavi needs max_iters >= 1 and restarts >= 1");
    if (bootstrap_replicates < 1) problems.push_back("bootstrap_replicates must be >= 1");
    if (vb_draws < 2) problems.push_back("vb_draws must be >= 2");
}

namespace {

using nlohmann::json;

class KeyChecker {
public:
    KeyChecker(const json &obj, std::string where, std::vector<std::string> &problems)
        : obj_(obj), where_(std::move(where)), problems_(problems)
    {
    }

    template <typename T>
    void get(const char *key, T &out)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception &) {
            problems_.push_back(where_ + key + ": wrong type");
        }
    }

    void finish()
    {
        for (const auto &[k, v] : obj_.items())
            if (!seen_.count(k)) problems_.push_back("unknown key '" + where_ + k + "'");
    }

private:
    const json &obj_;
    std::string where_;
    std::vector<std::string> &problems_;
    std::set<std::string> seen_;
};

}  // namespace

StudyGrid parse_grid(const std::string &json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("study grid is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("study grid must be a JSON object");

    StudyGrid g;
    std::vector<std::string> problems;
    KeyChecker top(j, "", problems);
    bool full_grid = false;
    top.get("full_grid", full_grid);
    if (full_grid) {
        g.D = {20, 100};
        g.V = {325, 650};
        g.N = {1625, 3250, 6500};
        g.bootstrap_replicates = 500;
    }
    top.get("model", g.model);
    top.get("D", g.D);
    top.get("V", g.V);
    top.get("N", g.N);
    top.get("K", g.K);
    top.get("alpha", g.alpha);
    top.get("gamma", g.gamma);
    top.get("p0", g.p0);
    top.get("T", g.T);
    top.get("sigma0_sq", g.sigma0_sq);
    top.get("methods", g.methods);
    top.get("bootstrap_replicates", g.bootstrap_replicates);
    top.get("vb_draws", g.vb_draws);
    top.get("normalize_gap", g.normalize_gap);
    top.get("save_draws", g.save_draws);
    top.get("record_runtime", g.record_runtime);
    top.get("threads", g.threads);
    if (j.contains("seeds")) {
        const auto &s = j.at("seeds");
        if (s.is_number_integer() && s.get<long long>() > 0) {
            g.seeds.clear();
            for (long long i = 1; i <= s.get<long long>(); ++i) g.seeds.push_back(static_cast<std::uint64_t>(i));
        } else if (s.is_array()) {
            try {
                g.seeds = s.get<std::vector<std::uint64_t>>();
            } catch (const json::exception &) {
                problems.push_back("seeds: expected nonnegative integers");
            }
        } else {
            problems.push_back("seeds: expected a positive count or a list");
        }
    }
    json ignored;
    top.get("seeds", ignored);
    if (j.contains("cells")) {
        if (!j.at("cells").is_array()) {
            problems.push_back("cells: expected a list");
        } else {
            for (const auto &c : j.at("cells")) {
                StudyCell cell;
                KeyChecker kc(c, "cells.", problems);
                kc.get("D", cell.D);
                kc.get("V", cell.V);
                kc.get("N", cell.N);
                kc.finish();
                g.cells.push_back(cell);
            }
        }
    }
    top.get("cells", ignored);
    auto section = [&](const char *name, auto &&fn) {
        top.get(name, ignored);
        if (!j.contains(name)) return;
        if (!j.at(name).is_object()) {
            problems.push_back(std::string(name) + ": expected an object");
            return;
        }
        KeyChecker kc(j.at(name), std::string(name) + ".", problems);
        fn(kc);
        kc.finish();
    };
    section("gibbs", [&](KeyChecker &kc) {
        kc.get("iters", g.gibbs.iters);
        kc.get("warmup", g.gibbs.warmup);
        kc.get("thin", g.gibbs.thin);
        kc.get("chains", g.gibbs.chains);
    });
    section("cavi", [&](KeyChecker &kc) {
        kc.get("max_iters", g.cavi.max_iters);
        kc.get("tol", g.cavi.tol);
        kc.get("restarts", g.cavi.restarts);
        kc.get("init_noise", g.cavi.init_noise);
    });
    section("hmc", [&](KeyChecker &kc) {
        kc.get("warmup", g.hmc.warmup);
        kc.get("draws", g.hmc.draws);
        kc.get("chains", g.hmc.chains);
        kc.get("leapfrog_steps", g.hmc.leapfrog_steps);
        kc.get("target_accept", g.hmc.target_accept);
    });
    section("advi", [&](KeyChecker &kc) {
        kc.get("iters", g.advi.iters);
        kc.get("grad_samples", g.advi.grad_samples);
        kc.get("eta", g.advi.eta);
        kc.get("eval_every", g.advi.eval_every);
        kc.get("tol_rel_obj", g.advi.tol_rel_obj);
        kc.get("draws", g.advi.draws);
    });
    top.finish();
    if (g.model == "unigram" && !j.contains("methods")) g.methods = {"hmc", "advi"};
    g.collect_problems(problems);
    throw_problems(problems);
    return g;
}

StudyGrid read_grid(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open study grid '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_grid(ss.str());
}

double mean_rmse(const CellResult &r, const std::string &param)
{
    if (r.failed) return std::numeric_limits<double>::quiet_NaN();
    for (const auto &p : r.params)
        if (p.param == param) return p.rmse.size() ? p.rmse.mean() : std::numeric_limits<double>::quiet_NaN();
    return std::numeric_limits<double>::quiet_NaN();
}

// Study execution

namespace {

struct Job {
    StudyCell cell;
    double p0 = 0;
    std::uint64_t seed = 0;
};

std::uint64_t fnv1a(const std::string &s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t job_stream(const Job &j, const std::string &model)
{
    std::uint64_t h = mix64(fnv1a(model) ^ 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ static_cast<std::uint64_t>(j.cell.D));
    h = mix64(h ^ static_cast<std::uint64_t>(j.cell.V));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(j.cell.N));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(j.p0));
    return h;
}

std::string cell_tag(const std::string &model, const std::string &method, const Job &j)
{
    std::ostringstream s;
    s << model << "_D" << j.cell.D << "_V" << j.cell.V << "_N" << csv::format_double(j.cell.N) << "_p0"
      << csv::format_double(j.p0) << "_seed" << j.seed << '_' << method;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_rhat_flag(const PosteriorSamples &s, const std::string &param, std::vector<std::string> &flags)
{
    if (s.num_chains() < 2 || s.num_draws() < 4) return;
    double worst = 1;
    const auto &p = s.param(param);
    for (Index c = 0; c < p.cols; ++c)
        for (Index r = 0; r < p.rows; ++r) worst = std::max(worst, split_rhat(s.entry_draws(param, r, c)));
    if (worst > 1.1) flags.push_back("rhat>1.1");
}

/// Topic-model summaries after scale normalization (GaP) and alignment.
void summarize_topics(const MatrixXd &true_theta, const MatrixXd &true_beta, PosteriorSamples s, bool normalize,
                      const CountMatrix &x, CellResult &res)
{
    MatrixXd theta = true_theta;
    MatrixXd beta = true_beta;
    if (normalize) {
        GapParams p;
        p.theta = theta;
        p.beta = beta;
        p = normalize_gap_scale(p);
        theta = p.theta;
        beta = p.beta;
        s = normalize_gap_scale(s);
    }
    const TopicPermutation perm = align_topics(beta, s.median("beta"));
    for (bool f : perm.flagged)
        if (f) res.flags.push_back("alignment_flagged");
    s = apply_alignment(s, perm);
    res.params.push_back({"beta", x.feature_ids(), rmse_sqrt_medians(beta, s), sd_along_first_topic(s, "beta")});
    res.params.push_back({"theta", x.sample_ids(), rmse_sqrt_medians(theta, s, "theta"), sd_along_first_topic(s, "theta")});
}

void summarize_walk(const MatrixXd &true_mu, const PosteriorSamples &s, const CountMatrix &x, CellResult &res)
{
    const MatrixXd med = s.median("mu");
    const VectorXd rmse = ((med - true_mu).colwise().squaredNorm() / static_cast<double>(true_mu.rows()))
                              .transpose()
                              .array()
                              .sqrt();
    const Index n = s.total_draws();
    VectorXd sd = VectorXd::Zero(true_mu.cols());
    if (n >= 2) {
        MatrixXd first(n, true_mu.cols());
        for (Index i = 0; i < n; ++i) first.row(i) = s.pooled_draw("mu", i).row(0);
        const MatrixXd c = first.rowwise() - first.colwise().mean();
        sd = (c.colwise().squaredNorm() / static_cast<double>(n - 1)).transpose().array().sqrt();
    }
    res.params.push_back({"mu", x.feature_ids(), rmse, sd});
}

class JobRunner {
public:
    JobRunner(const StudyGrid &g, const std::optional<std::filesystem::path> &out) : g_(g), out_(out) {}

    std::vector<CellResult> run(const Job &job) const
    {
        if (g_.model == "lda") return run_lda(job);
        if (g_.model == "unigram") return run_unigram(job);
        return run_gap(job);
    }

private:
    CellResult base(const std::string &model, const std::string &method, const Job &j) const
    {
        CellResult r;
        r.model = model;
        r.method = method;
        r.D = j.cell.D;
        r.V = j.cell.V;
        r.N = j.cell.N;
        r.p0 = j.p0;
        r.seed = j.seed;
        return r;
    }

    std::uint64_t fit_seed(const Job &j, const std::string &label) const
    {
        return mix64(j.seed ^ mix64(job_stream(j, g_.model) ^ fnv1a(label)));
    }

    void save(const PosteriorSamples &s, const std::string &tag) const
    {
        if (!out_ || !g_.save_draws) return;
        write_samples(s, *out_ / "draws" / (tag + ".csv"), *out_ / "draws" / (tag + ".json"));
    }

    template <typename Fn>
    void attempt(CellResult &r, Fn &&fn) const
    {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception &e) {
            r.failed = true;
            r.reason = e.what();
            r.params.clear();
        }
        r.runtime_s = g_.record_runtime ? seconds_since(t0) : 0.0;
    }

    std::vector<CellResult> run_lda(const Job &job) const
    {
        Rng rng(job.seed, job_stream(job, g_.model));
        const CountVector totals = CountVector::Constant(job.cell.D, static_cast<Count>(std::llround(job.cell.N)));
        const LdaSimulation sim = simulate_lda(totals, job.cell.V, g_.K, g_.alpha, g_.gamma, rng);
        std::vector<CellResult> out;
        std::optional<LdaVariationalFit> vb;
        auto vb_fit = [&]() -> const LdaVariationalFit & {
            if (!vb) {
                CaviOptions o = g_.cavi;
                o.seed = fit_seed(job, "vb");
                o.threads = 1;
                vb = fit_lda_cavi(sim.data, g_.K, g_.alpha, g_.gamma, o);
            }
            return *vb;
        };
        for (const auto &method : g_.methods) {
            CellResult r = base("lda", method, job);
            attempt(r, [&] {
                PosteriorSamples s;
                if (method == "gibbs") {
                    GibbsOptions o = g_.gibbs;
                    o.seed = fit_seed(job, method);
                    o.threads = 1;
                    s = fit_lda_gibbs(sim.data, g_.K, g_.alpha, g_.gamma, o);
                    add_rhat_flag(s, "beta", r.flags);
                } else if (method == "vb") {
                    Rng draw_rng(fit_seed(job, "vb-draws"));
                    s = vb_fit().sample(g_.vb_draws, draw_rng);
                    if (!vb_fit().converged) r.flags.push_back("vb_not_converged");
                } else {
                    BootstrapOptions o;
                    o.replicates = g_.bootstrap_replicates;
                    o.seed = fit_seed(job, method);
                    o.threads = 1;
                    CaviOptions c = g_.cavi;
                    c.threads = 1;
                    s = lda_bootstrap(sim.data, vb_fit(), g_.alpha, g_.gamma, c, o);
                    if (s.metadata.extra["failed_replicates"] != "0")
                        r.flags.push_back("bootstrap_failed=" + s.metadata.extra["failed_replicates"]);
                }
                save(s, cell_tag("lda", method, job));
                summarize_topics(sim.truth.theta, sim.truth.beta, std::move(s), false, sim.data, r);
            });
            out.push_back(std::move(r));
        }
        return out;
    }

    std::vector<CellResult> run_gap(const Job &job) const
    {
        Rng rng(job.seed, job_stream(job, g_.model));
        const GapHyper hyper = hyperparams_for_expected_total(job.cell.N, g_.K, job.cell.V);
        const GapSimulation sim = simulate_gap(job.cell.D, job.cell.V, g_.K, hyper, job.p0, rng);
        std::vector<std::pair<std::string, double>> fits;
        if (g_.model == "zgap") {
            fits = {{"gap", 0.0}, {"zgap", job.p0}};
        } else {
            fits = {{"gap", job.p0}};
        }
        std::vector<CellResult> out;
        for (const auto &[label, p0_fit] : fits) {
            std::optional<GapVariationalFit> vb;
            auto vb_fit = [&, p0 = p0_fit, lbl = label]() -> const GapVariationalFit & {
                if (!vb) {
                    CaviOptions o = g_.cavi;
                    o.seed = fit_seed(job, lbl + "-vb");
                    o.threads = 1;
                    vb = fit_gap_cavi(sim.data, g_.K, hyper, p0, o);
                }
                return *vb;
            };
            for (const auto &method : g_.methods) {
                CellResult r = base(label, method, job);
                attempt(r, [&] {
                    PosteriorSamples s;
                    if (method == "gibbs") {
                        GibbsOptions o = g_.gibbs;
                        o.seed = fit_seed(job, label + "-" + method);
                        o.threads = 1;
                        s = fit_gap_gibbs(sim.data, g_.K, hyper, p0_fit, o);
                    } else if (method == "vb") {
                        Rng draw_rng(fit_seed(job, label + "-vb-draws"));
                        s = vb_fit().sample(g_.vb_draws, draw_rng);
                        if (!vb_fit().converged) r.flags.push_back("vb_not_converged");
                    } else {
                        BootstrapOptions o;
                        o.replicates = g_.bootstrap_replicates;
                        o.seed = fit_seed(job, label + "-" + method);
                        o.threads = 1;
                        CaviOptions c = g_.cavi;
                        c.threads = 1;
                        s = gap_bootstrap(sim.data, vb_fit(), hyper, p0_fit, c, o);
                        if (s.metadata.extra["failed_replicates"] != "0")
                            r.flags.push_back("bootstrap_failed=" + s.metadata.extra["failed_replicates"]);
                    }
                    save(s, cell_tag(label, method, job));
                    summarize_topics(sim.truth.theta, sim.truth.beta, std::move(s), g_.normalize_gap, sim.data, r);
                });
                out.push_back(std::move(r));
            }
        }
        return out;
    }

    std::vector<CellResult> run_unigram(const Job &job) const
    {
        Rng rng(job.seed, job_stream(job, g_.model));
        std::vector<Index> slots(static_cast<std::size_t>(job.cell.D));
        for (Index d = 0; d < job.cell.D; ++d) slots[static_cast<std::size_t>(d)] = d % g_.T;
        const Index T = std::min<Index>(g_.T, job.cell.D);
        const CountVector totals = CountVector::Constant(job.cell.D, static_cast<Count>(std::llround(job.cell.N)));
        const UnigramSimulation sim = simulate_unigram(T, job.cell.V, slots, totals, g_.sigma0_sq, rng);
        std::vector<CellResult> out;
        for (const auto &method : g_.methods) {
            CellResult r = base("unigram", method, job);
            attempt(r, [&] {
                UnigramFitOptions o;
                o.hmc = g_.hmc;
                o.hmc.seed = fit_seed(job, method);
                o.hmc.threads = 1;
                o.advi = g_.advi;
                o.advi.seed = fit_seed(job, method);
                const PosteriorSamples s =
                    fit_unigram(sim.data, method == "hmc" ? UnigramMethod::hmc : UnigramMethod::advi, o);
                if (!s.metadata.warnings.empty()) r.flags.push_back(method == "hmc" ? "divergent" : "advi_not_converged");
                if (method == "hmc") add_rhat_flag(s, "mu", r.flags);
                save(s, cell_tag("unigram", method, job));
                summarize_walk(sim.truth.mu, s, sim.data, r);
            });
            out.push_back(std::move(r));
        }
        return out;
    }

    const StudyGrid &g_;
    const std::optional<std::filesystem::path> &out_;
};

std::string clean(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

std::vector<CellResult> run_study(const StudyGrid &grid, const std::optional<std::filesystem::path> &out_dir)
{
    grid.validate();
    std::vector<Job> jobs;
    for (const auto &cell : grid.expanded_cells())
        for (double p0 : grid.p0)
            for (std::uint64_t seed : grid.seeds) jobs.push_back({cell, p0, seed});

    std::vector<std::vector<CellResult>> per_job(jobs.size());
    const JobRunner runner(grid, out_dir);
    parallel_for(static_cast<Index>(jobs.size()), grid.threads, [&](Index i) {
        const Job &job = jobs[static_cast<std::size_t>(i)];
        try {
            per_job[static_cast<std::size_t>(i)] = runner.run(job);
        } catch (const std::exception &e) {
            // Simulation itself failed: one failed row per method.
            for (const auto &m : grid.methods) {
                CellResult r;
                r.model = grid.model;
                r.method = m;
                r.D = job.cell.D;
                r.V = job.cell.V;
                r.N = job.cell.N;
                r.p0 = job.p0;
                r.seed = job.seed;
                r.failed = true;
                r.reason = e.what();
                per_job[static_cast<std::size_t>(i)].push_back(std::move(r));
            }
        }
    });

    std::vector<CellResult> results;
    for (auto &v : per_job)
        for (auto &r : v) results.push_back(std::move(r));

    if (out_dir) {
        csv::write_file(*out_dir / "summary.csv", study_summary_csv(results));
        std::ostringstream f;
        f << "model,method,D,V,N,p0,seed,reason\n";
        for (const auto &r : results)
            if (r.failed)
                f << r.model << ',' << r.method << ',' << r.D << ',' << r.V << ',' << csv::format_double(r.N) << ','
                  << csv::format_double(r.p0) << ',' << r.seed << ',' << clean(r.reason) << '\n';
        csv::write_file(*out_dir / "failures.csv", f.str());
    }
    return results;
}

std::string study_summary_csv(const std::vector<CellResult> &results)
{
    std::ostringstream out;
    out << "model,method,D,V,N,p0,seed,param,feature,rmse,sd,runtime_s,flags\n";
    for (const auto &r : results) {
        if (r.failed) continue;
        std::string flags;
        for (std::size_t i = 0; i < r.flags.size(); ++i) flags += (i ? ";" : "") + r.flags[i];
        for (const auto &p : r.params)
            for (Index i = 0; i < p.rmse.size(); ++i)
                out << r.model << ',' << r.method << ',' << r.D << ',' << r.V << ',' << csv::format_double(r.N) << ','
                    << csv::format_double(r.p0) << ',' << r.seed << ',' << p.param << ','
                    << p.labels[static_cast<std::size_t>(i)] << ',' << csv::format_double(p.rmse[i]) << ','
                    << csv::format_double(p.sd[i]) << ',' << csv::format_double(r.runtime_s) << ',' << flags << '\n';
    }
    return out.str();
}

}  // namespace plvm
