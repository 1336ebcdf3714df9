#include "plvm/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "plvm/align.hpp"
#include "plvm/bootstrap.hpp"
#include "plvm/corpus.hpp"
#include "plvm/csv.hpp"
#include "plvm/gap.hpp"
#include "plvm/lda.hpp"
#include "plvm/posterior.hpp"
#include "plvm/ppc.hpp"
#include "plvm/report.hpp"
#include "plvm/simstudy.hpp"
#include "plvm/unigram.hpp"

namespace plvm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char *kVersion = "0.1.0";

// Stream ids below the seed, one per pipeline stage, so stages never share draws.
constexpr std::uint64_t kSimulateStream = 0;
constexpr std::uint64_t kVariationalDrawStream = 1;
constexpr std::uint64_t kPpcStream = 2;
constexpr std::uint64_t kReportStream = 3;

const std::set<std::string> &known_models()
{
    static const std::set<std::string> m{"dmm", "lda", "gap", "zgap", "unigram"};
    return m;
}

const std::set<std::string> &methods_for(const std::string &model)
{
    static const std::map<std::string, std::set<std::string>> m{
        {"dmm", {"gibbs"}},
        {"lda", {"gibbs", "vb", "bootstrap"}},
        {"gap", {"gibbs", "vb", "bootstrap"}},
        {"zgap", {"gibbs", "vb", "bootstrap"}},
        {"unigram", {"hmc", "advi"}},
    };
    static const std::set<std::string> none;
    const auto it = m.find(model);
    return it == m.end() ? none : it->second;
}

json parse_object(const std::string &text, const std::string &what)
{
    if (text.empty()) return json::object();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    return j;
}

/// Reads typed fields from the merged object, collecting every problem.
class FieldReader {
public:
    FieldReader(const json &obj, std::vector<std::string> &problems) : obj_(obj), problems_(problems) {}

    template <typename T>
    void get(const std::string &key, T &out)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception &) {
            problems_.push_back(key + ": wrong type");
        }
    }

    template <typename T>
    void get(const std::string &key, std::optional<T> &out)
    {
        seen_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception &) {
            problems_.push_back(key + ": wrong type");
        }
    }

    void mark(const std::string &key) { seen_.insert(key); }

    void finish()
    {
        for (const auto &[k, v] : obj_.items())
            if (!seen_.count(k)) problems_.push_back("unknown key '" + k + "'");
    }

private:
    const json &obj_;
    std::vector<std::string> &problems_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const std::string &file_json, const std::string &flags_json, ConfigUse use,
                       std::vector<std::string> *conflicts)
{
    json merged = parse_object(file_json, "config");
    json flags = parse_object(flags_json, "flags");
    std::vector<std::string> problems;
    // "k" is accepted as an alias of "K".
    for (json *obj : {&merged, &flags}) {
        if (obj->contains("k")) {
            if (obj->contains("K")) problems.push_back("both 'k' and 'K' given");
            (*obj)["K"] = (*obj)["k"];
            obj->erase("k");
        }
    }
    for (const auto &[k, v] : flags.items()) {
        if (merged.contains(k) && merged[k] != v && conflicts)
            conflicts->push_back(k + ": flag " + v.dump() + " overrides config " + merged[k].dump());
        merged[k] = v;
    }

    RunConfig c;
    FieldReader r(merged, problems);
    r.get("model", c.model);
    r.get("method", c.method);
    r.get("K", c.K);
    std::optional<std::uint64_t> seed;
    r.get("seed", seed);
    r.get("threads", c.threads);
    r.get("alpha", c.alpha);
    r.get("gamma", c.gamma);
    r.get("a0", c.a0);
    r.get("b0", c.b0);
    r.get("c0", c.c0);
    r.get("d0", c.d0);
    r.get("expected_total", c.expected_total);
    r.get("p0", c.p0);
    r.get("prior_a", c.prior_a);
    r.get("prior_b", c.prior_b);
    r.get("iters", c.iters);
    r.get("warmup", c.warmup);
    r.get("thin", c.thin);
    r.get("chains", c.chains);
    r.get("leapfrog_steps", c.leapfrog_steps);
    r.get("target_accept", c.target_accept);
    r.get("max_iters", c.max_iters);
    r.get("tol", c.tol);
    r.get("restarts", c.restarts);
    r.get("advi_iters", c.advi_iters);
    r.get("eta", c.eta);
    r.get("grad_samples", c.grad_samples);
    r.get("draws", c.draws);
    r.get("replicates", c.replicates);
    r.get("D", c.D);
    r.get("V", c.V);
    r.get("N", c.N);
    r.get("T", c.T);
    r.get("sigma0_sq", c.sigma0_sq);
    r.get("counts", c.counts);
    r.get("sample_meta", c.sample_meta);
    r.get("taxonomy", c.taxonomy);
    r.get("out", c.out);
    r.finish();

    if (!seed) {
        if (const char *env = std::getenv("PLVM_SEED")) {
            long long v = 0;
            if (csv::parse_int(env, v) && v >= 0)
                seed = static_cast<std::uint64_t>(v);
            else
                problems.push_back("PLVM_SEED: expected a nonnegative integer");
        }
    }
    if (seed)
        c.seed = *seed;
    else
        problems.push_back("seed: required (config, --seed or PLVM_SEED)");

    if (c.model.empty())
        problems.push_back("model: required");
    else if (!known_models().count(c.model))
        problems.push_back("model: unknown '" + c.model + "'");

    const bool topic_model = c.model != "unigram" && !c.model.empty();
    if (use == ConfigUse::fit) {
        if (c.method.empty())
            problems.push_back("method: required");
        else if (known_models().count(c.model) && !methods_for(c.model).count(c.method))
            problems.push_back("method: '" + c.method + "' is not available for model '" + c.model + "'");
    }
    if (topic_model && c.K < 1) problems.push_back("K: required, >= 1");
    if ((c.model == "lda") && !c.alpha) problems.push_back("alpha: required for lda");
    if ((c.model == "lda" || c.model == "dmm") && !c.gamma) problems.push_back("gamma: required for " + c.model);
    if (c.alpha && !(*c.alpha > 0)) problems.push_back("alpha: must be > 0");
    if (c.gamma && !(*c.gamma > 0)) problems.push_back("gamma: must be > 0");
    if (c.model == "gap" || c.model == "zgap") {
        const int explicit_count = c.a0.has_value() + c.b0.has_value() + c.c0.has_value() + c.d0.has_value();
        if (explicit_count != 0 && explicit_count != 4) problems.push_back("a0, b0, c0, d0: give all four or none");
        if (explicit_count == 4 && c.expected_total) problems.push_back("expected_total: conflicts with a0..d0");
        if (explicit_count == 0 && !c.expected_total && use == ConfigUse::fit)
            problems.push_back("expected_total or a0..d0: required for " + c.model);
        for (const auto &[name, v] : {std::pair{"a0", c.a0}, {"b0", c.b0}, {"c0", c.c0}, {"d0", c.d0}})
            if (v && !(*v > 0)) problems.push_back(std::string(name) + ": must be > 0");
        if (c.expected_total && !(*c.expected_total > 0)) problems.push_back("expected_total: must be > 0");
    }
    if (c.model == "zgap" && !(c.p0 > 0 && c.p0 < 1)) problems.push_back("p0: zgap needs 0 < p0 < 1");
    if (c.model != "zgap" && c.p0 != 0) problems.push_back("p0: only zgap takes a nonzero p0");
    if (!(c.prior_a > 0) || !(c.prior_b > 0)) problems.push_back("prior_a, prior_b: must be > 0");
    if (c.threads < 0) problems.push_back("threads: must be >= 0");
    if (c.warmup < 0 || c.iters <= c.warmup) problems.push_back("iters, warmup: need 0 <= warmup < iters");
    if (c.thin < 1) problems.push_back("thin: must be >= 1");
    if (c.chains < 1) problems.push_back("chains: must be >= 1");
    if (c.leapfrog_steps < 1) problems.push_back("leapfrog_steps: must be >= 1");
    if (!(c.target_accept > 0 && c.target_accept < 1)) problems.push_back("target_accept: must lie in (0, 1)");
    if (c.max_iters < 1) problems.push_back("max_iters: must be >= 1");
    if (!(c.tol >= 0)) problems.push_back("tol: must be >= 0");
    if (c.restarts < 1) problems.push_back("restarts: must be >= 1");
    if (c.advi_iters < 1) problems.push_back("advi_iters: must be >= 1");
    if (!(c.eta > 0)) problems.push_back("eta: must be > 0");
    if (c.grad_samples < 1) problems.push_back("grad_samples: must be >= 1");
    if (c.draws < 1) problems.push_back("draws: must be >= 1");
    if (c.replicates < 1) problems.push_back("replicates: must be >= 1");
    if (use == ConfigUse::simulate) {
        if (c.D < 1) problems.push_back("D: must be >= 1");
        if (c.V < 1) problems.push_back("V: must be >= 1");
        if (!(c.N >= 0) || std::floor(c.N) != c.N) problems.push_back("N: must be a nonnegative integer");
        if (c.model == "unigram" && c.T < 1) problems.push_back("T: must be >= 1");
        if (!(c.sigma0_sq > 0)) problems.push_back("sigma0_sq: must be > 0");
    }

    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto &p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
    return c;
}

std::string config_to_json(const RunConfig &c)
{
    json j;
    j["model"] = c.model;
    if (!c.method.empty()) j["method"] = c.method;
    j["K"] = c.K;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    if (c.alpha) j["alpha"] = *c.alpha;
    if (c.gamma) j["gamma"] = *c.gamma;
    if (c.a0) j["a0"] = *c.a0;
    if (c.b0) j["b0"] = *c.b0;
    if (c.c0) j["c0"] = *c.c0;
    if (c.d0) j["d0"] = *c.d0;
    if (c.expected_total) j["expected_total"] = *c.expected_total;
    j["p0"] = c.p0;
    j["prior_a"] = c.prior_a;
    j["prior_b"] = c.prior_b;
    j["iters"] = c.iters;
    j["warmup"] = c.warmup;
    j["thin"] = c.thin;
    j["chains"] = c.chains;
    j["leapfrog_steps"] = c.leapfrog_steps;
    j["target_accept"] = c.target_accept;
    j["max_iters"] = c.max_iters;
    j["tol"] = c.tol;
    j["restarts"] = c.restarts;
    j["advi_iters"] = c.advi_iters;
    j["eta"] = c.eta;
    j["grad_samples"] = c.grad_samples;
    j["draws"] = c.draws;
    j["replicates"] = c.replicates;
    j["D"] = c.D;
    j["V"] = c.V;
    j["N"] = c.N;
    j["T"] = c.T;
    j["sigma0_sq"] = c.sigma0_sq;
    if (!c.counts.empty()) j["counts"] = c.counts;
    if (!c.sample_meta.empty()) j["sample_meta"] = c.sample_meta;
    if (!c.taxonomy.empty()) j["taxonomy"] = c.taxonomy;
    if (!c.out.empty()) j["out"] = c.out;
    return j.dump(2) + "\n";
}

namespace {

std::string read_text(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Provenance: everything needed to rerun, plus the wall-clock start.
void write_run_record(const fs::path &dir, const std::string &command, const std::vector<std::string> &args,
                      std::optional<std::uint64_t> seed)
{
    json j;
    j["command"] = command;
    j["argv"] = args;
    j["plvm_version"] = kVersion;
    j["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
    j["compiler"] = __VERSION__;
    if (seed) j["seed"] = *seed;
    j["started_utc"] = utc_timestamp();
    csv::write_file(dir / "run.json", j.dump(2) + "\n");
}

/// Builds the flag-override JSON object from the options the user actually passed.
class FlagSet {
public:
    explicit FlagSet(CLI::App *app) : app_(app) {}

    template <typename T>
    void add(const std::string &flag, const std::string &key, const std::string &help)
    {
        auto holder = std::make_shared<T>();
        CLI::Option *opt = app_->add_option(flag, *holder, help);
        setters_.push_back([opt, holder, key](json &j) {
            if (opt->count() > 0) j[key] = *holder;
        });
    }

    void add_set_option()
    {
        app_->add_option("--set", raw_, "Extra config entries as key=value (value parsed as JSON when possible)");
    }

    std::string to_json() const
    {
        json j = json::object();
        for (const auto &s : setters_) s(j);
        for (const auto &kv : raw_) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
            const std::string key = kv.substr(0, eq);
            const std::string value = kv.substr(eq + 1);
            json parsed = json::parse(value, nullptr, false);
            j[key] = parsed.is_discarded() ? json(value) : parsed;
        }
        return j.dump();
    }

private:
    CLI::App *app_;
    std::vector<std::function<void(json &)>> setters_;
    std::vector<std::string> raw_;
};

void log(const std::string &msg)
{
    std::cout << "[plvm] " << msg << std::endl;
}

GapHyper gap_hyper(const RunConfig &c, Index V, double fallback_total)
{
    if (c.a0) return GapHyper{*c.a0, *c.b0, *c.c0, *c.d0};
    return hyperparams_for_expected_total(c.expected_total.value_or(fallback_total), c.K, V);
}

GibbsOptions gibbs_options(const RunConfig &c)
{
    return GibbsOptions{c.iters, c.warmup, c.thin, c.chains, c.seed, c.threads};
}

CaviOptions cavi_options(const RunConfig &c)
{
    CaviOptions o;
    o.max_iters = c.max_iters;
    o.tol = c.tol;
    o.restarts = c.restarts;
    o.seed = c.seed;
    o.threads = c.threads;
    return o;
}

UnigramFitOptions unigram_options(const RunConfig &c)
{
    UnigramFitOptions o;
    o.prior = {c.prior_a, c.prior_b};
    o.hmc.warmup = c.warmup;
    o.hmc.draws = (c.iters - c.warmup) / c.thin;
    o.hmc.chains = c.chains;
    o.hmc.leapfrog_steps = c.leapfrog_steps;
    o.hmc.target_accept = c.target_accept;
    o.hmc.seed = c.seed;
    o.hmc.threads = c.threads;
    o.advi.iters = c.advi_iters;
    o.advi.grad_samples = c.grad_samples;
    o.advi.eta = c.eta;
    o.advi.draws = c.draws;
    o.advi.seed = c.seed;
    return o;
}

/// Single-draw store holding the simulation truth.
PosteriorSamples truth_store(const std::map<std::string, MatrixXd> &params, const RunConfig &c)
{
    PosteriorSamples s(1, 1);
    for (const auto &[name, m] : params) {
        const int rank = m.cols() == 1 ? (m.rows() == 1 ? 0 : 1) : 2;
        s.add_parameter(name, rank, m.rows(), m.cols());
        s.set_draw(name, 0, 0, m);
    }
    s.metadata.model = c.model;
    s.metadata.method = "truth";
    s.metadata.seed = c.seed;
    if (c.model == "zgap") s.metadata.extra["p0"] = csv::format_double(c.p0);
    return s;
}

void write_data(const CountMatrix &x, const fs::path &dir)
{
    write_counts(x, dir / "counts.csv");
    if (x.has_times()) write_sample_meta(x, dir / "sample_meta.csv");
    if (x.taxonomy()) write_taxonomy(x, dir / "taxonomy.csv");
}

CountMatrix read_data(const fs::path &dir)
{
    const fs::path meta = dir / "sample_meta.csv";
    const fs::path tax = dir / "taxonomy.csv";
    return read_counts(dir / "counts.csv", fs::exists(meta) ? std::optional(meta) : std::nullopt,
                       fs::exists(tax) ? std::optional(tax) : std::nullopt);
}

int cmd_simulate(const RunConfig &c, const fs::path &out)
{
    Rng rng(c.seed, kSimulateStream);
    const auto N = static_cast<Count>(c.N);
    const CountVector totals = CountVector::Constant(c.D, N);
    CountMatrix data;
    std::map<std::string, MatrixXd> truth;
    if (c.model == "lda") {
        auto sim = simulate_lda(totals, c.V, c.K, *c.alpha, *c.gamma, rng);
        data = sim.data;
        truth = {{"theta", sim.truth.theta}, {"beta", sim.truth.beta}};
    } else if (c.model == "dmm") {
        const ProbVector weights(VectorXd::Constant(c.K, 1.0 / static_cast<double>(c.K)));
        auto sim = simulate_dmm(totals, c.V, weights, *c.gamma, rng);
        data = sim.data;
        VectorXd z(c.D);
        for (Index d = 0; d < c.D; ++d) z[d] = static_cast<double>(sim.truth.z[static_cast<std::size_t>(d)]);
        truth = {{"z", z}, {"theta", sim.truth.theta}, {"beta", sim.truth.beta}};
    } else if (c.model == "gap" || c.model == "zgap") {
        auto sim = simulate_gap(c.D, c.V, c.K, gap_hyper(c, c.V, c.N), c.p0, rng);
        data = sim.data;
        truth = {{"theta", sim.truth.theta}, {"beta", sim.truth.beta}};
        if (c.model == "zgap") {
            std::ostringstream mask;
            mask << "sample_id,feature_id\n";
            for (Index d = 0; d < c.D; ++d)
                for (Index v = 0; v < c.V; ++v)
                    if (sim.mask(d, v))
                        mask << data.sample_ids()[static_cast<std::size_t>(d)] << ','
                             << data.feature_ids()[static_cast<std::size_t>(v)] << '\n';
            csv::write_file(out / "structural_zeros.csv", mask.str());
        }
    } else {
        std::vector<Index> slot(static_cast<std::size_t>(c.D));
        for (Index d = 0; d < c.D; ++d) slot[static_cast<std::size_t>(d)] = d % c.T;
        auto sim = simulate_unigram(c.T, c.V, slot, totals, c.sigma0_sq, rng);
        data = sim.data;
        MatrixXd s2(1, 1);
        s2(0, 0) = sim.truth.sigma2;
        truth = {{"mu", sim.truth.mu}, {"sigma2", s2}};
    }
    write_data(data, out);
    write_samples(truth_store(truth, c), out / "truth.csv", out / "truth.json");
    log("simulated " + c.model + " data: " + std::to_string(data.num_samples()) + " samples x " +
        std::to_string(data.num_features()) + " features -> " + out.string());
    return 0;
}

void write_elbo(const std::vector<double> &trace, const fs::path &path)
{
    std::ostringstream s;
    s << "iteration,elbo\n";
    for (std::size_t i = 0; i < trace.size(); ++i) s << i << ',' << csv::format_double(trace[i]) << '\n';
    csv::write_file(path, s.str());
}

void write_matrix_csv(const MatrixXd &m, const std::vector<std::string> &row_ids, const std::string &row_header,
                      const std::vector<std::string> &col_names, const fs::path &path)
{
    std::ostringstream s;
    s << row_header;
    for (const auto &n : col_names) s << ',' << n;
    s << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        s << row_ids[static_cast<std::size_t>(r)];
        for (Index k = 0; k < m.cols(); ++k) s << ',' << csv::format_double(m(r, k));
        s << '\n';
    }
    csv::write_file(path, s.str());
}

std::vector<std::string> numbered(const std::string &prefix, Index n)
{
    std::vector<std::string> out;
    for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

int cmd_fit(const RunConfig &c, const fs::path &out)
{
    const CountMatrix x =
        read_counts(c.counts, c.sample_meta.empty() ? std::nullopt : std::optional<fs::path>(c.sample_meta),
                    c.taxonomy.empty() ? std::nullopt : std::optional<fs::path>(c.taxonomy));
    write_data(x, out / "data");
    log("read " + std::to_string(x.num_samples()) + " samples x " + std::to_string(x.num_features()) + " features");

    PosteriorSamples s;
    Rng draw_rng(c.seed, kVariationalDrawStream);
    if (c.model == "lda") {
        if (c.method == "gibbs") {
            s = fit_lda_gibbs(x, c.K, *c.alpha, *c.gamma, gibbs_options(c));
        } else {
            const auto fit = fit_lda_cavi(x, c.K, *c.alpha, *c.gamma, cavi_options(c));
            write_elbo(fit.elbo_trace, out / "elbo.csv");
            if (c.method == "vb") {
                s = fit.sample(c.draws, draw_rng);
            } else {
                BootstrapOptions b;
                b.replicates = c.replicates;
                b.seed = c.seed;
                b.threads = c.threads;
                s = lda_bootstrap(x, fit, *c.alpha, *c.gamma, cavi_options(c), b);
            }
        }
    } else if (c.model == "dmm") {
        const DmmFit fit = fit_dmm_gibbs(x, c.K, *c.gamma, gibbs_options(c));
        s = fit.samples;
        write_matrix_csv(fit.membership, x.sample_ids(), "sample_id", numbered("topic", c.K), out / "membership.csv");
        write_matrix_csv(fit.co_membership, x.sample_ids(), "sample_id", x.sample_ids(), out / "co_membership.csv");
    } else if (c.model == "gap" || c.model == "zgap") {
        const GapHyper hyper = gap_hyper(c, x.num_features(), 0);
        if (c.method == "gibbs") {
            s = fit_gap_gibbs(x, c.K, hyper, c.p0, gibbs_options(c));
        } else {
            const auto fit = fit_gap_cavi(x, c.K, hyper, c.p0, cavi_options(c));
            write_elbo(fit.elbo_trace, out / "elbo.csv");
            if (c.method == "vb") {
                s = fit.sample(c.draws, draw_rng);
            } else {
                BootstrapOptions b;
                b.replicates = c.replicates;
                b.seed = c.seed;
                b.threads = c.threads;
                s = gap_bootstrap(x, fit, hyper, c.p0, cavi_options(c), b);
            }
        }
    } else {
        s = fit_unigram(x, c.method == "hmc" ? UnigramMethod::hmc : UnigramMethod::advi, unigram_options(c));
    }
    s.metadata.model = c.model;
    s.metadata.seed = c.seed;
    for (const auto &w : s.metadata.warnings) log("warning: " + w);

    write_samples(s, out / "samples.csv", out / "samples.json");
    const std::vector<double> probs{0.025, 0.25, 0.5, 0.75, 0.975};
    if (s.total_draws() >= 2)
        write_summary_csv(summarize_posterior(s, probs), probs, out / "summary.csv");
    else
        log("summary skipped: fewer than 2 draws");
    if (s.num_chains() >= 2 && s.num_draws() >= 4)
        write_diagnostics_csv(diagnostics(s), out / "diagnostics.csv");
    else
        log("diagnostics skipped: need >= 2 chains with >= 4 draws");
    log("fit " + c.model + "/" + c.method + ": " + std::to_string(s.num_chains()) + " chain(s) x " +
        std::to_string(s.num_draws()) + " draws -> " + out.string());
    return 0;
}

PosteriorSamples read_store(const fs::path &dir)
{
    if (fs::exists(dir / "samples.csv")) return read_samples(dir / "samples.csv", dir / "samples.json");
    if (fs::exists(dir / "truth.csv")) return read_samples(dir / "truth.csv", dir / "truth.json");
    throw ConfigError("no samples.csv or truth.csv in '" + dir.string() + "'");
}

/// Column-normalized beta median, the scale on which GaP topics are matched.
MatrixXd matching_beta(const PosteriorSamples &s)
{
    if (!s.has("beta")) throw ConfigError("align: samples have no topic matrix 'beta'");
    MatrixXd b = s.median("beta");
    const std::string &m = s.metadata.model;
    if (m == "gap" || m == "zgap")
        for (Index k = 0; k < b.cols(); ++k)
            if (b.col(k).sum() > 0) b.col(k) /= b.col(k).sum();
    return b;
}

int cmd_align(const fs::path &ref_dir, const fs::path &est_dir)
{
    const PosteriorSamples ref = read_store(ref_dir);
    const PosteriorSamples est = read_store(est_dir);
    const MatrixXd rb = matching_beta(ref);
    const MatrixXd eb = matching_beta(est);
    if (rb.rows() != eb.rows() || rb.cols() != eb.cols())
        throw ConfigError("align: reference and estimate topic matrices differ in shape");
    const TopicPermutation perm = align_topics(rb, eb);
    PosteriorSamples aligned = apply_alignment(est, perm);
    if (aligned.has("z")) {
        // DMM labels: estimated label perm[k] becomes k.
        const TopicPermutation inv = perm.inverse();
        for (Index ch = 0; ch < aligned.num_chains(); ++ch)
            for (Index i = 0; i < aligned.num_draws(); ++i) {
                MatrixXd z = aligned.draw("z", ch, i);
                for (Index d = 0; d < z.rows(); ++d)
                    z(d, 0) = static_cast<double>(inv.perm[static_cast<std::size_t>(z(d, 0))]);
                aligned.set_draw("z", ch, i, z);
            }
    }
    csv::write_file(est_dir / "perm.json", permutation_to_json(perm));
    write_samples(aligned, est_dir / "aligned_samples.csv", est_dir / "aligned_samples.json");
    std::ostringstream msg;
    msg << "aligned topics, perm =";
    for (Index k : perm.perm) msg << ' ' << k;
    log(msg.str());
    return 0;
}

RunConfig read_fit_config(const fs::path &fit_dir)
{
    return parse_config(read_text(fit_dir / "config.json"), "", ConfigUse::fit);
}

int cmd_ppc(const fs::path &fit_dir, Index S, int threads)
{
    const RunConfig c = read_fit_config(fit_dir);
    const CountMatrix x = read_data(fit_dir / "data");
    const PosteriorSamples s = read_samples(fit_dir / "samples.csv", fit_dir / "samples.json");
    const ModelKind kind = model_kind_from_string(c.model == "zgap" ? "gap" : c.model);
    Rng rng(c.seed, kPpcStream);
    PredictiveOptions popts;
    popts.p0 = c.p0;
    popts.threads = threads;
    const auto reps = draw_posterior_predictive(kind, x, s, S, rng, popts);
    const fs::path out = fit_dir / "ppc";

    std::vector<PpcReport> reports;
    reports.push_back(ppc_scalar_stats(x, reps, {StatKind::mean, {}}));
    reports.push_back(ppc_scalar_stats(x, reps, {StatKind::variance, {}}));
    reports.push_back(ppc_scalar_stats(
        x, reps, {StatKind::histogram, {0, 1, 2, 5, 10, 50, 100, 1000, std::numeric_limits<double>::infinity()}}));
    std::vector<double> grid;
    for (int i = 1; i < 100; ++i) grid.push_back(i / 100.0);
    reports.push_back(ppc_quantile_qq(x, reps, grid));
    if (x.has_times()) {
        const auto top = select_features(x, FilterMode::top_abundance, std::min<Index>(10, x.num_features()));
        std::vector<std::string> ids;
        for (Index v : top) ids.push_back(x.feature_ids()[static_cast<std::size_t>(v)]);
        reports.push_back(ppc_timeseries(x, reps, ids));
    }
    write_ppc_reports(reports, out / "reports.csv");

    std::ostringstream flags;
    flags << "statistic,element,feature,time,outside_95\n";
    for (const auto &r : reports) {
        const auto outside = outside_band(r);
        for (Index j = 0; j < r.size(); ++j)
            flags << r.statistic << ',' << j << ','
                  << (r.features.empty() ? "" : r.features[static_cast<std::size_t>(j)]) << ','
                  << (r.times.empty() ? "" : r.times[static_cast<std::size_t>(j)]) << ','
                  << (outside[static_cast<std::size_t>(j)] ? 1 : 0) << '\n';
    }
    csv::write_file(out / "band_flags.csv", flags.str());

    PcaOptions po;
    po.rank = std::min<Index>({5, x.num_samples() - 1, x.num_features()});
    if (po.rank >= 1) {
        const PcaCheck pca = ppc_pca(x, reps, po);
        std::ostringstream e;
        e << "source,replicate_id,component,eigenvalue\n";
        for (Index i = 0; i < pca.observed.eigenvalues.size(); ++i)
            e << "observed,," << i + 1 << ',' << csv::format_double(pca.observed.eigenvalues[i]) << '\n';
        for (std::size_t r = 0; r < pca.replicates.size(); ++r)
            for (Index i = 0; i < pca.replicates[r].eigenvalues.size(); ++i)
                e << "replicate," << r << ',' << i + 1 << ','
                  << csv::format_double(pca.replicates[r].eigenvalues[i]) << '\n';
        csv::write_file(out / "pca_eigenvalues.csv", e.str());
    }

    std::ostringstream sd;
    sd << "feature_id,score\n";
    for (const auto &[id, score] : species_discrepancy(x, reps)) sd << id << ',' << csv::format_double(score) << '\n';
    csv::write_file(out / "species_discrepancy.csv", sd.str());
    log("posterior predictive check with " + std::to_string(S) + " replicates -> " + out.string());
    return 0;
}

int cmd_report(const fs::path &fit_dir, const std::string &kind_name, Index top_m)
{
    const PlotKind kind = plot_kind_from_string(kind_name);
    const RunConfig c = read_fit_config(fit_dir);
    const fs::path out = fit_dir / "report";
    const fs::path file = out / (kind_name + ".csv");
    auto samples = [&] {
        return read_samples(fit_dir / "samples.csv", fit_dir / "samples.json");
    };
    auto ppc_report = [&](const std::string &name) {
        const fs::path path = fit_dir / "ppc" / "reports.csv";
        if (!fs::exists(path)) throw ConfigError("report: run 'ppc' on this fit first");
        for (auto &r : read_ppc_reports(path))
            if (r.statistic == name) return r;
        throw ConfigError("report: ppc output has no '" + name + "' statistic");
    };
    switch (kind) {
    case PlotKind::theta_boxes:
        csv::write_file(file, export_theta_boxes(samples(), read_data(fit_dir / "data")));
        break;
    case PlotKind::beta_intervals:
        csv::write_file(file, export_beta_intervals(samples(), read_data(fit_dir / "data")));
        break;
    case PlotKind::mu_intervals:
        csv::write_file(file, export_mu_intervals(samples(), read_data(fit_dir / "data")));
        break;
    case PlotKind::ppc_overlay:
        csv::write_file(file, export_ppc_overlay(ppc_report("timeseries")));
        break;
    case PlotKind::representativeness: {
        const PosteriorSamples s = samples();
        if (!s.has("beta")) throw ConfigError("representativeness: samples have no 'beta'");
        const CountMatrix x = read_data(fit_dir / "data");
        const MatrixXd beta = s.median("beta");
        csv::write_file(file, export_representativeness(beta, x.feature_ids(), std::min(top_m, x.num_features())));
        if (x.taxonomy()) {
            std::ostringstream f;
            f << "family,topic,mean_score,size\n";
            for (const auto &row : family_representativeness(beta, x))
                f << row.family << ',' << row.topic << ',' << csv::format_double(row.mean_score) << ','
                  << row.size << '\n';
            csv::write_file(out / "family_representativeness.csv", f.str());
        }
        break;
    }
    case PlotKind::qq: {
        Rng rng(c.seed, kReportStream);
        csv::write_file(file, export_qq(ppc_report("qq"), rng));
        break;
    }
    }
    log("report " + kind_name + " -> " + file.string());
    return 0;
}

}  // namespace

int run_cli(int argc, const char *const *argv)
{
    CLI::App app{"Latent-variable models for count matrices"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    std::vector<std::string> args(argv, argv + argc);

    std::string config_path, out_dir, counts, sample_meta, taxonomy;
    std::string ref_dir, est_dir, fit_dir, grid_path, kind;
    Index replicates = 100;
    Index top_m = 10;
    int threads = 0;

    auto add_model_flags = [](FlagSet &f) {
        f.add<std::string>("--model", "model", "dmm | lda | gap | zgap | unigram");
        f.add<Index>("-k,--K", "K", "Number of topics");
        f.add<std::uint64_t>("--seed", "seed", "Random seed (falls back to PLVM_SEED)");
        f.add<int>("--threads", "threads", "Worker thread cap (0 = hardware)");
        f.add<double>("--alpha", "alpha", "Symmetric Dirichlet prior on memberships");
        f.add<double>("--gamma", "gamma", "Symmetric Dirichlet prior on topics");
        f.add<double>("--p0", "p0", "Structural-zero rate (zgap)");
        f.add<double>("--expected-total", "expected_total", "Target E[N_d] for GaP hyperparameters");
        f.add_set_option();
    };

    CLI::App *sim = app.add_subcommand("simulate", "Simulate a dataset with known parameters");
    FlagSet sim_flags(sim);
    add_model_flags(sim_flags);
    sim_flags.add<Index>("-D", "D", "Samples");
    sim_flags.add<Index>("-V", "V", "Features");
    sim_flags.add<double>("-N", "N", "Count per sample (E[N_d] for GaP)");
    sim_flags.add<Index>("-T", "T", "Time slots (unigram)");
    sim->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sim->add_option("--out", out_dir, "Output directory")->required();

    CLI::App *fit = app.add_subcommand("fit", "Fit a model to a count matrix");
    FlagSet fit_flags(fit);
    add_model_flags(fit_flags);
    fit_flags.add<std::string>("--method", "method", "gibbs | vb | bootstrap | hmc | advi");
    fit_flags.add<long>("--iters", "iters", "Total MCMC iterations including warmup");
    fit_flags.add<long>("--warmup", "warmup", "Warmup iterations");
    fit_flags.add<int>("--chains", "chains", "Number of chains");
    fit_flags.add<long>("--draws", "draws", "Draws from a variational fit");
    fit_flags.add<int>("--replicates", "replicates", "Bootstrap replicates");
    fit->add_option("--counts", counts, "Counts CSV (sample_id, then one column per feature)")->required();
    fit->add_option("--sample-meta", sample_meta, "Sample metadata CSV (sample_id,time)");
    fit->add_option("--taxonomy", taxonomy, "Taxonomy CSV (feature_id,family,phylo_index)");
    fit->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    fit->add_option("--out", out_dir, "Output directory")->required();

    CLI::App *al = app.add_subcommand("align", "Align estimated topics to a reference run");
    al->add_option("--ref", ref_dir, "Reference directory (fit or simulation)")->required();
    al->add_option("--est", est_dir, "Estimate directory (a fit)")->required();

    CLI::App *pp = app.add_subcommand("ppc", "Posterior predictive checks for a fit");
    pp->add_option("--fit", fit_dir, "Fit directory")->required();
    pp->add_option("--replicates", replicates, "Replicated datasets")->check(CLI::PositiveNumber);
    pp->add_option("--threads", threads, "Worker thread cap (0 = hardware)");

    CLI::App *st = app.add_subcommand("study", "Run a simulation study grid");
    st->add_option("--grid", grid_path, "Grid JSON")->required()->check(CLI::ExistingFile);
    st->add_option("--out", out_dir, "Output directory")->required();
    st->add_option("--threads", threads, "Worker thread cap (overrides the grid)");

    CLI::App *rp = app.add_subcommand("report", "Export plot-ready CSV tables for a fit");
    rp->add_option("--fit", fit_dir, "Fit directory")->required();
    rp->add_option("--kind", kind,
                   "theta_boxes | beta_intervals | mu_intervals | ppc_overlay | representativeness | qq")
        ->required();
    rp->add_option("--top", top_m, "Features per topic (representativeness)")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto resolve = [&](const FlagSet &flags, ConfigUse use, std::map<std::string, std::string> paths) {
            json extra = json::parse(flags.to_json());
            for (const auto &[k, v] : paths)
                if (!v.empty()) extra[k] = v;
            std::vector<std::string> conflicts;
            RunConfig c = parse_config(config_path.empty() ? "" : read_text(config_path), extra.dump(), use,
                                       &conflicts);
            for (const auto &m : conflicts) log("config conflict, " + m);
            return c;
        };
        if (sim->parsed()) {
            const RunConfig c = resolve(sim_flags, ConfigUse::simulate, {{"out", out_dir}});
            fs::create_directories(out_dir);
            csv::write_file(fs::path(out_dir) / "config.json", config_to_json(c));
            write_run_record(out_dir, "simulate", args, c.seed);
            return cmd_simulate(c, out_dir);
        }
        if (fit->parsed()) {
            const RunConfig c = resolve(
                fit_flags, ConfigUse::fit,
                {{"counts", counts}, {"sample_meta", sample_meta}, {"taxonomy", taxonomy}, {"out", out_dir}});
            fs::create_directories(out_dir);
            csv::write_file(fs::path(out_dir) / "config.json", config_to_json(c));
            write_run_record(out_dir, "fit", args, c.seed);
            return cmd_fit(c, out_dir);
        }
        if (al->parsed()) return cmd_align(ref_dir, est_dir);
        if (pp->parsed()) return cmd_ppc(fit_dir, replicates, threads);
        if (st->parsed()) {
            StudyGrid g = read_grid(grid_path);
            if (st->count("--threads")) g.threads = threads;
            fs::create_directories(out_dir);
            write_run_record(out_dir, "study", args, std::nullopt);
            csv::write_file(fs::path(out_dir) / "grid.json", read_text(grid_path));
            const auto results = run_study(g, fs::path(out_dir));
            std::size_t failed = 0;
            for (const auto &r : results) failed += r.failed;
            log("study finished: " + std::to_string(results.size()) + " fits, " + std::to_string(failed) +
                " failed -> " + out_dir);
            return 0;
        }
        if (rp->parsed()) return cmd_report(fit_dir, kind, top_m);
    } catch (const NumericalError &e) {
        std::cerr << "numerical failure at iteration " << e.iteration() << ": " << e.what() << '\n';
        return 2;
    } catch (const ParseError &e) {
        std::cerr << "input error (row " << e.row() << ", column " << e.column() << "): " << e.what() << '\n';
        return 1;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace plvm
