#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "oracles.hpp"
#include "plvm/csv.hpp"
#include "plvm/distributions.hpp"
#include "plvm/report.hpp"
#include "plvm/transforms.hpp"

#include <map>
#include <sstream>

using namespace plvm;

namespace {

std::vector<std::string> ids(Index n)
{
    std::vector<std::string> out;
    for (Index i = 0; i < n; ++i) out.push_back("f" + std::to_string(i + 1));
    return out;
}

MatrixXd random_beta(Index V, Index K, Rng &rng)
{
    MatrixXd b(V, K);
    for (Index k = 0; k < K; ++k) b.col(k) = sample_dirichlet(VectorXd::Ones(V), rng);
    return b;
}

std::vector<std::vector<std::string>> parse(const std::string &text)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) rows.push_back(csv::split(line));
    return rows;
}

double num(const std::string &s)
{
    double v = 0;
    REQUIRE(csv::parse_double(s, v));
    return v;
}

PosteriorSamples beta_store(const std::vector<MatrixXd> &draws)
{
    PosteriorSamples s(1, static_cast<Index>(draws.size()));
    s.add_parameter("beta", 2, draws[0].rows(), draws[0].cols());
    for (std::size_t t = 0; t < draws.size(); ++t) s.set_draw("beta", 0, static_cast<Index>(t), draws[t]);
    return s;
}

}  // namespace

TEST_CASE("representativeness: examples and explicit-loop oracle")
{
    MatrixXd b(3, 1);
    b << 0.2, 0.5, 0.3;
    const auto one = topic_representativeness(b, ids(3), 0, 3);
    CHECK(one[0].feature_id == "f2");
    CHECK(one[0].score == 0.5);
    CHECK(one[1].feature_id == "f3");
    CHECK(one[2].rank == 3);

    const MatrixXd eye = MatrixXd::Identity(2, 2);
    const auto top = topic_representativeness(eye, ids(2), 0, 1);
    CHECK(top[0].feature_id == "f1");
    CHECK(top[0].score == 1);

    Rng rng(1);
    const MatrixXd r = random_beta(10, 3, rng);
    const MatrixXd scores = representativeness_scores(r);
    for (Index v = 0; v < 10; ++v) {
        double sum_r = 0;
        for (Index k = 0; k < 3; ++k) {
            double s = r(v, k);
            for (Index j = 0; j < 3; ++j)
                if (j != k) s -= r(v, j);
            CHECK(scores(v, k) == doctest::Approx(s).epsilon(1e-15));
            sum_r += scores(v, k);
        }
        CHECK(std::abs(sum_r - (2 - 3) * r.row(v).sum()) < 1e-12);
    }
    const auto ranked = topic_representativeness(r, ids(10), 2, 10);
    for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score >= ranked[i].score);

    CHECK_THROWS_AS(topic_representativeness(r, ids(10), 3, 1), BoundsError);
    CHECK_THROWS_AS(topic_representativeness(r, ids(10), 0, 11), BoundsError);
}

TEST_CASE("representativeness: ties go to the smaller feature id")
{
    MatrixXd b(3, 1);
    b << 0.4, 0.2, 0.4;
    const auto t = topic_representativeness(b, {"c", "b", "a"}, 0, 3);
    CHECK(t[0].feature_id == "a");
    CHECK(t[1].feature_id == "c");
}

TEST_CASE("family_representativeness: group-by oracle")
{
    Rng rng(2);
    const Index V = 12, K = 3;
    const MatrixXd b = random_beta(V, K, rng);
    std::vector<Taxon> tax;
    const std::vector<std::string> fams{"Bacteroidaceae", "", "Lachnospiraceae", "Ruminococcaceae"};
    for (Index v = 0; v < V; ++v) tax.push_back({fams[static_cast<std::size_t>(v % 4)], v + 1});
    std::vector<std::string> sids{"s1"};
    const CountMatrix x(CountArray::Zero(1, V), sids, ids(V), std::nullopt, tax);
    const auto rows = family_representativeness(b, x);
    const MatrixXd r = representativeness_scores(b);
    std::map<std::pair<std::string, Index>, std::vector<double>> groups;
    for (Index v = 0; v < V; ++v)
        for (Index k = 0; k < K; ++k) {
            const std::string f = fams[static_cast<std::size_t>(v % 4)];
            groups[{f.empty() ? "unknown" : f, k}].push_back(r(v, k));
        }
    CHECK(rows.size() == groups.size());
    for (const auto &row : rows) {
        const auto &g = groups.at({row.family, row.topic});
        CHECK(row.mean_score == doctest::Approx(oracle::mean(g)).epsilon(1e-14));
        CHECK(row.size == static_cast<Index>(g.size()));
    }
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].family <= rows[i].family);
    CHECK_THROWS(family_representativeness(b, CountMatrix(CountArray::Zero(1, V))));
}

TEST_CASE("family_representativeness: singleton families and duplicated features")
{
    MatrixXd b(3, 2);
    b << 0.5, 0.1, 0.3, 0.3, 0.2, 0.6;
    const std::vector<Taxon> single{{"A", 1}, {"B", 2}, {"C", 3}};
    const CountMatrix xs(CountArray::Zero(1, 3), {"s"}, ids(3), std::nullopt, single);
    const MatrixXd r = representativeness_scores(b);
    for (const auto &row : family_representativeness(b, xs)) {
        const Index v = row.family[0] - 'A';
        CHECK(row.mean_score == r(v, row.topic));
    }
    MatrixXd dup(2, 2);
    dup << 0.5, 0.2, 0.5, 0.2;
    const std::vector<Taxon> same{{"A", 1}, {"A", 2}};
    const CountMatrix xd(CountArray::Zero(1, 2), {"s"}, ids(2), std::nullopt, same);
    const auto rows = family_representativeness(dup, xd);
    CHECK(rows[0].mean_score == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(rows[1].mean_score == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("theta_boxes: constant posterior gives equal quantiles, golden schema")
{
    PosteriorSamples s(2, 3);
    s.add_parameter("theta", 2, 2, 2);
    MatrixXd th(2, 2);
    th << 0.25, 0.75, 0.5, 0.5;
    for (Index c = 0; c < 2; ++c)
        for (Index t = 0; t < 3; ++t) s.set_draw("theta", c, t, th);
    const CountMatrix x(CountArray::Zero(2, 3), std::vector<double>{0, 3.5});
    const std::string out = export_theta_boxes(s, x);
    CHECK(out ==
          "sample_id,time,topic,q025,q25,q50,q75,q975\n"
          "s1,0,0,0.25,0.25,0.25,0.25,0.25\n"
          "s1,0,1,0.75,0.75,0.75,0.75,0.75\n"
          "s2,3.5,0,0.5,0.5,0.5,0.5,0.5\n"
          "s2,3.5,1,0.5,0.5,0.5,0.5,0.5\n");
}

TEST_CASE("beta_intervals: monotone quantiles of g-transformed draws, parse-back")
{
    Rng rng(3);
    std::vector<MatrixXd> draws;
    for (int t = 0; t < 50; ++t) draws.push_back(random_beta(6, 2, rng));
    const PosteriorSamples s = beta_store(draws);
    const CountMatrix x(CountArray::Zero(1, 6));
    const auto rows = parse(export_beta_intervals(s, x));
    CHECK(rows[0] == std::vector<std::string>{"feature_id", "family", "topic", "q025", "q25", "q50", "q75", "q975"});
    REQUIRE(rows.size() == 13);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        for (std::size_t c = 3; c + 1 < 8; ++c) CHECK(num(rows[i][c]) <= num(rows[i][c + 1]));
        // Parse-back equals the oracle quantile of g-transformed draws.
        const Index v = std::stol(rows[i][0].substr(1)) - 1;
        const Index k = std::stol(rows[i][2]);
        std::vector<double> g;
        for (const auto &d : draws) g.push_back(g_transform(VectorXd(d.col(k)))[v]);
        CHECK(num(rows[i][5]) == oracle::quantile7(g, 0.5));
        CHECK(num(rows[i][3]) == oracle::quantile7(g, 0.025));
    }
}

TEST_CASE("mu_intervals: needs times, reports per slot")
{
    PosteriorSamples s(1, 4);
    s.add_parameter("mu", 2, 2, 3);
    Rng rng(4);
    for (Index t = 0; t < 4; ++t) s.set_draw("mu", 0, t, MatrixXd::Random(2, 3));
    const CountMatrix timed(CountArray::Zero(3, 3), std::vector<double>{5, 1, 5});
    const auto rows = parse(export_mu_intervals(s, timed));
    CHECK(rows[0] == std::vector<std::string>{"feature_id", "time", "q025", "q25", "q50", "q75", "q975"});
    CHECK(rows.size() == 7);
    CHECK_THROWS(export_mu_intervals(s, CountMatrix(CountArray::Zero(3, 3))));
}

TEST_CASE("ppc_overlay and qq exports")
{
    CountArray c(2, 1);
    c << 3, 0;
    const CountMatrix obs(c, std::vector<double>{0, 1});
    const PpcReport ts = ppc_timeseries(obs, {obs, obs}, {"f1"});
    const auto rows = parse(export_ppc_overlay(ts));
    CHECK(rows[0] == std::vector<std::string>{"feature_id", "time", "observed", "q025", "q25", "q50", "q75", "q975"});
    CHECK(num(rows[1][2]) == std::asinh(3.0));
    CHECK(num(rows[1][3]) == std::asinh(3.0));
    StatSpec mean;
    CHECK_THROWS(export_ppc_overlay(ppc_scalar_stats(obs, {obs}, mean)));

    const PpcReport qq = ppc_quantile_qq(obs, {obs}, {0.5});
    Rng r1(1), r2(1);
    const std::string a = export_qq(qq, r1), b = export_qq(qq, r2);
    CHECK(a == b);
    const auto q = parse(a);
    CHECK(q[0] == std::vector<std::string>{"replicate_id", "prob", "observed", "replicate", "observed_jittered",
                                           "replicate_jittered", "jitter_width"});
    CHECK(num(q[1][2]) == num(q[1][3]));
    CHECK(num(q[1][4]) >= num(q[1][2]));
    CHECK(num(q[1][4]) <= num(q[1][2]) + 0.2);
}

TEST_CASE("representativeness export: golden output")
{
    MatrixXd b(3, 2);
    b << 0.5, 0.25, 0.25, 0.25, 0.25, 0.5;
    CHECK(export_representativeness(b, ids(3), 2) ==
          "topic,rank,feature_id,score\n"
          "0,1,f1,0.25\n"
          "0,2,f2,0\n"
          "1,1,f3,0.25\n"
          "1,2,f2,0\n");
    CHECK(plot_kind_from_string("qq") == PlotKind::qq);
    CHECK(to_string(PlotKind::beta_intervals) == "beta_intervals");
    CHECK_THROWS(plot_kind_from_string("boxes"));
}
