#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "oracles.hpp"
#include "plvm/align.hpp"
#include "plvm/distributions.hpp"
#include "plvm/lda.hpp"

#include <algorithm>

using namespace plvm;

namespace {

std::vector<double> sqrt_col(const MatrixXd &m, Index k)
{
    std::vector<double> out;
    for (Index v = 0; v < m.rows(); ++v) out.push_back(std::sqrt(m(v, k)));
    return out;
}

/// Brute-force best assignment: maximizes the summed sqrt-scale correlation.
std::vector<Index> best_assignment(const MatrixXd &ref, const MatrixXd &est, bool *dominant)
{
    const Index K = ref.cols();
    MatrixXd c(K, K);
    for (Index i = 0; i < K; ++i)
        for (Index j = 0; j < K; ++j) c(i, j) = oracle::correlation(sqrt_col(ref, i), sqrt_col(est, j));
    std::vector<Index> best;
    double best_sum = -1e300;
    for (const auto &p : oracle::permutations(static_cast<int>(K))) {
        double sum = 0;
        for (Index i = 0; i < K; ++i) sum += c(i, p[static_cast<std::size_t>(i)]);
        if (sum > best_sum) {
            best_sum = sum;
            best.assign(p.begin(), p.end());
        }
    }
    // Strictly dominant: every chosen pair beats all others in its row and column.
    *dominant = true;
    for (Index i = 0; i < K; ++i) {
        const Index j = best[static_cast<std::size_t>(i)];
        for (Index m = 0; m < K; ++m) {
            if (m != j && c(i, m) >= c(i, j)) *dominant = false;
            if (m != i && c(m, j) >= c(i, j)) *dominant = false;
        }
    }
    return best;
}

MatrixXd random_topics(Index V, Index K, Rng &rng)
{
    MatrixXd b(V, K);
    for (Index k = 0; k < K; ++k) b.col(k) = sample_dirichlet(VectorXd::Constant(V, 0.5), rng);
    return b;
}

}  // namespace

TEST_CASE("align_topics: exact examples")
{
    MatrixXd ref(4, 2);
    ref << 0.7, 0.1, 0.2, 0.1, 0.05, 0.3, 0.05, 0.5;
    TopicPermutation p = align_topics(ref, ref);
    CHECK(p.perm == std::vector<Index>{0, 1});
    MatrixXd swapped(4, 2);
    swapped << ref.col(1), ref.col(0);
    p = align_topics(ref, swapped);
    CHECK(p.perm == std::vector<Index>{1, 0});
    CHECK(p.match_scores[0] == doctest::Approx(1));
    CHECK(p.match_scores[1] == doctest::Approx(1));
    CHECK(apply_alignment(swapped, p) == ref);
    CHECK_THROWS(align_topics(ref, MatrixXd::Ones(3, 2)));
}

TEST_CASE("align_topics: ties go to the smallest index pair")
{
    MatrixXd ref(3, 2);
    ref << 1, 1, 2, 2, 3, 3;
    const TopicPermutation p = align_topics(ref, ref);
    CHECK(p.perm == std::vector<Index>{0, 1});
}

TEST_CASE("align_topics: constant columns are matched last and flagged")
{
    MatrixXd ref(3, 3);
    ref << 0.5, 0.2, 0.1, 0.3, 0.2, 0.3, 0.2, 0.2, 0.6;
    MatrixXd est(3, 3);
    est << ref.col(2), ref.col(0), ref.col(1);
    const TopicPermutation p = align_topics(ref, est);
    CHECK(p.perm[0] == 1);
    CHECK(p.perm[2] == 0);
    CHECK(p.perm[1] == 2);
    CHECK(p.flagged[1]);
    CHECK_FALSE(p.flagged[0]);
    CHECK(std::isinf(p.match_scores[1]));
}

TEST_CASE("align_topics: greedy equals the brute-force assignment when dominant")
{
    Rng rng(1);
    int dominant_cases = 0;
    for (int rep = 0; rep < 400; ++rep) {
        const Index K = 2 + static_cast<Index>(rng() % 3);
        const MatrixXd ref = random_topics(25, K, rng);
        MatrixXd est = random_topics(25, K, rng);
        if (rep % 2 == 0) est = (ref + 0.3 * est) / 1.3;
        bool dominant = false;
        const auto best = best_assignment(ref, est, &dominant);
        if (!dominant) continue;
        ++dominant_cases;
        CHECK(align_topics(ref, est).perm == best);
    }
    CHECK(dominant_cases > 100);
}

TEST_CASE("align_topics: recovers random permutations under noise")
{
    Rng rng(2);
    int recovered = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        const MatrixXd ref = random_topics(50, 3, rng);
        std::vector<Index> applied{0, 1, 2};
        std::shuffle(applied.begin(), applied.end(), rng);
        MatrixXd est(50, 3);
        for (Index k = 0; k < 3; ++k) {
            const double scale = ref.col(k).mean();
            for (Index v = 0; v < 50; ++v)
                est(v, applied[static_cast<std::size_t>(k)]) = std::max(0.0, ref(v, k) + sample_normal(0, std::pow(0.01 * scale, 2), rng));
        }
        if (align_topics(ref, est).perm == applied) ++recovered;
    }
    CHECK(recovered == trials);
}

TEST_CASE("apply_alignment: inverse round trip and likelihood invariance")
{
    Rng rng(3);
    const LdaSimulation sim = simulate_lda(CountVector::Constant(6, 40), 8, 4, 0.5, 0.5, rng);
    TopicPermutation p;
    p.perm = {2, 0, 3, 1};
    p.match_scores.assign(4, 0.5);
    p.flagged.assign(4, false);
    const MatrixXd b = apply_alignment(sim.truth.beta, p);
    const MatrixXd th = apply_alignment(sim.truth.theta, p);
    CHECK(apply_alignment(b, p.inverse()) == sim.truth.beta);
    CHECK(apply_alignment(sim.truth.beta, TopicPermutation::identity(4)) == sim.truth.beta);
    // Reordering a K-term sum can move the last bit; K = 2 sums are commutative and exact.
    CHECK(lda_log_likelihood(sim.data.counts(), th, b) ==
          doctest::Approx(lda_log_likelihood(sim.data.counts(), sim.truth.theta, sim.truth.beta)).epsilon(1e-13));
    const LdaSimulation two = simulate_lda(CountVector::Constant(6, 40), 8, 2, 0.5, 0.5, rng);
    TopicPermutation swap;
    swap.perm = {1, 0};
    CHECK(lda_log_likelihood(two.data.counts(), apply_alignment(two.truth.theta, swap),
                             apply_alignment(two.truth.beta, swap)) ==
          lda_log_likelihood(two.data.counts(), two.truth.theta, two.truth.beta));
    CHECK_THROWS(apply_alignment(MatrixXd::Ones(3, 3), p));
}

TEST_CASE("apply_alignment: PosteriorSamples reorder matrices and vectors")
{
    PosteriorSamples s(2, 2);
    s.add_parameter("beta", 2, 3, 2);
    s.add_parameter("weights", 1, 2);
    s.add_parameter("other", 0, 1);
    MatrixXd b(3, 2);
    b << 1, 2, 3, 4, 5, 6;
    VectorXd w(2);
    w << 0.25, 0.75;
    for (Index c = 0; c < 2; ++c)
        for (Index t = 0; t < 2; ++t) {
            s.set_draw("beta", c, t, b);
            s.set_draw("weights", c, t, w);
            s.set_scalar("other", c, t, 7);
        }
    TopicPermutation p;
    p.perm = {1, 0};
    const PosteriorSamples r = apply_alignment(s, p, {"beta", "weights", "missing"});
    CHECK(r.draw("beta", 1, 1).col(0) == b.col(1));
    CHECK(r.draw("weights", 0, 0)(0, 0) == 0.75);
    CHECK(r.draw("other", 0, 1)(0, 0) == 7);
}

TEST_CASE("normalize_gap_scale: examples and properties")
{
    GapParams g;
    g.theta = MatrixXd::Ones(2, 1);
    g.beta = MatrixXd::Constant(2, 1, 2.0);
    const GapParams n = normalize_gap_scale(g);
    CHECK(n.beta(0, 0) == 0.5);
    CHECK(n.theta(1, 0) == 4);
    const GapParams again = normalize_gap_scale(n);
    CHECK(again.beta == n.beta);
    CHECK(again.theta == n.theta);

    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        GapParams r;
        r.theta = MatrixXd::Random(7, 3).cwiseAbs() * 10;
        r.beta = MatrixXd::Random(9, 3).cwiseAbs() * 0.1;
        const GapParams m = normalize_gap_scale(r);
        const MatrixXd before = r.theta * r.beta.transpose(), after = m.theta * m.beta.transpose();
        CHECK(((after - before).array() / before.array()).abs().maxCoeff() < 1e-12);
        CHECK((m.beta.colwise().sum().array() - 1).abs().maxCoeff() < 1e-14);
        const GapParams m2 = normalize_gap_scale(m);
        CHECK((m2.beta - m.beta).cwiseAbs().maxCoeff() < 1e-15);
    }

    GapParams z;
    z.theta = MatrixXd::Ones(2, 2);
    z.beta = MatrixXd::Zero(2, 2);
    z.beta(0, 1) = 3;
    std::vector<bool> flagged;
    const GapParams zn = normalize_gap_scale(z, &flagged);
    CHECK(flagged == std::vector<bool>{true, false});
    CHECK(zn.beta.col(0).isZero());
    CHECK(zn.theta.col(0) == z.theta.col(0));
}

TEST_CASE("permutation JSON round trip")
{
    TopicPermutation p;
    p.perm = {2, 0, 1};
    p.match_scores = {0.9, 0.5, -std::numeric_limits<double>::infinity()};
    p.flagged = {false, false, true};
    const TopicPermutation q = permutation_from_json(permutation_to_json(p));
    CHECK(q.perm == p.perm);
    CHECK(q.match_scores == p.match_scores);
    CHECK(q.flagged == p.flagged);
    CHECK(q.inverse().inverse().perm == p.perm);
}
