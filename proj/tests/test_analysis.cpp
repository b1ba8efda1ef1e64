#include <gtest/gtest.h>

#include <sstream>
#include <vector>

#include "safeprior/analysis.hpp"

using namespace safeprior;

namespace {

QTable one_row(std::vector<double> row) {
    QTable q(1, row.size());
    q.set_row(StateId{0}, row);
    return q;
}

std::vector<std::size_t> indices(const std::vector<ActionId>& as) {
    std::vector<std::size_t> out;
    for (auto a : as) out.push_back(a.index);
    return out;
}

// -1 on every truly unsafe action, 0 elsewhere.
QTable oracle_prior(const MapSpec& map) {
    QTable q(map.cell_count(), kMoveCount);
    for (StateId s : map.decision_states())
        for (ActionId a : true_unsafe_actions(map, s)) q.set(s, a, -1.0);
    return q;
}

MetricsLog td_log(std::vector<double> tds) {
    MetricsLog log;
    for (std::size_t k = 0; k < tds.size(); ++k) {
        EpisodeMetrics m;
        m.episode = k;
        m.prior_td = tds[k];
        log.rows.push_back(m);
    }
    return log;
}

}  // namespace

TEST(PriorUnsafeSet, Examples) {
    EXPECT_TRUE(prior_unsafe_set(one_row({0.2, 0.2, 0.2, 0.2}), StateId{0}).empty());
    EXPECT_EQ(indices(prior_unsafe_set(one_row({-1, 0, 0, 0}), StateId{0})), (std::vector<std::size_t>{0}));
    EXPECT_EQ(indices(prior_unsafe_set(one_row({-2, -1, 1, 2}), StateId{0})), (std::vector<std::size_t>{0, 1}));
}

TEST(PriorUnsafeSet, InvariantUnderRowShift) {
    RngStream rng(14);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> row(4);
        for (auto& v : row) v = std::round(rng.uniform(-4, 4)) / 4;  // exact in binary
        auto shifted = row;
        double c = std::round(rng.uniform(-8, 8)) / 2;
        for (auto& v : shifted) v += c;
        EXPECT_EQ(indices(prior_unsafe_set(one_row(row), StateId{0})),
                  indices(prior_unsafe_set(one_row(shifted), StateId{0})));
    }
}

TEST(Correctness, Examples) {
    EXPECT_EQ(correctness({0, 0, 5}), 1.0);
    EXPECT_DOUBLE_EQ(correctness({2, 2, 10}), 0.8);
    EXPECT_EQ(correctness({0, 5, 0}), 0.0);
}

TEST(Correctness, UndefinedDenominatorIsAnError) {
    EXPECT_THROW(correctness({0, 0, 0}), DomainError);
    EXPECT_THROW(correctness({3, 0, 3}), DomainError);
    EXPECT_THROW(correctness({4, 0, 3}), DomainError);
}

TEST(Correctness, AlwaysInUnitInterval) {
    for (std::size_t fp = 0; fp < 6; ++fp)
        for (std::size_t fn = 0; fn < 6; ++fn)
            for (std::size_t id = fp; id < fp + 6; ++id) {
                if (id - fp + fn == 0) continue;
                double c = correctness({fp, fn, id});
                EXPECT_GE(c, 0.0);
                EXPECT_LE(c, 1.0);
            }
}

TEST(EvaluatePrior, ZeroPriorMissesEverything) {
    auto map = parse_map("....\n.#..\n...G\n");
    auto ev = evaluate_prior(QTable(map.cell_count(), kMoveCount), map);
    EXPECT_EQ(ev.counts.identified, 0u);
    EXPECT_EQ(ev.counts.false_positives, 0u);
    EXPECT_EQ(ev.counts.false_negatives, ev.true_unsafe_total);
    EXPECT_GT(ev.true_unsafe_total, 0u);
}

TEST(EvaluatePrior, OracleDerivedPriorIsPerfect) {
    auto map = parse_map("....\n.#..\n...G\n");
    auto ev = evaluate_prior(oracle_prior(map), map);
    EXPECT_EQ(ev.counts.false_positives, 0u);
    EXPECT_EQ(ev.counts.false_negatives, 0u);
    EXPECT_EQ(correctness(ev.counts), 1.0);
}

TEST(EvaluatePrior, OracleOnShippedMap) {
    auto map = load_map(std::string(SAFEPRIOR_SOURCE_DIR) + "/maps/original.map");
    auto ev = evaluate_prior(oracle_prior(map), map);
    EXPECT_EQ(correctness(ev.counts), 1.0);
    EXPECT_EQ(ev.counts.identified, ev.true_unsafe_total);
}

TEST(EvaluatePrior, DimensionMismatchThrows) {
    auto map = parse_map("..G\n");
    EXPECT_THROW(evaluate_prior(QTable(4, kMoveCount), map), std::invalid_argument);
}

TEST(TheoremRatio, Examples) {
    EXPECT_EQ(theorem_ratio({4, 2, 0.3, 0.0, 1.0}), 1.0);
    EXPECT_EQ(theorem_ratio({4, 1, 1.0, 1.0, 1.0}), 0.0);
    EXPECT_NEAR(theorem_ratio({4, 1, 0.9, 0.95, 1.0}), 0.17667, 1e-5);
    EXPECT_THROW(theorem_ratio({4, 4, 1.0, 1.0, 1.0}), DomainError);
    EXPECT_THROW(theorem_ratio({4, 0, 1.0, 1.0, 1.0}), DomainError);
}

TEST(TheoremRatio, MonotoneInCorrectnessAndRho) {
    for (std::size_t u = 1; u < 4; ++u)
        for (int i = 0; i <= 20; ++i)
            for (int j = 0; j < 20; ++j) {
                double x = i / 20.0, lo = j / 20.0, hi = (j + 1) / 20.0;
                EXPECT_LE(theorem_ratio({4, u, hi, x, 1.0}), theorem_ratio({4, u, lo, x, 1.0}));
                if (x > 0) {
                    EXPECT_LT(theorem_ratio({4, u, hi, x, 1.0}), theorem_ratio({4, u, lo, x, 1.0}));
                }
                // decreasing in rho wherever |A|C > U
                if (4 * x > static_cast<double>(u)) {
                    EXPECT_LT(theorem_ratio({4, u, x, hi, 1.0}), theorem_ratio({4, u, x, lo, 1.0}));
                }
            }
}

TEST(MonteCarloRatio, Examples) {
    RngStream rng(101);
    auto none = monte_carlo_unsafe_ratio({4, 2, 0.7, 0.0, 1.0}, 100000, rng);
    EXPECT_TRUE(within_std_errors(none, 1.0));
    auto perfect = monte_carlo_unsafe_ratio({4, 1, 1.0, 1.0, 1.0}, 100000, rng);
    EXPECT_EQ(perfect.estimate, 0.0);
    EXPECT_EQ(perfect.unsafe, 0u);
    auto mid = monte_carlo_unsafe_ratio({4, 1, 0.9, 0.95, 1.0}, 1'000'000, rng);
    EXPECT_LT(std::abs(mid.estimate - 0.17667), 3 * mid.std_err);
    EXPECT_THROW(monte_carlo_unsafe_ratio({4, 1, 0.9, 0.95, 1.0}, 9999, rng), ConfigError);
}

// Repeated runs over a 5x5x3 grid inside the region where the closed form is
// a probability ratio (U(1-C) <= |A|-U).
TEST(MonteCarloRatio, AgreesWithClosedFormAcrossGrid) {
    RngStream root(202);
    std::size_t runs = 0, agree = 0;
    std::uint64_t stream = 0;
    for (int repeat = 0; repeat < 4; ++repeat)
        for (std::size_t u = 1; u <= 3; ++u)
            for (double c : {0.7, 0.775, 0.85, 0.925, 1.0})
                for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
                    TheoremParams p{4, u, c, rho, 1.0};
                    ASSERT_TRUE(p.feasible());
                    RngStream rng = root.substream(stream++);
                    auto mc = monte_carlo_unsafe_ratio(p, 100000, rng);
                    ++runs;
                    agree += within_std_errors(mc, theorem_ratio(p)) ? 1 : 0;
                }
    EXPECT_GE(static_cast<double>(agree), 0.99 * static_cast<double>(runs)) << agree << "/" << runs;
}

TEST(TheoremParamsCheck, FeasibleRegion) {
    EXPECT_TRUE((TheoremParams{4, 1, 0.0, 1.0, 1.0}.feasible()));
    EXPECT_TRUE((TheoremParams{4, 3, 1.0, 1.0, 1.0}.feasible()));
    EXPECT_FALSE((TheoremParams{4, 3, 0.5, 1.0, 1.0}.feasible()));
    EXPECT_TRUE((TheoremParams{4, 2, 0.0, 0.5, 1.0}.feasible()));
}

TEST(MeanStdErr, SmallSamples) {
    auto one = mean_std_err(std::vector<double>{3.0});
    EXPECT_EQ(one.mean, 3.0);
    EXPECT_EQ(one.std_err, 0.0);
    auto two = mean_std_err(std::vector<double>{1.0, 3.0});
    EXPECT_DOUBLE_EQ(two.mean, 2.0);
    EXPECT_DOUBLE_EQ(two.std_err, 1.0);  // sd sqrt(2), divided by sqrt(2)
    EXPECT_THROW(mean_std_err(std::vector<double>{}), ConfigError);
}

TEST(TdTrace, SingleRunIsItsOwnColumn) {
    std::vector<MetricsLog> runs{td_log({0.5, 0.25, 0.125})};
    auto trace = td_error_trace(runs);
    ASSERT_EQ(trace.episodes.size(), 3u);
    EXPECT_EQ(trace.episodes[1].mean, 0.25);
    for (const auto& e : trace.episodes) EXPECT_EQ(e.std_err, 0.0);
}

TEST(TdTrace, IdenticalRunsHaveZeroSpread) {
    std::vector<MetricsLog> runs{td_log({0.5, 0.3}), td_log({0.5, 0.3})};
    for (const auto& e : td_error_trace(runs).episodes) EXPECT_EQ(e.std_err, 0.0);
}

TEST(TdTrace, RejectsEmptyAndRaggedInput) {
    EXPECT_THROW(td_error_trace(std::vector<MetricsLog>{}), ConfigError);
    std::vector<MetricsLog> ragged{td_log({0.5}), td_log({0.5, 0.3})};
    EXPECT_THROW(td_error_trace(ragged), ConfigError);
}

TEST(TdTrace, CsvLayout) {
    std::vector<MetricsLog> runs{td_log({0.5, 0.25})};
    std::ostringstream os;
    write_td_trace_csv(os, td_error_trace(runs));
    EXPECT_EQ(os.str(), "episode,mean_abs_td,std_err\n0,0.5,0\n1,0.25,0\n");
}

TEST(Aggregate, CumulativeCollisionsAcrossSeeds) {
    MetricsLog a, b;
    for (std::size_t k = 0; k < 3; ++k) {
        EpisodeMetrics m;
        m.episode = k;
        m.collisions = k;
        m.discounted_return = 1.0;
        a.rows.push_back(m);
        m.collisions = 2 * k;
        m.discounted_return = -1.0;
        b.rows.push_back(m);
    }
    std::vector<MetricsLog> runs{a, b};
    auto rows = aggregate_runs(runs);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_DOUBLE_EQ(rows[2].cumulative_collisions.mean, (3.0 + 6.0) / 2);
    EXPECT_DOUBLE_EQ(rows[0].discounted_return.mean, 0.0);
    EXPECT_DOUBLE_EQ(rows[0].discounted_return.std_err, 1.0);
    std::ostringstream os;
    write_aggregate_csv(os, rows);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
              "episode,return_mean,return_se,collisions_mean,collisions_se,"
              "cumulative_collisions_mean,cumulative_collisions_se,steps_mean,steps_se");
}
