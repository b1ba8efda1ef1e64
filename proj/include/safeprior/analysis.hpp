#ifndef SAFEPRIOR_ANALYSIS_HPP
#define SAFEPRIOR_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gridworld.hpp"
#include "learner.hpp"
#include "prior.hpp"
#include "qtable.hpp"
#include "rng.hpp"

namespace safeprior {

/// Actions the prior classifies as unsafe: Q_P(s,a) below the row mean.
inline std::vector<ActionId> prior_unsafe_set(const QTable& q_p, StateId s) {
    const double mean = q_p.mean_value(s);
    auto row = q_p.row(s);
    std::vector<ActionId> out;
    for (std::size_t a = 0; a < row.size(); ++a)
        if (row[a] < mean) out.push_back(ActionId{a});
    return out;
}

struct ConfusionCounts {
    std::size_t false_positives = 0;  // flagged unsafe, actually safe
    std::size_t false_negatives = 0;  // flagged safe, actually unsafe
    std::size_t identified = 0;       // flagged unsafe in total
};

/// 1 - FN / (I - FP + FN): the share of truly unsafe actions the prior flags.
inline double correctness(const ConfusionCounts& c) {
    if (c.identified < c.false_positives)
        throw DomainError("identified count smaller than false positives");
    std::size_t denominator = c.identified - c.false_positives + c.false_negatives;
    if (denominator == 0)
        throw DomainError("correctness undefined: no truly unsafe actions and none identified");
    return 1.0 - static_cast<double>(c.false_negatives) / static_cast<double>(denominator);
}

struct StateSafety {
    StateId state;
    std::vector<ActionId> prior_unsafe;
    std::vector<ActionId> true_unsafe;
};

struct PriorEvaluation {
    ConfusionCounts counts;
    std::size_t true_unsafe_total = 0;
    std::vector<StateSafety> per_state;
};

/// Compare the prior's unsafe sets with the map's collision oracle over every
/// non-obstacle, non-goal cell.
inline PriorEvaluation evaluate_prior(const QTable& q_p, const MapSpec& map) {
    if (q_p.state_count() != map.cell_count() || q_p.action_count() != kMoveCount)
        throw std::invalid_argument("prior table dimensions do not match the map");
    PriorEvaluation ev;
    for (StateId s : map.decision_states()) {
        StateSafety row{s, prior_unsafe_set(q_p, s), true_unsafe_actions(map, s)};
        auto contains = [](const std::vector<ActionId>& v, ActionId a) {
            return std::find(v.begin(), v.end(), a) != v.end();
        };
        for (ActionId a : row.prior_unsafe)
            if (!contains(row.true_unsafe, a)) ++ev.counts.false_positives;
        for (ActionId a : row.true_unsafe)
            if (!contains(row.prior_unsafe, a)) ++ev.counts.false_negatives;
        ev.counts.identified += row.prior_unsafe.size();
        ev.true_unsafe_total += row.true_unsafe.size();
        ev.per_state.push_back(std::move(row));
    }
    return ev;
}

/// A state-action pair passing the consensus threshold.
struct SelectedPair {
    StateId state;
    ActionId action;
    double entropy = 0.0;
    double mean = 0.0;
    bool truly_unsafe = false;
};

/// Every (s, a) over the map's decision states that the threshold selects.
inline std::vector<SelectedPair> selected_pairs(std::span<const SourceTask> sources,
                                                const MapSpec& map, double t, PriorMode mode) {
    std::vector<SelectedPair> out;
    for (StateId s : map.decision_states()) {
        auto unsafe = true_unsafe_actions(map, s);
        for (std::size_t a = 0; a < kMoveCount; ++a) {
            auto rec = consensus(sources, s, ActionId{a}, mode);
            if (!select(rec, t)) continue;
            bool bad = std::find(unsafe.begin(), unsafe.end(), ActionId{a}) != unsafe.end();
            out.push_back({s, ActionId{a}, rec.entropy, rec.mean, bad});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unsafe-exploration reduction factor under prior biasing.

struct TheoremParams {
    std::size_t action_count = 4;
    std::size_t unsafe_count = 1;
    double correctness = 1.0;
    double rho = 0.95;
    double epsilon = 1.0;  // cancels in the ratio

    void validate() const {
        if (action_count < 2) throw DomainError("need at least two actions");
        if (unsafe_count < 1) throw DomainError("need at least one unsafe action");
        if (unsafe_count >= action_count)
            throw DomainError("unsafe count must be smaller than the action count");
        if (!(correctness >= 0.0 && correctness <= 1.0))
            throw DomainError("correctness must lie in [0,1]");
        if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("rho must lie in [0,1]");
        if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in (0,1]");
    }

    /// Expected missed-unsafe actions U(1-C) fit among the |A|-U prior-safe
    /// actions. Outside this region the closed form is not a probability ratio.
    bool feasible() const {
        return static_cast<double>(unsafe_count) * (1.0 - correctness) <=
               static_cast<double>(action_count - unsafe_count) + 1e-12;
    }
};

/// p_priors / p_eps-greedy = 1 - rho (|A| C - U) / (|A| - U)
inline double theorem_ratio(const TheoremParams& p) {
    p.validate();
    const double A = static_cast<double>(p.action_count);
    const double U = static_cast<double>(p.unsafe_count);
    return 1.0 - p.rho * (A * p.correctness - U) / (A - U);
}

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_err = 0.0;
    std::size_t samples = 0;
    std::size_t unsafe = 0;
};

/// Simulates exploratory steps. With probability rho the prior removes U
/// flagged actions and a uniform draw is taken from the |A|-U remaining ones,
/// among which U(1-C) truly unsafe actions were missed on average (randomised
/// rounding of U(1-C), clamped to |A|-U). Otherwise the draw is uniform over
/// all |A| actions, U of which are unsafe. The unsafe rate is reported
/// relative to plain epsilon-greedy's U/|A|.
inline MonteCarloEstimate monte_carlo_unsafe_ratio(const TheoremParams& p, std::size_t samples,
                                                   RngStream& rng) {
    p.validate();
    if (samples < 10'000) throw ConfigError("Monte-Carlo verification needs at least 1e4 samples");
    const std::size_t safe_slots = p.action_count - p.unsafe_count;
    const double missed = static_cast<double>(p.unsafe_count) * (1.0 - p.correctness);
    const double missed_floor = std::floor(missed);
    const double missed_frac = missed - missed_floor;

    MonteCarloEstimate out;
    out.samples = samples;
    for (std::size_t i = 0; i < samples; ++i) {
        bool unsafe = false;
        if (rng.bernoulli(p.rho)) {
            std::size_t m = static_cast<std::size_t>(missed_floor) + (rng.bernoulli(missed_frac) ? 1 : 0);
            m = std::min(m, safe_slots);
            unsafe = rng.below(safe_slots) < m;
        } else {
            unsafe = rng.below(p.action_count) < p.unsafe_count;
        }
        out.unsafe += unsafe ? 1 : 0;
    }
    const double n = static_cast<double>(samples);
    const double rate = static_cast<double>(out.unsafe) / n;
    const double base = static_cast<double>(p.unsafe_count) / static_cast<double>(p.action_count);
    out.estimate = rate / base;
    out.std_err = std::sqrt(rate * (1.0 - rate) / n) / base;
    return out;
}

/// |estimate - closed form| within k standard errors. A zero standard error
/// (all-safe or all-unsafe tallies) requires an exact match.
inline bool within_std_errors(const MonteCarloEstimate& mc, double closed_form, double k = 3.0) {
    double diff = std::abs(mc.estimate - closed_form);
    if (mc.std_err == 0.0) return diff <= 1e-12;
    return diff < k * mc.std_err;
}

// ---------------------------------------------------------------------------
// Cross-seed aggregation.

struct MeanStdErr {
    double mean = 0.0;
    double std_err = 0.0;
};

inline MeanStdErr mean_std_err(std::span<const double> xs) {
    if (xs.empty()) throw ConfigError("mean of an empty sample");
    double sum = 0.0;
    for (double x : xs) sum += x;
    MeanStdErr out{sum / static_cast<double>(xs.size()), 0.0};
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.std_err = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
                      std::sqrt(static_cast<double>(xs.size()));
    }
    return out;
}

struct TdTrace {
    std::vector<MeanStdErr> episodes;
};

/// Per-episode mean and standard error of prior |TD| across runs.
inline TdTrace td_error_trace(std::span<const MetricsLog> runs) {
    if (runs.empty()) throw ConfigError("TD trace needs at least one run");
    const std::size_t n = runs.front().rows.size();
    for (const auto& r : runs)
        if (r.rows.size() != n) throw ConfigError("runs disagree on episode count");
    TdTrace out;
    std::vector<double> xs(runs.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < runs.size(); ++i) xs[i] = runs[i].rows[k].prior_td;
        out.episodes.push_back(mean_std_err(xs));
    }
    return out;
}

inline void write_td_trace_csv(std::ostream& os, const TdTrace& trace) {
    os << "episode,mean_abs_td,std_err\n";
    for (std::size_t k = 0; k < trace.episodes.size(); ++k)
        os << k << ',' << format_double(trace.episodes[k].mean) << ','
           << format_double(trace.episodes[k].std_err) << '\n';
}

struct AggregateRow {
    MeanStdErr discounted_return;
    MeanStdErr collisions;
    MeanStdErr cumulative_collisions;
    MeanStdErr steps;
};

/// Per-episode mean +- standard error across seeds of return, collisions and
/// cumulative collisions.
inline std::vector<AggregateRow> aggregate_runs(std::span<const MetricsLog> runs) {
    if (runs.empty()) throw ConfigError("aggregation needs at least one run");
    const std::size_t n = runs.front().rows.size();
    for (const auto& r : runs)
        if (r.rows.size() != n) throw ConfigError("runs disagree on episode count");
    std::vector<double> cumulative(runs.size(), 0.0);
    std::vector<double> ret(runs.size()), col(runs.size()), steps(runs.size());
    std::vector<AggregateRow> out;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& m = runs[i].rows[k];
            ret[i] = m.discounted_return;
            col[i] = static_cast<double>(m.collisions);
            steps[i] = static_cast<double>(m.steps);
            cumulative[i] += col[i];
        }
        out.push_back({mean_std_err(ret), mean_std_err(col), mean_std_err(cumulative),
                       mean_std_err(steps)});
    }
    return out;
}

inline void write_aggregate_csv(std::ostream& os, std::span<const AggregateRow> rows) {
    os << "episode,return_mean,return_se,collisions_mean,collisions_se,"
          "cumulative_collisions_mean,cumulative_collisions_se,steps_mean,steps_se\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        os << k << ',' << format_double(r.discounted_return.mean) << ','
           << format_double(r.discounted_return.std_err) << ',' << format_double(r.collisions.mean)
           << ',' << format_double(r.collisions.std_err) << ','
           << format_double(r.cumulative_collisions.mean) << ','
           << format_double(r.cumulative_collisions.std_err) << ',' << format_double(r.steps.mean)
           << ',' << format_double(r.steps.std_err) << '\n';
    }
}

}  // namespace safeprior

#endif
