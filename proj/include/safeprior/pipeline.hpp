#ifndef SAFEPRIOR_PIPELINE_HPP
#define SAFEPRIOR_PIPELINE_HPP

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "gridworld.hpp"
#include "learner.hpp"
#include "parallel.hpp"
#include "prior.hpp"
#include "qtable.hpp"
#include "rng.hpp"
#include "transfer.hpp"

namespace safeprior {

// Stream layout under pipeline_seed: substream 0 trains the source tasks
// (one nested substream per goal), substream 1 drives prior learning.
inline RngStream source_stream(const ExperimentConfig& c) { return RngStream(c.pipeline_seed).substream(0); }
inline RngStream prior_stream(const ExperimentConfig& c) { return RngStream(c.pipeline_seed).substream(1); }

inline MapSpec load_target_map(const ExperimentConfig& c) {
    MapSpec map = load_map(c.map_path);
    return c.target_goal ? map.with_goal(*c.target_goal) : map;
}

// ---------------------------------------------------------------------------
// Source tasks

struct SourceSet {
    std::vector<SourceTask> tasks;
    std::vector<MetricsLog> logs;
    std::vector<bool> converged;

    bool all_converged() const {
        for (bool b : converged)
            if (!b) return false;
        return true;
    }
};

/// Same tables as train_sources (goal i uses substream i of rng) with goals
/// trained concurrently.
inline SourceSet build_sources(const MapSpec& map, std::span<const GridCoord> goals,
                               const TrainConfig& cfg, const RngStream& rng, std::size_t jobs = 1) {
    TrainConfig plain = cfg;
    plain.prior_enabled = false;
    plain.prior_learn_parallel = false;
    plain.explore.mode = ExploreMode::None;
    std::vector<MapSpec> maps;
    for (auto g : goals) maps.push_back(map.with_goal(g));  // rejects goals on obstacles up front

    SourceSet out;
    out.tasks.resize(goals.size());
    out.logs.resize(goals.size());
    out.converged.resize(goals.size());
    std::vector<char> ok(goals.size(), 0);
    parallel_for(goals.size(), jobs, [&](std::size_t i) {
        RngStream task_rng = rng.substream(i);
        auto res = train_task(maps[i], plain, task_rng);
        ok[i] = greedy_policy_converged(maps[i], res.q, plain.horizon, plain.noise) ? 1 : 0;
        out.tasks[i] = {goal_label(goals[i]), std::move(res.q), maps[i].goal()};
        out.logs[i] = std::move(res.log);
    });
    for (std::size_t i = 0; i < goals.size(); ++i) out.converged[i] = ok[i] != 0;
    return out;
}

inline SourceSet build_sources(const ExperimentConfig& c, const MapSpec& map) {
    return build_sources(map, c.source_goals, c.source_config(), source_stream(c), c.jobs);
}

/// "goal_<x>_<y>" back to its coordinate.
inline std::optional<GridCoord> goal_from_label(const std::string& label) {
    int x = 0, y = 0;
    char tail = 0;
    if (std::sscanf(label.c_str(), "goal_%d_%d%c", &x, &y, &tail) == 2) return GridCoord{x, y};
    return std::nullopt;
}

/// Source table from a file named after its task label, e.g. goal_1_1.qtable.
inline SourceTask load_source(const std::string& path, const MapSpec& map) {
    SourceTask t;
    t.label = std::filesystem::path(path).stem().string();
    t.q = load_qtable(path);
    if (t.q.state_count() != map.cell_count() || t.q.action_count() != kMoveCount)
        throw ConfigError("source table " + path + " does not match the map");
    if (auto g = goal_from_label(t.label); g && map.in_bounds(*g)) t.goal = map.state_of(*g);
    return t;
}

// ---------------------------------------------------------------------------
// Prior

struct PriorReport {
    PriorEvaluation evaluation;
    std::vector<SelectedPair> selected;
    std::size_t selected_unsafe = 0;
    std::optional<double> correctness_value;  // unset when undefined

    double selected_precision() const {
        return selected.empty() ? 0.0
                                : static_cast<double>(selected_unsafe) / static_cast<double>(selected.size());
    }
};

inline PriorReport report_prior(const QTable& q_p, std::span<const SourceTask> sources,
                                const MapSpec& map, double t, PriorMode mode) {
    PriorReport r;
    r.evaluation = evaluate_prior(q_p, map);
    r.selected = selected_pairs(sources, map, t, mode);
    for (const auto& p : r.selected) r.selected_unsafe += p.truly_unsafe ? 1 : 0;
    try {
        r.correctness_value = correctness(r.evaluation.counts);
    } catch (const DomainError&) {
    }
    return r;
}

inline PriorLearningResult build_prior(const ExperimentConfig& c, const MapSpec& map,
                                       std::vector<SourceTask> sources,
                                       const QTable* initial = nullptr) {
    RngStream rng = prior_stream(c);
    return learn_prior_offpolicy(map, std::move(sources), BehaviorPolicy::uniform(), c.prior_config(),
                                 c.threshold_t, rng, c.prior_mode, initial);
}

/// Largest H*mu the selection test can see for this reward range, used to warn
/// when t can never be exceeded.
inline bool threshold_out_of_range(double t, double r_min, double r_max) {
    return t > threshold_bounds(r_min, r_max).second;
}

// ---------------------------------------------------------------------------
// Target task: paired baseline / with-prior runs

struct TargetPair {
    std::uint64_t seed = 0;
    TrainResult baseline;
    TrainResult with_prior;
    double baseline_success = 0.0;
    double with_prior_success = 0.0;
};

/// Both arms of one seed start from RngStream(seed), so they share start
/// cells and noise until their action choices diverge. Greedy success is
/// scored with an evaluation stream of the same seed.
inline TargetPair run_target_pair(const MapSpec& map, const QTable& q_p, const TrainConfig& base_cfg,
                                  ExploreMode mode, std::uint64_t seed) {
    TargetPair p;
    p.seed = seed;
    TrainConfig plain = base_cfg;
    plain.prior_enabled = false;
    plain.prior_learn_parallel = false;
    plain.explore.mode = ExploreMode::None;
    TrainConfig biased = plain;
    biased.prior_enabled = true;
    biased.explore.mode = mode;

    RngStream r1(seed), r2(seed);
    p.baseline = train_task(map, plain, r1);
    p.with_prior = train_task(map, biased, r2, &q_p);
    RngStream e1 = RngStream(seed).substream(1), e2 = RngStream(seed).substream(1);
    p.baseline_success = greedy_success_rate(map, p.baseline.q, plain.horizon, plain.noise, e1);
    p.with_prior_success = greedy_success_rate(map, p.with_prior.q, plain.horizon, plain.noise, e2);
    return p;
}

inline std::vector<TargetPair> run_target_pairs(const MapSpec& map, const QTable& q_p,
                                                const TrainConfig& cfg, ExploreMode mode,
                                                std::span<const std::uint64_t> seeds, std::size_t jobs) {
    std::vector<TargetPair> out(seeds.size());
    parallel_for(seeds.size(), jobs,
                 [&](std::size_t i) { out[i] = run_target_pair(map, q_p, cfg, mode, seeds[i]); });
    return out;
}

struct TargetSummary {
    std::size_t pairs = 0;
    std::size_t lower_at_200 = 0;
    std::size_t lower_at_2000 = 0;
    double baseline_return_first100 = 0.0;
    double with_prior_return_first100 = 0.0;
    double baseline_return_first200 = 0.0;
    double with_prior_return_first200 = 0.0;
    double baseline_success = 0.0;    // pooled over seeds and start cells
    double with_prior_success = 0.0;
    double min_with_prior_success = 1.0;
};

inline TargetSummary summarize_targets(std::span<const TargetPair> pairs) {
    TargetSummary s;
    s.pairs = pairs.size();
    if (pairs.empty()) return s;
    for (const auto& p : pairs) {
        s.lower_at_200 += p.with_prior.log.total_collisions(200) < p.baseline.log.total_collisions(200);
        s.lower_at_2000 += p.with_prior.log.total_collisions(2000) < p.baseline.log.total_collisions(2000);
        s.baseline_return_first100 += p.baseline.log.mean_return(0, 100);
        s.with_prior_return_first100 += p.with_prior.log.mean_return(0, 100);
        s.baseline_return_first200 += p.baseline.log.mean_return(0, 200);
        s.with_prior_return_first200 += p.with_prior.log.mean_return(0, 200);
        s.baseline_success += p.baseline_success;
        s.with_prior_success += p.with_prior_success;
        s.min_with_prior_success = std::min(s.min_with_prior_success, p.with_prior_success);
    }
    const double n = static_cast<double>(pairs.size());
    s.baseline_return_first100 /= n;
    s.with_prior_return_first100 /= n;
    s.baseline_return_first200 /= n;
    s.with_prior_return_first200 /= n;
    s.baseline_success /= n;
    s.with_prior_success /= n;
    return s;
}

// ---------------------------------------------------------------------------
// Unsafe-exploration ratio grid

struct TheoremRow {
    TheoremParams params;
    double closed_form = 0.0;
    MonteCarloEstimate mc;
    bool pass = false;
};

/// Closed form against simulation at every grid point; point i samples from
/// substream i of `rng`.
inline std::vector<TheoremRow> verify_theorem_grid(const ExperimentConfig& c, const RngStream& rng) {
    std::vector<TheoremParams> grid;
    for (auto u : c.theorem_unsafe)
        for (double cc : c.theorem_correctness)
            for (double rho : c.theorem_rho) grid.push_back({c.theorem_actions, u, cc, rho, 1.0});
    for (const auto& p : grid) p.validate();
    std::vector<TheoremRow> rows(grid.size());
    parallel_for(grid.size(), c.jobs, [&](std::size_t i) {
        RngStream r = rng.substream(i);
        rows[i].params = grid[i];
        rows[i].closed_form = theorem_ratio(grid[i]);
        rows[i].mc = monte_carlo_unsafe_ratio(grid[i], c.theorem_samples, r);
        rows[i].pass = within_std_errors(rows[i].mc, rows[i].closed_form);
    });
    return rows;
}

inline void write_theorem_csv(std::ostream& os, std::span<const TheoremRow> rows) {
    os << "action_count,unsafe_count,correctness,rho,closed_form,estimate,std_err,samples,feasible,pass\n";
    for (const auto& r : rows)
        os << r.params.action_count << ',' << r.params.unsafe_count << ','
           << format_double(r.params.correctness) << ',' << format_double(r.params.rho) << ','
           << format_double(r.closed_form) << ',' << format_double(r.mc.estimate) << ','
           << format_double(r.mc.std_err) << ',' << r.mc.samples << ','
           << (r.params.feasible() ? 1 : 0) << ',' << (r.pass ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Common-reward variant

inline int manhattan(GridCoord a, GridCoord b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

/// Selected pairs whose noise-free move brings the agent closer to `target`.
inline std::size_t count_approaching(std::span<const SelectedPair> pairs, const MapSpec& map,
                                     GridCoord target) {
    std::size_t n = 0;
    for (const auto& p : pairs) {
        GridCoord c = map.coord_of(p.state);
        auto d = move_delta(p.action);
        n += manhattan({c.x + d[0], c.y + d[1]}, target) < manhattan(c, target) ? 1 : 0;
    }
    return n;
}

inline MapSpec load_common_reward_map(const ExperimentConfig& c) {
    MapSpec map = load_map(c.common_reward_map).with_common_reward(c.common_reward_value);
    if (!map.common_reward_state()) throw ConfigError("map " + c.common_reward_map + " has no common-reward cell");
    return c.target_goal ? map.with_goal(*c.target_goal) : map;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << text;
}

inline void echo_config(const std::filesystem::path& dir, const ExperimentConfig& c) {
    write_text_file(dir / "config.resolved", to_text(c));
}

}  // namespace safeprior

#endif
