#ifndef SAFEPRIOR_LEARNER_HPP
#define SAFEPRIOR_LEARNER_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "explore.hpp"
#include "gridworld.hpp"
#include "prior.hpp"
#include "qtable.hpp"
#include "rng.hpp"

namespace safeprior {

struct TrainConfig {
    std::size_t episodes = 2000;
    std::size_t horizon = 500;
    DiscountedParams params{0.05, 0.95};
    ExploreConfig explore;
    bool prior_enabled = false;
    bool prior_learn_parallel = false;
    double noise = kDefaultNoise;

    void validate() const {
        if (horizon == 0) throw ConfigError("horizon must be positive");
        params.validate();
        explore.validate();
        if (prior_enabled && explore.mode == ExploreMode::None)
            throw ConfigError("prior biasing enabled without an exploration mode");
        if (noise < 0.0 || noise >= 0.5) throw ConfigError("noise must lie in [0, 0.5)");
    }

    std::string describe() const {
        std::ostringstream os;
        os << "episodes=" << episodes << ";horizon=" << horizon
           << ";alpha=" << format_double(params.alpha) << ";gamma=" << format_double(params.gamma)
           << ";epsilon0=" << format_double(explore.epsilon0)
           << ";epsilon_decay=" << format_double(explore.epsilon_decay)
           << ";epsilon_min=" << format_double(explore.epsilon_min)
           << ";rho=" << format_double(explore.rho) << ";mode=" << to_string(explore.mode)
           << ";prior_enabled=" << prior_enabled << ";prior_learn_parallel=" << prior_learn_parallel
           << ";noise=" << format_double(noise);
        return os.str();
    }
};

/// 64-bit FNV-1a, used to tag logs with the configuration that produced them.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct EpisodeMetrics {
    std::size_t episode = 0;
    double discounted_return = 0.0;
    std::size_t collisions = 0;
    std::size_t steps = 0;
    double epsilon = 0.0;
    double prior_td = std::numeric_limits<double>::quiet_NaN();  // NaN when no prior is learned

    friend bool operator==(const EpisodeMetrics& a, const EpisodeMetrics& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.episode == b.episode && same(a.discounted_return, b.discounted_return) &&
               a.collisions == b.collisions && a.steps == b.steps && same(a.epsilon, b.epsilon) &&
               same(a.prior_td, b.prior_td);
    }
};

struct MetricsLog {
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<EpisodeMetrics> rows;

    std::size_t total_collisions(std::size_t first_episodes) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < rows.size() && i < first_episodes; ++i) n += rows[i].collisions;
        return n;
    }

    double mean_return(std::size_t begin, std::size_t end) const {
        return window_mean(begin, end, [](const EpisodeMetrics& m) { return m.discounted_return; });
    }

    double mean_prior_td(std::size_t begin, std::size_t end) const {
        return window_mean(begin, end, [](const EpisodeMetrics& m) { return m.prior_td; });
    }

    friend bool operator==(const MetricsLog&, const MetricsLog&) = default;

private:
    template <class F>
    double window_mean(std::size_t begin, std::size_t end, F&& field) const {
        end = std::min(end, rows.size());
        if (begin >= end) return std::numeric_limits<double>::quiet_NaN();
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) sum += field(rows[i]);
        return sum / static_cast<double>(end - begin);
    }
};

inline void write_metrics_csv(std::ostream& os, const MetricsLog& log) {
    os << "episode,return,collisions,steps,epsilon,prior_td\n";
    for (const auto& m : log.rows)
        os << m.episode << ',' << format_double(m.discounted_return) << ',' << m.collisions << ','
           << m.steps << ',' << format_double(m.epsilon) << ','
           << (std::isnan(m.prior_td) ? std::string("nan") : format_double(m.prior_td)) << '\n';
}

inline void save_metrics_csv(const std::string& path, const MetricsLog& log) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write metrics file " + path);
    write_metrics_csv(os, log);
}

/// sum_h gamma^h r_h
inline double episode_return(std::span<const double> rewards, double gamma) {
    double total = 0.0, discount = 1.0;
    for (double r : rewards) {
        total += discount * r;
        discount *= gamma;
    }
    return total;
}

struct TrainResult {
    QTable q;
    MetricsLog log;
    std::size_t env_steps = 0;
    std::size_t prior_updates = 0;
};

/// Q-learning on one task. With cfg.prior_enabled the exploratory actions are
/// passed through the prior (`prior_table`, or the live table of
/// `prior_learner` when no table is given). With cfg.prior_learn_parallel every
/// transition also updates `prior_learner`.
inline TrainResult train_task(const MapSpec& map, const TrainConfig& cfg, RngStream& rng,
                              const QTable* prior_table = nullptr,
                              PriorModel* prior_learner = nullptr) {
    cfg.validate();
    if (cfg.prior_learn_parallel && !prior_learner)
        throw ConfigError("parallel prior learning requested without a prior model");
    if (cfg.prior_enabled && !prior_table) {
        if (!prior_learner) throw ConfigError("prior biasing requested without a prior");
        prior_table = &prior_learner->q_p();
    }
    if (prior_table && prior_table->state_count() != map.cell_count())
        throw ConfigError("prior table does not match the map's state space");

    TrainResult out{QTable(map.cell_count(), kMoveCount), {}, 0, 0};
    out.log.seed = rng.seed();
    out.log.config_hash = fnv1a(cfg.describe());
    GridEnv env(map, cfg.noise);

    for (std::size_t k = 0; k < cfg.episodes; ++k) {
        EpisodeMetrics m;
        m.episode = k;
        m.epsilon = epsilon_schedule(k, cfg.explore);
        double discount = 1.0, td_sum = 0.0;
        StateId s = env.reset(rng);
        for (std::size_t h = 0; h < cfg.horizon; ++h) {
            auto choice = epsilon_greedy(out.q, s, m.epsilon, rng);
            ActionId a = choice.action;
            if (choice.exploratory && cfg.prior_enabled && prior_table) {
                if (cfg.explore.mode == ExploreMode::AvoidUnsafe)
                    a = bias_exploratory_action(*prior_table, s, a, cfg.explore.rho, rng);
                else
                    a = greedy_prior_exploration(*prior_table, s, cfg.explore.rho, rng);
            }
            auto step = env.step(a, rng);
            ++out.env_steps;
            ++m.steps;
            m.collisions += step.collided ? 1 : 0;
            m.discounted_return += discount * step.reward;
            discount *= cfg.params.gamma;
            q_update(out.q, s, a, step.reward, step.next_state, step.terminal, cfg.params);
            if (cfg.prior_learn_parallel) {
                auto upd = prior_update_step(*prior_learner, s, a, step.next_state, step.terminal);
                td_sum += std::abs(upd.td_error);
                ++out.prior_updates;
            }
            if (step.terminal) break;
            s = step.next_state;
        }
        if (cfg.prior_learn_parallel && m.steps > 0) m.prior_td = td_sum / static_cast<double>(m.steps);
        out.log.rows.push_back(m);
    }
    return out;
}

/// Follow the greedy policy of q from `start`; true if the goal is reached
/// within `horizon` steps.
inline bool greedy_rollout_reaches_goal(const MapSpec& map, const QTable& q, StateId start,
                                        std::size_t horizon, double noise, RngStream& rng) {
    GridEnv env(map, noise);
    env.place(start);
    StateId s = start;
    for (std::size_t h = 0; h < horizon; ++h) {
        auto step = env.step(greedy_action(q, s), rng);
        if (step.terminal) return true;
        s = step.next_state;
    }
    return false;
}

/// Fraction of free start cells from which one greedy rollout reaches the goal.
inline double greedy_success_rate(const MapSpec& map, const QTable& q, std::size_t horizon,
                                  double noise, RngStream& rng) {
    auto starts = map.start_states();
    if (starts.empty()) throw ConfigError("map has no start cells");
    std::size_t ok = 0;
    for (StateId s : starts) ok += greedy_rollout_reaches_goal(map, q, s, horizon, noise, rng) ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(starts.size());
}

/// Source-table convergence criterion: one greedy rollout from every free
/// cell, under the map's own noise and a fixed evaluation stream, reaches the
/// goal. Noise-free rollouts are not used because exact value ties between
/// neighbouring cells can cycle forever without the pose jitter.
inline bool greedy_policy_converged(const MapSpec& map, const QTable& q, std::size_t horizon,
                                    double noise = kDefaultNoise, std::uint64_t eval_seed = 0) {
    RngStream rng(eval_seed);
    return greedy_success_rate(map, q, horizon, noise, rng) == 1.0;
}

inline std::string goal_label(GridCoord g) {
    return "goal_" + std::to_string(g.x) + "_" + std::to_string(g.y);
}

/// Plain Q-learning for one source task per goal. Task i draws from rng
/// substream i, so the result does not depend on how many goals follow it.
inline std::vector<SourceTask> train_sources(const MapSpec& map, std::span<const GridCoord> goals,
                                             const TrainConfig& cfg, const RngStream& rng,
                                             std::vector<MetricsLog>* logs = nullptr) {
    TrainConfig plain = cfg;
    plain.prior_enabled = false;
    plain.prior_learn_parallel = false;
    plain.explore.mode = ExploreMode::None;
    std::vector<SourceTask> out;
    for (std::size_t i = 0; i < goals.size(); ++i) {
        MapSpec task_map = map.with_goal(goals[i]);
        RngStream task_rng = rng.substream(i);
        auto res = train_task(task_map, plain, task_rng);
        if (logs) logs->push_back(res.log);
        out.push_back({goal_label(goals[i]), std::move(res.q), task_map.goal()});
    }
    return out;
}

/// Behaviour policy for standalone prior learning.
struct BehaviorPolicy {
    enum class Kind { UniformRandom, EpsilonGreedyOf };
    Kind kind = Kind::UniformRandom;
    const QTable* table = nullptr;  // required for EpsilonGreedyOf

    static BehaviorPolicy uniform() { return {}; }
    static BehaviorPolicy greedy_of(const QTable& q) { return {Kind::EpsilonGreedyOf, &q}; }
};

struct PriorLearningResult {
    PriorModel prior;
    MetricsLog log;
    std::size_t env_steps = 0;
    std::size_t prior_updates = 0;
};

/// Learn Q_P off-policy from the transitions of a behaviour policy, one
/// prior update per environment step.
inline PriorLearningResult learn_prior_offpolicy(const MapSpec& map,
                                                 std::vector<SourceTask> sources,
                                                 const BehaviorPolicy& behavior,
                                                 const TrainConfig& cfg, double threshold_t,
                                                 RngStream& rng,
                                                 PriorMode mode = PriorMode::AvoidUndesirable,
                                                 const QTable* initial_q_p = nullptr) {
    if (sources.size() < 2) throw ConfigError("prior learning needs at least two source tasks");
    for (const auto& s : sources)
        if (s.q.state_count() != map.cell_count() || s.q.action_count() != kMoveCount)
            throw ConfigError("source table '" + s.label + "' does not match the map");
    if (behavior.kind == BehaviorPolicy::Kind::EpsilonGreedyOf && !behavior.table)
        throw ConfigError("greedy behaviour policy needs a table");
    cfg.params.validate();
    cfg.explore.validate();

    PriorLearningResult out{PriorModel(std::move(sources), threshold_t, cfg.params, mode), {}, 0, 0};
    if (initial_q_p) out.prior.initialize(*initial_q_p);
    out.log.seed = rng.seed();
    out.log.config_hash = fnv1a(cfg.describe() + ";t=" + format_double(threshold_t) +
                                ";prior_mode=" + to_string(mode));
    GridEnv env(map, cfg.noise);

    for (std::size_t k = 0; k < cfg.episodes; ++k) {
        EpisodeMetrics m;
        m.episode = k;
        m.epsilon = behavior.kind == BehaviorPolicy::Kind::UniformRandom
                        ? 1.0
                        : epsilon_schedule(k, cfg.explore);
        double discount = 1.0, td_sum = 0.0;
        StateId s = env.reset(rng);
        for (std::size_t h = 0; h < cfg.horizon; ++h) {
            ActionId a = behavior.kind == BehaviorPolicy::Kind::UniformRandom
                             ? ActionId{rng.below(kMoveCount)}
                             : epsilon_greedy(*behavior.table, s, m.epsilon, rng).action;
            auto step = env.step(a, rng);
            ++out.env_steps;
            ++m.steps;
            m.collisions += step.collided ? 1 : 0;
            m.discounted_return += discount * step.reward;
            discount *= cfg.params.gamma;
            auto upd = prior_update_step(out.prior, s, a, step.next_state, step.terminal);
            ++out.prior_updates;
            td_sum += std::abs(upd.td_error);
            if (step.terminal) break;
            s = step.next_state;
        }
        if (m.steps > 0) m.prior_td = td_sum / static_cast<double>(m.steps);
        out.log.rows.push_back(m);
    }
    return out;
}

}  // namespace safeprior

#endif
