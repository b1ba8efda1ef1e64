#ifndef SAFEPRIOR_EXPLORE_HPP
#define SAFEPRIOR_EXPLORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "qtable.hpp"
#include "rng.hpp"

namespace safeprior {

enum class ExploreMode { None, AvoidUnsafe, SeekDesirable };

inline std::string to_string(ExploreMode m) {
    switch (m) {
        case ExploreMode::None: return "none";
        case ExploreMode::AvoidUnsafe: return "avoid";
        case ExploreMode::SeekDesirable: return "seek";
    }
    return "none";
}

inline ExploreMode parse_explore_mode(std::string_view s) {
    if (s == "none") return ExploreMode::None;
    if (s == "avoid" || s == "avoid_unsafe") return ExploreMode::AvoidUnsafe;
    if (s == "seek" || s == "seek_desirable") return ExploreMode::SeekDesirable;
    throw ConfigError("unknown exploration mode '" + std::string(s) + "'");
}

struct ExploreConfig {
    double epsilon0 = 1.0;
    double epsilon_decay = 0.9999;  // per-episode factor
    double epsilon_min = 0.05;
    double rho = 0.95;             // probability of consulting the prior on an exploratory step
    ExploreMode mode = ExploreMode::None;

    void validate() const {
        if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0)) throw ConfigError("epsilon0 must lie in [0,1]");
        if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0))
            throw ConfigError("epsilon decay must lie in (0,1]");
        if (!(epsilon_min >= 0.0 && epsilon_min <= 1.0))
            throw ConfigError("epsilon floor must lie in [0,1]");
        if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0,1]");
    }
};

/// max(epsilon_min, epsilon0 * decay^k)
inline double epsilon_schedule(std::size_t episode, const ExploreConfig& cfg) {
    return std::max(cfg.epsilon_min,
                    cfg.epsilon0 * std::pow(cfg.epsilon_decay, static_cast<double>(episode)));
}

struct ActionChoice {
    ActionId action;
    bool exploratory = false;
};

inline ActionChoice epsilon_greedy(const QTable& q, StateId s, double eps, RngStream& rng) {
    if (rng.bernoulli(eps)) return {ActionId{rng.below(q.action_count())}, true};
    return {greedy_action(q, s), false};
}

/// Rejection step against below-mean prior actions: with probability rho,
/// redraw uniformly from the full action set until Q_P(s, a) reaches the row
/// mean. The row maximum always qualifies, so the loop terminates.
inline ActionId bias_exploratory_action(const QTable& q_p, StateId s, ActionId proposed,
                                        double rho, RngStream& rng) {
    if (!q_p.valid(proposed)) throw std::out_of_range("proposed action outside prior table");
    if (!rng.bernoulli(rho)) return proposed;
    const double mean = q_p.mean_value(s);
    auto row = q_p.row(s);
    ActionId a = proposed;
    while (row[a.index] < mean) a = ActionId{rng.below(q_p.action_count())};
    return a;
}

/// Exploratory action for the desirable-action prior: greedy in Q_P with
/// probability rho, uniform otherwise.
inline ActionId greedy_prior_exploration(const QTable& q_p, StateId s, double rho, RngStream& rng) {
    if (rng.bernoulli(rho)) return greedy_action(q_p, s);
    return ActionId{rng.below(q_p.action_count())};
}

}  // namespace safeprior

#endif
