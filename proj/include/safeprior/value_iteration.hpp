#ifndef SAFEPRIOR_VALUE_ITERATION_HPP
#define SAFEPRIOR_VALUE_ITERATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "errors.hpp"
#include "qtable.hpp"

namespace safeprior {

struct Outcome {
    double probability = 1.0;
    StateId next;
    double reward = 0.0;
    bool terminal = false;
};

/// Finite MDP with explicit outcome lists per (state, action).
class ExplicitMdp {
public:
    ExplicitMdp(std::size_t state_count, std::size_t action_count)
        : states_(state_count), actions_(action_count), outcomes_(state_count * action_count) {
        if (state_count == 0 || action_count == 0)
            throw ConfigError("MDP dimensions must be positive");
    }

    std::size_t state_count() const noexcept { return states_; }
    std::size_t action_count() const noexcept { return actions_; }

    void add_outcome(StateId s, ActionId a, Outcome o) {
        if (s.index >= states_ || a.index >= actions_ || o.next.index >= states_)
            throw std::out_of_range("MDP outcome index out of range");
        outcomes_[s.index * actions_ + a.index].push_back(o);
    }

    const std::vector<Outcome>& outcomes(StateId s, ActionId a) const {
        return outcomes_.at(s.index * actions_ + a.index);
    }

    /// True when termination is reachable from every state under some action sequence.
    bool episodic() const {
        std::vector<bool> reaches(states_, false);
        std::vector<std::vector<std::size_t>> predecessors(states_);
        std::deque<std::size_t> frontier;
        for (std::size_t s = 0; s < states_; ++s)
            for (std::size_t a = 0; a < actions_; ++a)
                for (const auto& o : outcomes(StateId{s}, ActionId{a})) {
                    if (o.probability <= 0.0) continue;
                    if (o.terminal && !reaches[s]) {
                        reaches[s] = true;
                        frontier.push_back(s);
                    }
                    predecessors[o.next.index].push_back(s);
                }
        while (!frontier.empty()) {
            std::size_t s = frontier.front();
            frontier.pop_front();
            for (std::size_t p : predecessors[s])
                if (!reaches[p]) {
                    reaches[p] = true;
                    frontier.push_back(p);
                }
        }
        return std::all_of(reaches.begin(), reaches.end(), [](bool b) { return b; });
    }

private:
    std::size_t states_;
    std::size_t actions_;
    std::vector<std::vector<Outcome>> outcomes_;
};

/// Bellman-optimality backup of q at (s, a).
inline double bellman_backup(const ExplicitMdp& mdp, const QTable& q, StateId s, ActionId a,
                             double gamma) {
    double v = 0.0;
    for (const auto& o : mdp.outcomes(s, a))
        v += o.probability * (o.reward + (o.terminal ? 0.0 : gamma * q.max_value(o.next)));
    return v;
}

inline double bellman_residual(const ExplicitMdp& mdp, const QTable& q, double gamma) {
    double worst = 0.0;
    for (std::size_t s = 0; s < mdp.state_count(); ++s)
        for (std::size_t a = 0; a < mdp.action_count(); ++a)
            worst = std::max(worst, std::abs(bellman_backup(mdp, q, StateId{s}, ActionId{a}, gamma) -
                                             q.at(StateId{s}, ActionId{a})));
    return worst;
}

/// Synchronous value iteration on Q until the Bellman residual drops below tol.
inline QTable value_iteration(const ExplicitMdp& mdp, double gamma, double tol,
                              std::size_t max_sweeps = 1'000'000) {
    if (!(tol > 0.0)) throw ConfigError("value iteration tolerance must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
    if (gamma == 1.0 && !mdp.episodic())
        throw ConfigError("gamma = 1 requires an episodic model (termination reachable everywhere)");

    QTable q(mdp.state_count(), mdp.action_count());
    QTable next = q;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t s = 0; s < mdp.state_count(); ++s)
            for (std::size_t a = 0; a < mdp.action_count(); ++a) {
                double v = bellman_backup(mdp, q, StateId{s}, ActionId{a}, gamma);
                change = std::max(change, std::abs(v - q.at(StateId{s}, ActionId{a})));
                next.set(StateId{s}, ActionId{a}, v);
            }
        std::swap(q, next);
        // change is the residual of the previous iterate; the new one's is at most gamma * change
        if (change * gamma < tol && bellman_residual(mdp, q, gamma) < tol) return q;
    }
    throw ConfigError("value iteration did not reach the requested tolerance");
}

}  // namespace safeprior

#endif
