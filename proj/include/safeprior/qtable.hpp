#ifndef SAFEPRIOR_QTABLE_HPP
#define SAFEPRIOR_QTABLE_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "errors.hpp"

namespace safeprior {

/// Discrete state; for gridworlds the row-major cell index.
struct StateId {
    std::size_t index = 0;
    friend auto operator<=>(const StateId&, const StateId&) = default;
};

struct ActionId {
    std::size_t index = 0;
    friend auto operator<=>(const ActionId&, const ActionId&) = default;
};

struct DiscountedParams {
    double alpha = 0.05;
    double gamma = 0.95;

    void validate() const {
        // alpha = 0 is accepted as a frozen table
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("learning rate alpha must lie in [0,1]");
        if (!(gamma >= 0.0 && gamma <= 1.0))
            throw ConfigError("discount gamma must lie in [0,1]");
    }
};

/// Dense (state, action) -> value table. Dimensions are fixed at construction;
/// every entry starts at zero.
class QTable {
public:
    QTable() = default;

    QTable(std::size_t state_count, std::size_t action_count, double fill = 0.0)
        : states_(state_count), actions_(action_count),
          values_(state_count * action_count, fill) {
        if (state_count == 0 || action_count == 0)
            throw std::invalid_argument("QTable dimensions must be positive");
        if (!std::isfinite(fill)) throw std::invalid_argument("QTable fill must be finite");
    }

    std::size_t state_count() const noexcept { return states_; }
    std::size_t action_count() const noexcept { return actions_; }

    bool valid(StateId s) const noexcept { return s.index < states_; }
    bool valid(ActionId a) const noexcept { return a.index < actions_; }

    double at(StateId s, ActionId a) const {
        check(s, a);
        return values_[s.index * actions_ + a.index];
    }

    void set(StateId s, ActionId a, double v) {
        check(s, a);
        if (!std::isfinite(v)) throw std::invalid_argument("Q-values must be finite");
        values_[s.index * actions_ + a.index] = v;
    }

    std::span<const double> row(StateId s) const {
        check(s);
        return {values_.data() + s.index * actions_, actions_};
    }

    void set_row(StateId s, std::span<const double> values) {
        check(s);
        if (values.size() != actions_) throw std::invalid_argument("row width mismatch");
        for (std::size_t a = 0; a < actions_; ++a) set(s, ActionId{a}, values[a]);
    }

    double max_value(StateId s) const {
        auto r = row(s);
        return *std::max_element(r.begin(), r.end());
    }

    double min_value(StateId s) const {
        auto r = row(s);
        return *std::min_element(r.begin(), r.end());
    }

    /// Row mean, clamped to the row maximum so that at least one action always
    /// compares >= mean under floating-point rounding.
    double mean_value(StateId s) const {
        auto r = row(s);
        double m = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
        return std::min(m, max_value(s));
    }

    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const QTable&, const QTable&) = default;

private:
    void check(StateId s) const {
        if (!valid(s)) throw std::out_of_range("state index " + std::to_string(s.index) +
                                               " outside table of " + std::to_string(states_));
    }
    void check(StateId s, ActionId a) const {
        check(s);
        if (!valid(a)) throw std::out_of_range("action index " + std::to_string(a.index) +
                                               " outside table of " + std::to_string(actions_));
    }

    std::size_t states_ = 0;
    std::size_t actions_ = 0;
    std::vector<double> values_;
};

/// Action with the largest value; ties go to the lowest index.
inline ActionId greedy_action(const QTable& q, StateId s) {
    auto r = q.row(s);
    return ActionId{static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin())};
}

/// Q(s,a) - max_a' Q(s,a'). Never positive.
inline double advantage(const QTable& q, StateId s, ActionId a) {
    return q.at(s, a) - q.max_value(s);
}

/// Bracketed TD residual r + gamma * max Q(s',.) - Q(s,a); bootstrap is 0 on
/// terminal transitions.
inline double td_error(const QTable& q, StateId s, ActionId a, double r, StateId s_next,
                       bool terminal, double gamma) {
    if (!std::isfinite(r)) throw std::invalid_argument("reward must be finite");
    double bootstrap = terminal ? 0.0 : q.max_value(s_next);
    return r + gamma * bootstrap - q.at(s, a);
}

/// One Q-learning step. Returns the new Q(s,a).
inline double q_update(QTable& q, StateId s, ActionId a, double r, StateId s_next, bool terminal,
                       const DiscountedParams& p) {
    double delta = td_error(q, s, a, r, s_next, terminal, p.gamma);
    double v = q.at(s, a) + p.alpha * delta;
    q.set(s, a, v);
    return v;
}

// ---------------------------------------------------------------------------
// Persistence: "qtable <states> <actions>" then one whitespace-separated row per
// state. Values use the shortest decimal form that round-trips exactly.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, std::size_t line, std::size_t column) {
    double v = 0.0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw ParseError("malformed number '" + std::string(token) + "'", line, column);
    return v;
}

inline void write_qtable(std::ostream& os, const QTable& q) {
    os << "qtable " << q.state_count() << ' ' << q.action_count() << '\n';
    for (std::size_t s = 0; s < q.state_count(); ++s) {
        auto r = q.row(StateId{s});
        for (std::size_t a = 0; a < r.size(); ++a) {
            if (a) os << ' ';
            os << format_double(r[a]);
        }
        os << '\n';
    }
}

inline QTable read_qtable(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty Q-table stream", 1, 1);
    std::istringstream header(line);
    std::string tag;
    std::size_t states = 0, actions = 0;
    if (!(header >> tag >> states >> actions) || tag != "qtable" || states == 0 || actions == 0)
        throw ParseError("expected header 'qtable <state_count> <action_count>'", 1, 1);
    QTable q(states, actions);
    for (std::size_t s = 0; s < states; ++s) {
        std::size_t lineno = s + 2;
        if (!std::getline(is, line)) throw ParseError("missing Q-table row", lineno, 1);
        std::istringstream in(line);
        std::string token;
        std::size_t a = 0;
        while (in >> token) {
            if (a >= actions) throw ParseError("too many values in row", lineno, a + 1);
            double v = parse_double(token, lineno, a + 1);
            if (!std::isfinite(v)) throw ParseError("non-finite Q-value", lineno, a + 1);
            q.set(StateId{s}, ActionId{a}, v);
            ++a;
        }
        if (a != actions) throw ParseError("too few values in row", lineno, a + 1);
    }
    return q;
}

inline void save_qtable(const std::string& path, const QTable& q) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write Q-table file " + path);
    write_qtable(os, q);
}

inline QTable load_qtable(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open Q-table file " + path);
    return read_qtable(is);
}

}  // namespace safeprior

#endif
