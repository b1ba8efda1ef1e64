#ifndef SAFEPRIOR_PRIOR_HPP
#define SAFEPRIOR_PRIOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "qtable.hpp"

namespace safeprior {

/// Which consensus the prior looks for: actions that are consistently bad
/// (advantage-based) or consistently good (distance above the row minimum).
enum class PriorMode { AvoidUndesirable, SeekDesirable };

inline std::string to_string(PriorMode m) {
    return m == PriorMode::AvoidUndesirable ? "avoid" : "seek";
}

inline PriorMode parse_prior_mode(std::string_view s) {
    if (s == "avoid" || s == "undesirable") return PriorMode::AvoidUndesirable;
    if (s == "seek" || s == "desirable") return PriorMode::SeekDesirable;
    throw ConfigError("unknown prior mode '" + std::string(s) + "' (expected avoid or seek)");
}

inline constexpr double kZeroRowMaxGuard = 1e-12;
inline constexpr double kPseudoRewardCap = 1.0;

/// |(Q(s,a) - max Q(s,.)) / max Q(s,.)|, or nullopt when the row maximum is
/// (numerically) zero and the ratio is undefined.
inline std::optional<double> scaled_undesirability(const QTable& q, StateId s, ActionId a) {
    double top = q.max_value(s);
    if (std::abs(top) <= kZeroRowMaxGuard) return std::nullopt;
    return std::abs(advantage(q, s, a) / top);
}

/// |(Q(s,a) - min Q(s,.)) / max Q(s,.)|; same guard as scaled_undesirability.
inline std::optional<double> scaled_desirability(const QTable& q, StateId s, ActionId a) {
    double top = q.max_value(s);
    if (std::abs(top) <= kZeroRowMaxGuard) return std::nullopt;
    return std::abs((q.at(s, a) - q.min_value(s)) / top);
}

inline std::vector<double> softmax_normalize(std::span<const double> w) {
    if (w.empty()) throw ConfigError("softmax of an empty sequence");
    double shift = *std::max_element(w.begin(), w.end());
    std::vector<double> out(w.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        out[i] = std::exp(w[i] - shift);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

/// Shannon entropy divided by ln N, natural log throughout, 0 log 0 = 0.
inline double normalized_entropy(std::span<const double> p) {
    if (p.size() < 2) throw ConfigError("normalized entropy needs at least two entries");
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

/// Per-task scores for one (s, a) and their consensus statistics.
struct UndesirabilityRecord {
    std::vector<double> w;
    std::vector<double> w_norm;
    double entropy = 0.0;
    double mean = 0.0;
    std::size_t guarded = 0;  // tasks whose score fell back to 0 (zero row maximum)
};

inline bool select(const UndesirabilityRecord& r, double t) { return r.entropy * r.mean > t; }

/// Admissible range for the selection threshold given the domain's reward range.
inline std::pair<double, double> threshold_bounds(double r_min, double r_max) {
    if (r_max == 0.0) throw DomainError("threshold bound undefined for r_max = 0");
    if (r_min > r_max) throw DomainError("r_min must not exceed r_max");
    return {0.0, std::abs((r_min - r_max) / r_max)};
}

/// Reward implied by a (near-)optimal table: Q(s,a) - gamma * max Q(s',.).
inline double infer_reward(const QTable& q, StateId s, ActionId a, StateId s_next, double gamma,
                           bool terminal) {
    return q.at(s, a) - (terminal ? 0.0 : gamma * q.max_value(s_next));
}

/// A previously solved task. The goal, when known, marks which transitions
/// were terminal for that task.
struct SourceTask {
    std::string label;
    QTable q;
    std::optional<StateId> goal;
};

inline UndesirabilityRecord consensus(std::span<const SourceTask> sources, StateId s, ActionId a,
                                      PriorMode mode) {
    if (sources.size() < 2) throw ConfigError("consensus needs at least two source tasks");
    UndesirabilityRecord r;
    r.w.reserve(sources.size());
    for (const auto& src : sources) {
        auto w = mode == PriorMode::AvoidUndesirable ? scaled_undesirability(src.q, s, a)
                                                     : scaled_desirability(src.q, s, a);
        if (!w) ++r.guarded;
        r.w.push_back(w.value_or(0.0));
    }
    r.w_norm = softmax_normalize(r.w);
    r.entropy = normalized_entropy(r.w_norm);
    double sum = 0.0;
    for (double v : r.w) sum += v;
    r.mean = sum / static_cast<double>(r.w.size());
    return r;
}

struct PriorStats {
    std::size_t updates = 0;
    std::size_t selected = 0;
    std::size_t guarded_scores = 0;
};

/// The safety prior: Q_P plus what is needed to keep learning it.
class PriorModel {
public:
    PriorModel(std::vector<SourceTask> sources, double threshold_t, DiscountedParams params,
               PriorMode mode = PriorMode::AvoidUndesirable)
        : sources_(std::move(sources)), threshold_(threshold_t), params_(params), mode_(mode) {
        if (sources_.size() < 2) throw ConfigError("a prior needs at least two source tasks");
        if (threshold_t < 0.0) throw ConfigError("threshold t must be non-negative");
        params_.validate();
        const auto& first = sources_.front().q;
        for (const auto& s : sources_)
            if (s.q.state_count() != first.state_count() ||
                s.q.action_count() != first.action_count())
                throw ConfigError("source Q-tables disagree on dimensions");
        q_p_ = QTable(first.state_count(), first.action_count());
    }

    const QTable& q_p() const noexcept { return q_p_; }
    QTable& q_p() noexcept { return q_p_; }

    /// Replace Q_P, e.g. with a prior learned in another environment.
    void initialize(QTable q) {
        if (q.state_count() != q_p_.state_count() || q.action_count() != q_p_.action_count())
            throw ConfigError("initial prior table has mismatched dimensions");
        q_p_ = std::move(q);
    }

    std::span<const SourceTask> sources() const noexcept { return sources_; }
    double threshold() const noexcept { return threshold_; }
    const DiscountedParams& params() const noexcept { return params_; }
    PriorMode mode() const noexcept { return mode_; }
    const PriorStats& stats() const noexcept { return stats_; }
    PriorStats& stats() noexcept { return stats_; }

private:
    std::vector<SourceTask> sources_;
    double threshold_;
    DiscountedParams params_;
    PriorMode mode_;
    QTable q_p_;
    PriorStats stats_;
};

/// Weighted inferred reward for a selected pair, capped to [-1, 1]; 0 otherwise.
inline double pseudo_reward(const PriorModel& prior, const UndesirabilityRecord& record, StateId s,
                            ActionId a, StateId s_next) {
    if (!select(record, prior.threshold())) return 0.0;
    auto sources = prior.sources();
    double r = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        bool task_terminal = sources[i].goal && *sources[i].goal == s_next;
        r += record.w_norm[i] *
             infer_reward(sources[i].q, s, a, s_next, prior.params().gamma, task_terminal);
    }
    return std::clamp(r, -kPseudoRewardCap, kPseudoRewardCap);
}

inline double pseudo_reward(const PriorModel& prior, StateId s, ActionId a, StateId s_next) {
    return pseudo_reward(prior, consensus(prior.sources(), s, a, prior.mode()), s, a, s_next);
}

struct PriorUpdate {
    double pseudo_reward = 0.0;
    double td_error = 0.0;
    bool selected = false;
};

/// One prior-learning step on an observed transition: score the pair across
/// all source tasks, derive r_P, and apply the Q-learning update to Q_P.
/// `terminal` refers to the environment the transition came from.
inline PriorUpdate prior_update_step(PriorModel& prior, StateId s, ActionId a, StateId s_next,
                                     bool terminal) {
    auto record = consensus(prior.sources(), s, a, prior.mode());
    PriorUpdate out;
    out.selected = select(record, prior.threshold());
    out.pseudo_reward = pseudo_reward(prior, record, s, a, s_next);
    out.td_error = td_error(prior.q_p(), s, a, out.pseudo_reward, s_next, terminal,
                            prior.params().gamma);
    q_update(prior.q_p(), s, a, out.pseudo_reward, s_next, terminal, prior.params());
    auto& st = prior.stats();
    ++st.updates;
    st.selected += out.selected ? 1 : 0;
    st.guarded_scores += record.guarded;
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: Q_P in the Q-table format plus "<path>.meta" with key=value lines.

struct PriorMetadata {
    double threshold_t = 0.35;
    DiscountedParams params;
    PriorMode mode = PriorMode::AvoidUndesirable;
    std::vector<std::string> source_labels;
};

inline PriorMetadata metadata_of(const PriorModel& prior) {
    PriorMetadata m{prior.threshold(), prior.params(), prior.mode(), {}};
    for (const auto& s : prior.sources()) m.source_labels.push_back(s.label);
    return m;
}

inline void save_prior(const std::string& path, const QTable& q_p, const PriorMetadata& meta) {
    save_qtable(path, q_p);
    std::ofstream os(path + ".meta");
    if (!os) throw ConfigError("cannot write prior metadata " + path + ".meta");
    os << "threshold_t=" << format_double(meta.threshold_t) << '\n'
       << "alpha_p=" << format_double(meta.params.alpha) << '\n'
       << "gamma=" << format_double(meta.params.gamma) << '\n'
       << "mode=" << to_string(meta.mode) << '\n'
       << "sources=";
    for (std::size_t i = 0; i < meta.source_labels.size(); ++i)
        os << (i ? "," : "") << meta.source_labels[i];
    os << '\n';
}

inline void save_prior(const std::string& path, const PriorModel& prior) {
    save_prior(path, prior.q_p(), metadata_of(prior));
}

inline PriorMetadata load_prior_metadata(const std::string& path) {
    std::ifstream is(path + ".meta");
    if (!is) throw ConfigError("cannot open prior metadata " + path + ".meta");
    PriorMetadata m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno, 1);
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "threshold_t") m.threshold_t = parse_double(value, lineno, eq + 2);
        else if (key == "alpha_p") m.params.alpha = parse_double(value, lineno, eq + 2);
        else if (key == "gamma") m.params.gamma = parse_double(value, lineno, eq + 2);
        else if (key == "mode") m.mode = parse_prior_mode(value);
        else if (key == "sources") {
            std::stringstream ss(value);
            std::string label;
            while (std::getline(ss, label, ','))
                if (!label.empty()) m.source_labels.push_back(label);
        }
    }
    return m;
}

}  // namespace safeprior

#endif
