#ifndef SAFEPRIOR_CONFIG_HPP
#define SAFEPRIOR_CONFIG_HPP

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "gridworld.hpp"
#include "learner.hpp"
#include "prior.hpp"
#include "qtable.hpp"

namespace safeprior {

/// Every knob of one experiment. Defaults reproduce the navigation setup:
/// alpha 0.05, gamma 0.95, H 500, K 2000, t 0.35, rho 0.95.
struct ExperimentConfig {
    std::string map_path = "maps/original.map";
    std::vector<GridCoord> source_goals{{1, 1}, {22, 1}, {1, 19}, {22, 19}};
    std::optional<GridCoord> target_goal;  // default: the map's own goal cell

    TrainConfig train;                      // target-task and prior-learning loops
    std::size_t source_episodes = 10000;
    std::size_t prior_episodes = 2000;
    double threshold_t = 0.35;
    PriorMode prior_mode = PriorMode::AvoidUndesirable;

    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::uint64_t pipeline_seed = 7;        // sources and prior learning
    std::string out_dir = "out";
    std::size_t jobs = 1;

    std::vector<std::string> source_paths;  // learn-prior input tables
    std::string prior_path;                 // train-target / transfer input
    std::vector<std::string> variant_paths{"maps/variant_a.map", "maps/variant_b.map",
                                           "maps/variant_c.map", "maps/variant_d.map"};
    bool transfer_retrain_sources = true;

    std::string common_reward_map = "maps/common_reward.map";
    double common_reward_value = 0.2;

    std::size_t theorem_actions = 4;
    std::vector<std::size_t> theorem_unsafe{1, 2, 3};
    std::vector<double> theorem_correctness{0.5, 0.9, 1.0};
    std::vector<double> theorem_rho{0.0, 0.5, 0.95, 1.0};
    std::size_t theorem_samples = 1'000'000;

    TrainConfig source_config() const {
        TrainConfig c = train;
        c.episodes = source_episodes;
        c.prior_enabled = false;
        c.prior_learn_parallel = false;
        c.explore.mode = ExploreMode::None;
        return c;
    }

    TrainConfig prior_config() const {
        TrainConfig c = train;
        c.episodes = prior_episodes;
        return c;
    }

    void validate() const {
        train.validate();
        if (source_goals.empty()) throw ConfigError("no source goals configured");
        if (seeds.empty()) throw ConfigError("no seeds configured");
        if (jobs == 0) throw ConfigError("jobs must be at least 1");
        if (threshold_t < 0.0) throw ConfigError("threshold_t must be non-negative");
        if (theorem_samples < 10'000) throw ConfigError("theorem_samples must be at least 10000");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(sep, start);
        if (end == std::string_view::npos) end = s.size();
        auto item = trim(s.substr(start, end - start));
        if (!item.empty()) out.push_back(item);
        start = end + 1;
    }
    return out;
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" +
                          std::string(v) + "'");
    return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
    try {
        return parse_double(v, 1, 1);
    } catch (const ParseError&) {
        throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    }
}

inline bool parse_flag(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

inline GridCoord parse_coord(std::string_view key, std::string_view v) {
    auto parts = split(v, ',');
    if (parts.size() != 2) throw ConfigError(std::string(key) + ": expected x,y, got '" + std::string(v) + "'");
    return {parse_integer<int>(key, parts[0]), parse_integer<int>(key, parts[1])};
}

inline std::string join_coords(const std::vector<GridCoord>& cs) {
    std::string out;
    for (std::size_t i = 0; i < cs.size(); ++i)
        out += (i ? ";" : "") + std::to_string(cs[i].x) + "," + std::to_string(cs[i].y);
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
    return out;
}

}  // namespace detail

/// "n" means seeds 0..n-1; a comma list names the seeds explicitly.
inline std::vector<std::uint64_t> parse_seeds(std::string_view v) {
    std::vector<std::uint64_t> out;
    if (v.find(',') == std::string_view::npos) {
        auto n = detail::parse_integer<std::uint64_t>("seeds", detail::trim(v));
        if (n == 0) throw ConfigError("seeds: need at least one seed");
        for (std::uint64_t i = 0; i < n; ++i) out.push_back(i);
        return out;
    }
    for (const auto& s : detail::split(v, ',')) out.push_back(detail::parse_integer<std::uint64_t>("seeds", s));
    if (out.empty()) throw ConfigError("seeds: empty list");
    return out;
}

/// Apply one key=value setting. Unknown keys are configuration errors.
inline void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view raw) {
    using namespace detail;
    const std::string v = trim(raw);
    auto real = [&] { return parse_real(key, v); };
    auto count = [&] { return parse_integer<std::size_t>(key, v); };

    if (key == "map") c.map_path = v;
    else if (key == "source_goals") {
        c.source_goals.clear();
        for (const auto& g : split(v, ';')) c.source_goals.push_back(parse_coord(key, g));
    } else if (key == "target_goal") {
        if (v.empty() || v == "map") c.target_goal.reset();
        else c.target_goal = parse_coord(key, v);
    }
    else if (key == "episodes") c.train.episodes = count();
    else if (key == "horizon") c.train.horizon = count();
    else if (key == "alpha") c.train.params.alpha = real();
    else if (key == "gamma") c.train.params.gamma = real();
    else if (key == "epsilon0") c.train.explore.epsilon0 = real();
    else if (key == "epsilon_decay") c.train.explore.epsilon_decay = real();
    else if (key == "epsilon_min") c.train.explore.epsilon_min = real();
    else if (key == "rho") c.train.explore.rho = real();
    else if (key == "noise") c.train.noise = real();
    else if (key == "source_episodes") c.source_episodes = count();
    else if (key == "prior_episodes") c.prior_episodes = count();
    else if (key == "threshold_t") c.threshold_t = real();
    else if (key == "mode") c.prior_mode = parse_prior_mode(v);
    else if (key == "seeds") c.seeds = parse_seeds(v);
    else if (key == "pipeline_seed") c.pipeline_seed = parse_integer<std::uint64_t>(key, v);
    else if (key == "out") c.out_dir = v;
    else if (key == "jobs") c.jobs = count();
    else if (key == "sources") c.source_paths = split(v, ',');
    else if (key == "prior") c.prior_path = v;
    else if (key == "variants") c.variant_paths = split(v, ',');
    else if (key == "transfer_retrain_sources") c.transfer_retrain_sources = parse_flag(key, v);
    else if (key == "common_reward_map") c.common_reward_map = v;
    else if (key == "common_reward_value") c.common_reward_value = real();
    else if (key == "theorem_actions") c.theorem_actions = count();
    else if (key == "theorem_unsafe") {
        c.theorem_unsafe.clear();
        for (const auto& s : split(v, ',')) c.theorem_unsafe.push_back(parse_integer<std::size_t>(key, s));
    } else if (key == "theorem_correctness") {
        c.theorem_correctness.clear();
        for (const auto& s : split(v, ',')) c.theorem_correctness.push_back(parse_real(key, s));
    } else if (key == "theorem_rho") {
        c.theorem_rho.clear();
        for (const auto& s : split(v, ',')) c.theorem_rho.push_back(parse_real(key, s));
    }
    else if (key == "theorem_samples") c.theorem_samples = count();
    else throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

/// key=value lines; '#' starts a comment; blank lines are ignored.
inline void apply_config_text(ExperimentConfig& c, std::string_view text) {
    std::stringstream ss{std::string(text)};
    std::size_t lineno = 0;
    for (std::string raw; std::getline(ss, raw);) {
        ++lineno;
        auto line = detail::trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        set_config_value(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    apply_config_text(c, buf.str());
}

/// Every key with its resolved value; feeding this back reproduces the config.
inline std::string to_text(const ExperimentConfig& c) {
    using detail::join;
    auto num = [](double x) { return format_double(x); };
    auto uint = [](auto x) { return std::to_string(x); };
    std::ostringstream os;
    os << "map=" << c.map_path << '\n'
       << "source_goals=" << detail::join_coords(c.source_goals) << '\n'
       << "target_goal="
       << (c.target_goal ? std::to_string(c.target_goal->x) + "," + std::to_string(c.target_goal->y)
                         : std::string("map"))
       << '\n'
       << "episodes=" << c.train.episodes << '\n'
       << "horizon=" << c.train.horizon << '\n'
       << "alpha=" << num(c.train.params.alpha) << '\n'
       << "gamma=" << num(c.train.params.gamma) << '\n'
       << "epsilon0=" << num(c.train.explore.epsilon0) << '\n'
       << "epsilon_decay=" << num(c.train.explore.epsilon_decay) << '\n'
       << "epsilon_min=" << num(c.train.explore.epsilon_min) << '\n'
       << "rho=" << num(c.train.explore.rho) << '\n'
       << "noise=" << num(c.train.noise) << '\n'
       << "source_episodes=" << c.source_episodes << '\n'
       << "prior_episodes=" << c.prior_episodes << '\n'
       << "threshold_t=" << num(c.threshold_t) << '\n'
       << "mode=" << to_string(c.prior_mode) << '\n'
       << "seeds=" << join(c.seeds, uint) << (c.seeds.size() == 1 ? "," : "") << '\n'
       << "pipeline_seed=" << c.pipeline_seed << '\n'
       << "out=" << c.out_dir << '\n'
       << "jobs=" << c.jobs << '\n'
       << "sources=" << join(c.source_paths, [](const std::string& s) { return s; }) << '\n'
       << "prior=" << c.prior_path << '\n'
       << "variants=" << join(c.variant_paths, [](const std::string& s) { return s; }) << '\n'
       << "transfer_retrain_sources=" << (c.transfer_retrain_sources ? "true" : "false") << '\n'
       << "common_reward_map=" << c.common_reward_map << '\n'
       << "common_reward_value=" << num(c.common_reward_value) << '\n'
       << "theorem_actions=" << c.theorem_actions << '\n'
       << "theorem_unsafe=" << join(c.theorem_unsafe, uint) << '\n'
       << "theorem_correctness=" << join(c.theorem_correctness, num) << '\n'
       << "theorem_rho=" << join(c.theorem_rho, num) << '\n'
       << "theorem_samples=" << c.theorem_samples << '\n';
    return os.str();
}

}  // namespace safeprior

#endif
