#ifndef SAFEPRIOR_GRIDWORLD_HPP
#define SAFEPRIOR_GRIDWORLD_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "qtable.hpp"
#include "rng.hpp"

namespace safeprior {

enum class CellKind { Free, Obstacle, Goal, CommonReward };

/// Grid actions, in action-index order.
enum class Move : std::size_t { Up = 0, Right = 1, Down = 2, Left = 3 };

inline constexpr std::size_t kMoveCount = 4;

inline constexpr double kCollisionReward = -1.0;
inline constexpr double kGoalReward = 1.0;
inline constexpr double kStepReward = -0.1;
inline constexpr double kDefaultNoise = 0.2;

inline constexpr ActionId action_of(Move m) { return ActionId{static_cast<std::size_t>(m)}; }

inline constexpr std::array<int, 2> move_delta(ActionId a) {
    constexpr std::array<std::array<int, 2>, kMoveCount> deltas{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
    return deltas[a.index];
}

inline std::string_view move_name(ActionId a) {
    constexpr std::array<std::string_view, kMoveCount> names{"up", "right", "down", "left"};
    return a.index < kMoveCount ? names[a.index] : "invalid";
}

/// Cell coordinate; y grows downwards (row 0 is the first line of the map).
struct GridCoord {
    int x = 0;
    int y = 0;
    friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

class MapSpec {
public:
    MapSpec(std::size_t width, std::size_t height, std::vector<CellKind> cells,
            double common_reward_value = 0.0)
        : width_(width), height_(height), cells_(std::move(cells)),
          common_reward_(common_reward_value) {
        if (width == 0 || height == 0) throw ConfigError("map dimensions must be positive");
        if (cells_.size() != width * height) throw ConfigError("map cell count mismatch");
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i] == CellKind::Goal) {
                if (goal_) throw ConfigError("map has more than one goal cell");
                goal_ = StateId{i};
            }
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }
    double common_reward_value() const noexcept { return common_reward_; }
    std::optional<StateId> goal() const noexcept { return goal_; }

    bool in_bounds(GridCoord c) const noexcept {
        return c.x >= 0 && c.y >= 0 && static_cast<std::size_t>(c.x) < width_ &&
               static_cast<std::size_t>(c.y) < height_;
    }

    StateId state_of(GridCoord c) const {
        if (!in_bounds(c)) throw std::out_of_range("cell outside map");
        return StateId{static_cast<std::size_t>(c.y) * width_ + static_cast<std::size_t>(c.x)};
    }

    GridCoord coord_of(StateId s) const {
        if (s.index >= cells_.size()) throw std::out_of_range("state outside map");
        return {static_cast<int>(s.index % width_), static_cast<int>(s.index / width_)};
    }

    CellKind kind(StateId s) const { return cells_.at(s.index); }
    CellKind kind(GridCoord c) const { return cells_.at(state_of(c).index); }

    /// Obstacle or outside the grid.
    bool blocked(GridCoord c) const { return !in_bounds(c) || kind(c) == CellKind::Obstacle; }

    /// States an agent can occupy before termination: anything but obstacles and the goal.
    std::vector<StateId> decision_states() const {
        std::vector<StateId> out;
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i] == CellKind::Free || cells_[i] == CellKind::CommonReward)
                out.push_back(StateId{i});
        return out;
    }

    /// Free, non-goal cells; the support of reset().
    std::vector<StateId> start_states() const {
        std::vector<StateId> out;
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i] == CellKind::Free) out.push_back(StateId{i});
        return out;
    }

    std::optional<StateId> common_reward_state() const {
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i] == CellKind::CommonReward) return StateId{i};
        return std::nullopt;
    }

    /// Copy with the goal moved to c. The previous goal becomes Free.
    MapSpec with_goal(GridCoord c) const {
        if (!in_bounds(c)) throw ConfigError("goal outside map bounds");
        if (kind(c) == CellKind::Obstacle)
            throw ConfigError("goal placed on obstacle at (" + std::to_string(c.x) + "," +
                              std::to_string(c.y) + ")");
        auto cells = cells_;
        if (goal_) cells[goal_->index] = CellKind::Free;
        cells[state_of(c).index] = CellKind::Goal;
        return MapSpec(width_, height_, std::move(cells), common_reward_);
    }

    MapSpec with_common_reward(double value) const {
        return MapSpec(width_, height_, cells_, value);
    }

    std::string to_text() const {
        std::string out;
        for (std::size_t y = 0; y < height_; ++y) {
            for (std::size_t x = 0; x < width_; ++x) {
                switch (cells_[y * width_ + x]) {
                    case CellKind::Free: out += '.'; break;
                    case CellKind::Obstacle: out += '#'; break;
                    case CellKind::Goal: out += 'G'; break;
                    case CellKind::CommonReward: out += 'C'; break;
                }
            }
            out += '\n';
        }
        return out;
    }

private:
    std::size_t width_;
    std::size_t height_;
    std::vector<CellKind> cells_;
    double common_reward_;
    std::optional<StateId> goal_;
};

/// Decode an ASCII block: '#' obstacle, '.' free, 'G' goal, 'C' common reward.
/// A trailing newline and '\r' line endings are tolerated.
inline MapSpec parse_map(std::string_view text, bool require_goal = true) {
    std::vector<std::string_view> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view row = text.substr(start, end - start);
        if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
        rows.push_back(row);
        start = end + 1;
    }
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    if (rows.empty()) throw ParseError("empty map", 1, 1);

    std::size_t width = rows.front().size();
    if (width == 0) throw ParseError("empty map row", 1, 1);
    std::vector<CellKind> cells;
    cells.reserve(width * rows.size());
    std::size_t goals = 0;
    for (std::size_t y = 0; y < rows.size(); ++y) {
        if (rows[y].size() != width)
            throw ParseError("ragged row: expected " + std::to_string(width) + " columns, got " +
                                 std::to_string(rows[y].size()),
                             y + 1, std::min(rows[y].size(), width) + 1);
        for (std::size_t x = 0; x < width; ++x) {
            switch (rows[y][x]) {
                case '.': cells.push_back(CellKind::Free); break;
                case '#': cells.push_back(CellKind::Obstacle); break;
                case 'G':
                    cells.push_back(CellKind::Goal);
                    if (++goals > 1) throw ParseError("more than one goal cell", y + 1, x + 1);
                    break;
                case 'C': cells.push_back(CellKind::CommonReward); break;
                default:
                    throw ParseError(std::string("unknown map character '") + rows[y][x] + "'",
                                     y + 1, x + 1);
            }
        }
    }
    if (require_goal && goals == 0) throw ParseError("map has no goal cell", rows.size(), 1);
    return MapSpec(width, rows.size(), std::move(cells));
}

inline MapSpec load_map(const std::string& path, bool require_goal = true) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open map file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_map(buf.str(), require_goal);
}

/// Continuous position in map units. Cell (cx, cy) covers [cx, cx+1) x [cy, cy+1).
struct AgentPose {
    double x = 0.5;
    double y = 0.5;
    friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

inline GridCoord containing_cell(const AgentPose& p) {
    return {static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))};
}

inline AgentPose cell_center(GridCoord c) { return {c.x + 0.5, c.y + 0.5}; }

struct StepOutcome {
    StateId next_state;
    double reward = 0.0;
    bool terminal = false;
    bool collided = false;
};

/// Uniform Free non-goal cell.
inline StateId reset(const MapSpec& map, AgentPose& pose, RngStream& rng) {
    auto starts = map.start_states();
    if (starts.empty()) throw ConfigError("map has no free non-goal cell to start from");
    StateId s = starts[rng.below(starts.size())];
    pose = cell_center(map.coord_of(s));
    return s;
}

/// Move one unit along the action's axis, then perturb both coordinates by
/// independent U(-noise, noise) draws. Obstacles and the map border reject the
/// move (pose unchanged, reward -1); the goal terminates with +1.
inline StepOutcome step(const MapSpec& map, AgentPose& pose, ActionId a, RngStream& rng,
                        double noise = kDefaultNoise) {
    if (a.index >= kMoveCount) throw std::out_of_range("invalid grid action");
    auto d = move_delta(a);
    AgentPose candidate{pose.x + d[0], pose.y + d[1]};
    if (noise > 0.0) {
        candidate.x += rng.uniform(-noise, noise);
        candidate.y += rng.uniform(-noise, noise);
    }
    GridCoord cell = containing_cell(candidate);
    if (map.blocked(cell)) {
        return {map.state_of(containing_cell(pose)), kCollisionReward, false, true};
    }
    pose = candidate;
    StateId next = map.state_of(cell);
    switch (map.kind(next)) {
        case CellKind::Goal: return {next, kGoalReward, true, false};
        case CellKind::CommonReward: return {next, map.common_reward_value(), false, false};
        default: return {next, kStepReward, false, false};
    }
}

/// Actions whose noise-free target cell is an obstacle or off the map.
inline std::vector<ActionId> true_unsafe_actions(const MapSpec& map, StateId s) {
    GridCoord c = map.coord_of(s);
    std::vector<ActionId> out;
    for (std::size_t a = 0; a < kMoveCount; ++a) {
        auto d = move_delta(ActionId{a});
        if (map.blocked({c.x + d[0], c.y + d[1]})) out.push_back(ActionId{a});
    }
    return out;
}

/// Stateful wrapper pairing a map with one agent's pose.
class GridEnv {
public:
    explicit GridEnv(const MapSpec& map, double noise = kDefaultNoise) : map_(&map), noise_(noise) {}

    const MapSpec& map() const noexcept { return *map_; }
    double noise() const noexcept { return noise_; }
    const AgentPose& pose() const noexcept { return pose_; }
    StateId state() const { return map_->state_of(containing_cell(pose_)); }

    StateId reset(RngStream& rng) { return safeprior::reset(*map_, pose_, rng); }

    void place(StateId s) { pose_ = cell_center(map_->coord_of(s)); }

    StepOutcome step(ActionId a, RngStream& rng) {
        return safeprior::step(*map_, pose_, a, rng, noise_);
    }

private:
    const MapSpec* map_;
    double noise_;
    AgentPose pose_;
};

}  // namespace safeprior

#endif
