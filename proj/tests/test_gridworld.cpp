#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "safeprior/gridworld.hpp"

using namespace safeprior;

namespace {

std::string map_path(const std::string& name) { return std::string(SAFEPRIOR_SOURCE_DIR) + "/maps/" + name; }

std::size_t parse_error_line(std::string_view text) {
    try {
        parse_map(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST(MapParse, DecodesCellKinds) {
    auto m = parse_map("#.G\n.C.\n");
    EXPECT_EQ(m.width(), 3u);
    EXPECT_EQ(m.height(), 2u);
    EXPECT_EQ(m.kind(GridCoord{0, 0}), CellKind::Obstacle);
    EXPECT_EQ(m.kind(GridCoord{1, 0}), CellKind::Free);
    EXPECT_EQ(m.kind(GridCoord{2, 0}), CellKind::Goal);
    EXPECT_EQ(m.kind(GridCoord{1, 1}), CellKind::CommonReward);
    EXPECT_EQ(*m.goal(), m.state_of({2, 0}));
    EXPECT_EQ(*m.common_reward_state(), m.state_of({1, 1}));
    EXPECT_EQ(m.to_text(), "#.G\n.C.\n");
}

TEST(MapParse, ToleratesCrLfAndMissingFinalNewline) {
    auto m = parse_map("..\r\n.G");
    EXPECT_EQ(m.width(), 2u);
    EXPECT_EQ(m.height(), 2u);
}

TEST(MapParse, RaggedRowReportsItsLine) { EXPECT_EQ(parse_error_line("...\n..G\n..\n"), 3u); }

TEST(MapParse, UnknownCharacterReportsPosition) {
    try {
        parse_map("..G\n.x.\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.column(), 2u);
    }
}

TEST(MapParse, GoalCountChecked) {
    EXPECT_NE(parse_error_line("...\n...\n"), 0u);
    EXPECT_EQ(parse_error_line("G..\n..G\n"), 2u);
    EXPECT_NO_THROW(parse_map("...\n", false));
    EXPECT_NE(parse_error_line(""), 0u);
}

TEST(MapSpecs, OriginalLayout) {
    auto m = load_map(map_path("original.map"));
    EXPECT_EQ(m.width(), 24u);
    EXPECT_EQ(m.height(), 21u);
    EXPECT_EQ(m.coord_of(*m.goal()), (GridCoord{12, 10}));
    for (auto g : {GridCoord{1, 1}, GridCoord{22, 1}, GridCoord{1, 19}, GridCoord{22, 19}})
        EXPECT_EQ(m.kind(g), CellKind::Free);
}

TEST(MapSpecs, VariantsShareShapeAndGoalCells) {
    auto orig = load_map(map_path("original.map"));
    for (const char* v : {"variant_a.map", "variant_b.map", "variant_c.map", "variant_d.map"}) {
        auto m = load_map(map_path(v));
        EXPECT_EQ(m.width(), orig.width()) << v;
        EXPECT_EQ(m.height(), orig.height()) << v;
        EXPECT_NE(m.to_text(), orig.to_text()) << v;
        for (auto g : {GridCoord{1, 1}, GridCoord{22, 1}, GridCoord{1, 19}, GridCoord{22, 19}, GridCoord{12, 10}})
            EXPECT_NE(m.kind(g), CellKind::Obstacle) << v;
    }
    auto cr = load_map(map_path("common_reward.map"));
    ASSERT_TRUE(cr.common_reward_state());
}

TEST(MapSpecs, MissingFileIsConfigError) { EXPECT_THROW(load_map(map_path("nope.map")), ConfigError); }

TEST(MapSpecs, GoalRelocation) {
    auto m = parse_map("#.G\n...\n");
    auto moved = m.with_goal({0, 1});
    EXPECT_EQ(moved.kind(GridCoord{2, 0}), CellKind::Free);
    EXPECT_EQ(moved.coord_of(*moved.goal()), (GridCoord{0, 1}));
    EXPECT_THROW(m.with_goal({0, 0}), ConfigError);
    EXPECT_THROW(m.with_goal({5, 0}), ConfigError);
}

TEST(Step, NoiseFreeMovesAndRewards) {
    auto m = parse_map("...\n.#G\n");
    RngStream rng(1);
    AgentPose p = cell_center({0, 0});
    auto o = step(m, p, action_of(Move::Right), rng, 0.0);
    EXPECT_EQ(o.next_state, m.state_of({1, 0}));
    EXPECT_DOUBLE_EQ(o.reward, kStepReward);
    EXPECT_FALSE(o.terminal);
    EXPECT_FALSE(o.collided);

    o = step(m, p, action_of(Move::Down), rng, 0.0);  // into the obstacle
    EXPECT_EQ(o.next_state, m.state_of({1, 0}));
    EXPECT_DOUBLE_EQ(o.reward, kCollisionReward);
    EXPECT_TRUE(o.collided);
    EXPECT_EQ(p, cell_center({1, 0}));

    o = step(m, p, action_of(Move::Up), rng, 0.0);  // off the map
    EXPECT_TRUE(o.collided);
    EXPECT_EQ(p, cell_center({1, 0}));

    step(m, p, action_of(Move::Right), rng, 0.0);
    o = step(m, p, action_of(Move::Down), rng, 0.0);
    EXPECT_EQ(o.next_state, *m.goal());
    EXPECT_DOUBLE_EQ(o.reward, kGoalReward);
    EXPECT_TRUE(o.terminal);
}

TEST(Step, CommonRewardCellPaysItsValue) {
    auto m = parse_map(".C\n.G\n").with_common_reward(0.2);
    RngStream rng(1);
    AgentPose p = cell_center({0, 0});
    auto o = step(m, p, action_of(Move::Right), rng, 0.0);
    EXPECT_DOUBLE_EQ(o.reward, 0.2);
    EXPECT_FALSE(o.terminal);
}

TEST(Step, NoisePerturbsWithinBounds) {
    auto m = parse_map(".....\n.....\n.....\n....G\n");
    RngStream rng(9);
    for (int i = 0; i < 1000; ++i) {
        AgentPose p = cell_center({1, 1});
        step(m, p, action_of(Move::Right), rng, 0.2);
        EXPECT_LE(std::abs(p.x - 2.5), 0.2 + 1e-12);
        EXPECT_LE(std::abs(p.y - 1.5), 0.2 + 1e-12);
    }
}

TEST(Step, AgentNeverOccupiesBlockedCell) {
    auto m = load_map(map_path("original.map"));
    RngStream rng(17);
    GridEnv env(m, 0.2);
    for (int ep = 0; ep < 50; ++ep) {
        env.reset(rng);
        for (int t = 0; t < 300; ++t) {
            auto o = env.step(ActionId{rng.below(kMoveCount)}, rng);
            ASSERT_NE(m.kind(env.state()), CellKind::Obstacle);
            ASSERT_EQ(o.next_state, env.state());
            if (o.terminal) break;
        }
    }
}

TEST(Step, SameSeedSameTrajectory) {
    auto m = load_map(map_path("original.map"));
    RngStream a(4), b(4);
    GridEnv ea(m), eb(m);
    ea.reset(a);
    eb.reset(b);
    for (int t = 0; t < 500; ++t) {
        auto act = ActionId{static_cast<std::size_t>(t % 4)};
        auto oa = ea.step(act, a);
        auto ob = eb.step(act, b);
        ASSERT_EQ(ea.pose(), eb.pose());
        ASSERT_EQ(oa.reward, ob.reward);
    }
}

TEST(Reset, UniformOverFreeNonGoalCells) {
    auto m = parse_map("..G\n");
    RngStream rng(123);
    AgentPose p;
    const int n = 100000;
    int first = 0;
    for (int i = 0; i < n; ++i) {
        auto s = reset(m, p, rng);
        ASSERT_NE(s, *m.goal());
        if (s == m.state_of({0, 0})) ++first;
    }
    EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 0.01);
}

TEST(Reset, NoStartCellIsConfigError) {
    auto m = parse_map("#G\n");
    RngStream rng(1);
    AgentPose p;
    EXPECT_THROW(reset(m, p, rng), ConfigError);
}

TEST(UnsafeActions, CornerAndObstacleNeighbours) {
    auto m = parse_map("...\n.#.\n..G\n");
    auto corner = true_unsafe_actions(m, m.state_of({0, 0}));
    ASSERT_EQ(corner.size(), 2u);
    EXPECT_EQ(corner[0], action_of(Move::Up));
    EXPECT_EQ(corner[1], action_of(Move::Left));
    auto beside = true_unsafe_actions(m, m.state_of({0, 1}));
    ASSERT_EQ(beside.size(), 2u);
    EXPECT_EQ(beside[0], action_of(Move::Right));
    EXPECT_EQ(beside[1], action_of(Move::Left));
}

TEST(MapParse, MinimalAndTwoByTwo) {
    auto g = parse_map("G");
    EXPECT_EQ(g.cell_count(), 1u);
    EXPECT_EQ(g.kind(GridCoord{0, 0}), CellKind::Goal);
    auto m = parse_map(".#\nG.");
    EXPECT_EQ(m.cell_count(), 4u);
    EXPECT_EQ(m.kind(GridCoord{1, 0}), CellKind::Obstacle);
    EXPECT_EQ(m.coord_of(*m.goal()), (GridCoord{0, 1}));
}

TEST(MapSpecs, ShippedMapHas504Cells) { EXPECT_EQ(load_map(map_path("original.map")).cell_count(), 504u); }

TEST(Reset, SingleFreeCellAlwaysChosen) {
    auto m = parse_map("#.#\n#G#\n");
    RngStream rng(5);
    AgentPose p;
    for (int i = 0; i < 100; ++i) EXPECT_EQ(reset(m, p, rng), m.state_of({1, 0}));
}

TEST(UnsafeActions, EnclosedPocketAndOpenCell) {
    auto pocket = parse_map("###\n#.#\n###\nG..\n");
    EXPECT_EQ(true_unsafe_actions(pocket, pocket.state_of({1, 1})).size(), 4u);
    auto open = parse_map("...\n...\n..G\n");
    EXPECT_TRUE(true_unsafe_actions(open, open.state_of({1, 1})).empty());
}
