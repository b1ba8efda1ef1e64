#include <gtest/gtest.h>

#include <vector>

#include "safeprior/transfer.hpp"

using namespace safeprior;

namespace {

std::string map_path(const std::string& name) { return std::string(SAFEPRIOR_SOURCE_DIR) + "/maps/" + name; }

const std::vector<GridCoord> kCorners{{1, 1}, {22, 1}, {1, 19}, {22, 19}};

class TransferFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        map_ = new MapSpec(load_map(map_path("original.map")));
        TrainConfig cfg;
        sources_ = new std::vector<SourceTask>(train_sources(*map_, kCorners, cfg, RngStream(7)));
        RngStream rng(8);
        prior_ = new QTable(
            learn_prior_offpolicy(*map_, *sources_, BehaviorPolicy::uniform(), cfg, 0.35, rng).prior.q_p());
    }
    static void TearDownTestSuite() {
        delete prior_;
        delete sources_;
        delete map_;
    }

    static TransferSpec spec(std::size_t episodes) {
        TransferSpec s{*map_, kCorners};
        s.source_prior = *prior_;
        s.reuse_sources = *sources_;
        s.prior_cfg.episodes = episodes;
        for (std::uint64_t i = 0; i < 10; ++i) s.seeds.push_back(i);
        return s;
    }

    static MapSpec* map_;
    static std::vector<SourceTask>* sources_;
    static QTable* prior_;
};

MapSpec* TransferFixture::map_ = nullptr;
std::vector<SourceTask>* TransferFixture::sources_ = nullptr;
QTable* TransferFixture::prior_ = nullptr;

}  // namespace

TEST(InitModeNames, RoundTrip) {
    for (auto m : {InitMode::FromSource, InitMode::Scratch}) EXPECT_EQ(parse_init_mode(to_string(m)), m);
    EXPECT_THROW(parse_init_mode("warm"), ConfigError);
}

TEST(TransferSpecCheck, RejectsIncompleteSpecs) {
    auto map = parse_map("...\n..G\n");
    TransferSpec s{map, {{0, 0}, {1, 0}}};
    EXPECT_THROW(s.validate(), ConfigError);  // no seeds
    s.seeds = {0};
    EXPECT_THROW(s.validate(), ConfigError);  // from_source without a prior
    s.source_prior = QTable(5, kMoveCount);
    EXPECT_THROW(s.validate(), ConfigError);  // dimension mismatch
    s.source_prior = QTable(6, kMoveCount);
    EXPECT_NO_THROW(s.validate());
    s.init_mode = InitMode::Scratch;
    s.source_prior.reset();
    EXPECT_NO_THROW(s.validate());
    s.source_goals = {{0, 0}};
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(TransferSpecCheck, MissingVariantFileIsConfigError) {
    EXPECT_THROW(load_map(map_path("variant_z.map")), ConfigError);
}

TEST_F(TransferFixture, IdenticalMapFromSourceStartsLowerThanScratch) {
    auto cmp = compare_init_modes(spec(20));
    ASSERT_EQ(cmp.from_source.size(), 10u);
    EXPECT_LT(mean_window_td(cmp.from_source, 0, 1), mean_window_td(cmp.scratch, 0, 1));
    std::size_t not_higher = 0;
    for (std::size_t i = 0; i < 10; ++i)
        not_higher += cmp.from_source[i].log.mean_prior_td(0, 20) <= cmp.scratch[i].log.mean_prior_td(0, 20);
    EXPECT_EQ(not_higher, 10u);
}

TEST_F(TransferFixture, ScratchStartsFromZeroTable) {
    auto s = spec(0);
    s.init_mode = InitMode::Scratch;
    auto runs = run_transfer(s);
    for (std::size_t st = 0; st < map_->cell_count(); ++st)
        for (std::size_t a = 0; a < kMoveCount; ++a) EXPECT_EQ(runs[0].q_p.at(StateId{st}, ActionId{a}), 0.0);
    s.init_mode = InitMode::FromSource;
    runs = run_transfer(s);
    EXPECT_EQ(runs[0].q_p.at(StateId{25}, ActionId{0}), prior_->at(StateId{25}, ActionId{0}));
}

TEST_F(TransferFixture, DeterministicAndIndependentOfJobCount) {
    auto s = spec(5);
    s.seeds = {3, 4, 5};
    auto a = run_transfer(s);
    s.jobs = 3;
    auto b = run_transfer(s);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_EQ(a[i].log, b[i].log);
    }
    auto logs = logs_of(a);
    EXPECT_EQ(logs.size(), 3u);
}

TEST(TransferWindow, EmptyRunsRejected) {
    EXPECT_THROW(mean_window_td(std::vector<TransferRun>{}, 0, 1), ConfigError);
}
