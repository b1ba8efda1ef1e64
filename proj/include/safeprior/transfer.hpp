#ifndef SAFEPRIOR_TRANSFER_HPP
#define SAFEPRIOR_TRANSFER_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "gridworld.hpp"
#include "learner.hpp"
#include "parallel.hpp"
#include "prior.hpp"
#include "qtable.hpp"
#include "rng.hpp"

namespace safeprior {

enum class InitMode { FromSource, Scratch };

inline std::string to_string(InitMode m) { return m == InitMode::FromSource ? "from_source" : "scratch"; }

inline InitMode parse_init_mode(std::string_view s) {
    if (s == "from_source") return InitMode::FromSource;
    if (s == "scratch") return InitMode::Scratch;
    throw ConfigError("unknown init mode '" + std::string(s) + "' (expected from_source or scratch)");
}

/// Prior learning on a modified map, optionally starting from a prior learned
/// on the original one.
struct TransferSpec {
    TransferSpec(MapSpec map, std::vector<GridCoord> goals)
        : target_map(std::move(map)), source_goals(std::move(goals)) {}

    MapSpec target_map;
    std::vector<GridCoord> source_goals;
    InitMode init_mode = InitMode::FromSource;
    std::optional<QTable> source_prior;  // required for FromSource
    TrainConfig source_cfg;              // source-task retraining on the target map
    TrainConfig prior_cfg;               // off-policy prior learning
    double threshold_t = 0.35;
    PriorMode mode = PriorMode::AvoidUndesirable;
    std::vector<std::uint64_t> seeds;
    /// When set, every seed uses these tables instead of retraining the
    /// source tasks on the target map.
    std::optional<std::vector<SourceTask>> reuse_sources;
    std::size_t jobs = 1;

    void validate() const {
        if (seeds.empty()) throw ConfigError("transfer needs at least one seed");
        if (!reuse_sources && source_goals.size() < 2)
            throw ConfigError("transfer needs at least two source goals");
        if (reuse_sources)
            for (const auto& s : *reuse_sources)
                if (s.q.state_count() != target_map.cell_count())
                    throw ConfigError("reused source '" + s.label + "' does not match the target map");
        if (init_mode == InitMode::FromSource) {
            if (!source_prior) throw ConfigError("from_source initialisation needs a source prior");
            if (source_prior->state_count() != target_map.cell_count() ||
                source_prior->action_count() != kMoveCount)
                throw ConfigError("source prior dimensions do not match the target map");
        }
    }
};

struct TransferRun {
    std::uint64_t seed = 0;
    MetricsLog log;
    QTable q_p;
};

/// Source tables for one seed: retrained on the target map from substream 0
/// of the seed, unless the spec reuses fixed tables.
inline std::vector<SourceTask> transfer_sources(const TransferSpec& spec, std::uint64_t seed) {
    if (spec.reuse_sources) return *spec.reuse_sources;
    return train_sources(spec.target_map, spec.source_goals, spec.source_cfg,
                         RngStream(seed).substream(0));
}

/// Off-policy prior learning for one seed under a uniform behaviour policy
/// drawn from substream 1, so both init modes see the same trajectories.
inline TransferRun run_transfer_seed(const TransferSpec& spec, std::uint64_t seed,
                                     std::vector<SourceTask> sources) {
    RngStream behaviour = RngStream(seed).substream(1);
    const QTable* init = spec.init_mode == InitMode::FromSource ? &*spec.source_prior : nullptr;
    auto res = learn_prior_offpolicy(spec.target_map, std::move(sources), BehaviorPolicy::uniform(),
                                     spec.prior_cfg, spec.threshold_t, behaviour, spec.mode, init);
    return {seed, std::move(res.log), res.prior.q_p()};
}

inline std::vector<TransferRun> run_transfer(const TransferSpec& spec) {
    spec.validate();
    std::vector<TransferRun> out(spec.seeds.size());
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t i) {
        out[i] = run_transfer_seed(spec, spec.seeds[i], transfer_sources(spec, spec.seeds[i]));
    });
    return out;
}

struct TransferComparison {
    std::vector<TransferRun> from_source;
    std::vector<TransferRun> scratch;
};

/// Both init modes per seed, sharing the seed's source tables.
inline TransferComparison compare_init_modes(TransferSpec spec) {
    spec.init_mode = InitMode::FromSource;
    spec.validate();
    TransferComparison out;
    out.from_source.resize(spec.seeds.size());
    out.scratch.resize(spec.seeds.size());
    parallel_for(spec.seeds.size(), spec.jobs, [&](std::size_t i) {
        auto seed = spec.seeds[i];
        auto sources = transfer_sources(spec, seed);
        TransferSpec scratch = spec;
        scratch.init_mode = InitMode::Scratch;
        out.from_source[i] = run_transfer_seed(spec, seed, sources);
        out.scratch[i] = run_transfer_seed(scratch, seed, std::move(sources));
    });
    return out;
}

/// Mean over runs of each run's windowed mean |TD| in [begin, end).
inline double mean_window_td(std::span<const TransferRun> runs, std::size_t begin, std::size_t end) {
    if (runs.empty()) throw ConfigError("no transfer runs");
    double sum = 0.0;
    for (const auto& r : runs) sum += r.log.mean_prior_td(begin, end);
    return sum / static_cast<double>(runs.size());
}

inline std::vector<MetricsLog> logs_of(std::span<const TransferRun> runs) {
    std::vector<MetricsLog> out;
    for (const auto& r : runs) out.push_back(r.log);
    return out;
}

}  // namespace safeprior

#endif
