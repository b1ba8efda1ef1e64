// Command-line driver for the safety-prior experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "safeprior/pipeline.hpp"

namespace fs = std::filesystem;
using namespace safeprior;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;     // e.g. a source task failed its convergence check
constexpr int kExitConfig = 2;
constexpr int kExitTheorem = 3;

struct Overrides {
    std::string config_path;
    std::string map;
    std::string seeds;
    std::string out;
    std::size_t jobs = 0;
    std::optional<double> rho;
    std::optional<double> threshold_t;
    std::string mode;
    std::string sources;
    std::string goals;
    std::string prior;
    std::vector<std::string> sets;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "key=value configuration file");
    cmd->add_option("--map", o.map, "map file (default maps/original.map)");
    cmd->add_option("--seeds", o.seeds, "seed count n (seeds 0..n-1) or comma list (default 10)");
    cmd->add_option("--out", o.out, "output directory (default out)");
    cmd->add_option("--jobs", o.jobs, "parallel runs (default 1)");
    cmd->add_option("--rho", o.rho, "probability of consulting the prior on exploration (default 0.95)");
    cmd->add_option("--threshold-t", o.threshold_t, "selection threshold t (default 0.35)");
    cmd->add_option("--mode", o.mode, "prior mode: avoid or seek (default avoid)")
        ->check(CLI::IsMember({"avoid", "seek"}));
    cmd->add_option("--sources", o.sources, "comma-separated source Q-table files");
    cmd->add_option("--goals", o.goals, "source goals as x,y;x,y;... (default 1,1;22,1;1,19;22,19)");
    cmd->add_option("--prior", o.prior, "prior Q-table file");
    cmd->add_option("--set", o.sets, "any configuration key as key=value (repeatable)");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig c;
    if (!o.config_path.empty()) apply_config_file(c, o.config_path);
    if (!o.map.empty()) set_config_value(c, "map", o.map);
    if (!o.seeds.empty()) set_config_value(c, "seeds", o.seeds);
    if (!o.out.empty()) set_config_value(c, "out", o.out);
    if (o.jobs) c.jobs = o.jobs;
    if (o.rho) c.train.explore.rho = *o.rho;
    if (o.threshold_t) c.threshold_t = *o.threshold_t;
    if (!o.mode.empty()) set_config_value(c, "mode", o.mode);
    if (!o.sources.empty()) set_config_value(c, "sources", o.sources);
    if (!o.goals.empty()) set_config_value(c, "source_goals", o.goals);
    if (!o.prior.empty()) set_config_value(c, "prior", o.prior);
    for (const auto& kv : o.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
}

ExploreMode explore_mode_for(PriorMode m) {
    return m == PriorMode::AvoidUndesirable ? ExploreMode::AvoidUnsafe : ExploreMode::SeekDesirable;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

// ---------------------------------------------------------------------------

int save_sources(const fs::path& dir, const SourceSet& set) {
    fs::create_directories(dir);
    int status = kExitOk;
    for (std::size_t i = 0; i < set.tasks.size(); ++i) {
        const auto& t = set.tasks[i];
        save_qtable((dir / (t.label + ".qtable")).string(), t.q);
        save_metrics_csv((dir / (t.label + ".csv")).string(), set.logs[i]);
        log_line(t.label + (set.converged[i] ? ": converged" : ": NOT converged"));
        if (!set.converged[i]) status = kExitFailure;
    }
    return status;
}

std::vector<SourceTask> resolve_sources(const ExperimentConfig& c, const MapSpec& map) {
    std::vector<std::string> paths = c.source_paths;
    if (paths.empty())
        for (auto g : c.source_goals)
            paths.push_back((fs::path(c.out_dir) / "sources" / (goal_label(g) + ".qtable")).string());
    std::vector<SourceTask> out;
    for (const auto& p : paths) {
        if (!fs::exists(p)) throw ConfigError("source table " + p + " not found (run train-sources or pass --sources)");
        out.push_back(load_source(p, map));
    }
    if (out.size() < 2) throw ConfigError("learn-prior needs at least two source tables");
    return out;
}

void write_prior_outputs(const fs::path& dir, const PriorLearningResult& res, const PriorReport& rep) {
    save_prior((dir / "prior.qtable").string(), res.prior);
    save_metrics_csv((dir / "prior_td.csv").string(), res.log);
    std::ofstream os(dir / "prior_report.csv");
    os << "identified,false_positives,false_negatives,true_unsafe,correctness,selected,selected_unsafe,"
          "selected_precision,updates,selected_updates,guarded_scores\n";
    const auto& k = rep.evaluation.counts;
    os << k.identified << ',' << k.false_positives << ',' << k.false_negatives << ','
       << rep.evaluation.true_unsafe_total << ','
       << (rep.correctness_value ? format_double(*rep.correctness_value) : std::string("undefined")) << ','
       << rep.selected.size() << ',' << rep.selected_unsafe << ','
       << format_double(rep.selected_precision()) << ',' << res.prior.stats().updates << ','
       << res.prior.stats().selected << ',' << res.prior.stats().guarded_scores << '\n';
}

void warn_threshold(const ExperimentConfig& c, const MapSpec& map) {
    double r_max = std::max(kGoalReward, map.common_reward_value());
    if (threshold_out_of_range(c.threshold_t, kCollisionReward, r_max))
        log_line("warning: threshold_t " + format_double(c.threshold_t) +
                 " exceeds the admissible range; no pair can be selected and r_P is 0 everywhere");
}

void log_prior(const PriorReport& rep) {
    log_line("selected pairs " + std::to_string(rep.selected.size()) + ", collision actions " +
             std::to_string(rep.selected_unsafe) + " (" + fmt(rep.selected_precision()) + ")");
    log_line("correctness " + (rep.correctness_value ? fmt(*rep.correctness_value) : std::string("undefined")));
}

void write_target_outputs(const fs::path& dir, std::span<const TargetPair> pairs) {
    fs::create_directories(dir / "runs");
    std::vector<MetricsLog> base, prior;
    for (const auto& p : pairs) {
        auto tag = "_seed" + std::to_string(p.seed) + ".csv";
        save_metrics_csv((dir / "runs" / ("baseline" + tag)).string(), p.baseline.log);
        save_metrics_csv((dir / "runs" / ("with_prior" + tag)).string(), p.with_prior.log);
        base.push_back(p.baseline.log);
        prior.push_back(p.with_prior.log);
    }
    std::ofstream a(dir / "aggregate_baseline.csv"), b(dir / "aggregate_with_prior.csv");
    write_aggregate_csv(a, aggregate_runs(base));
    write_aggregate_csv(b, aggregate_runs(prior));
}

std::string target_summary_text(std::span<const TargetPair> pairs) {
    auto s = summarize_targets(pairs);
    std::ostringstream os;
    os << "seed,baseline_collisions_200,with_prior_collisions_200,baseline_collisions_2000,"
          "with_prior_collisions_2000,baseline_return_first100,with_prior_return_first100,"
          "baseline_success,with_prior_success\n";
    for (const auto& p : pairs)
        os << p.seed << ',' << p.baseline.log.total_collisions(200) << ','
           << p.with_prior.log.total_collisions(200) << ',' << p.baseline.log.total_collisions(2000)
           << ',' << p.with_prior.log.total_collisions(2000) << ','
           << fmt(p.baseline.log.mean_return(0, 100)) << ',' << fmt(p.with_prior.log.mean_return(0, 100))
           << ',' << fmt(p.baseline_success) << ',' << fmt(p.with_prior_success) << '\n';
    os << "\npairs with fewer collisions with prior: " << s.lower_at_200 << "/" << s.pairs
       << " at episode 200, " << s.lower_at_2000 << "/" << s.pairs << " at episode 2000\n"
       << "mean return, first 100 episodes: baseline " << fmt(s.baseline_return_first100)
       << ", with prior " << fmt(s.with_prior_return_first100) << '\n'
       << "mean return, first 200 episodes: baseline " << fmt(s.baseline_return_first200)
       << ", with prior " << fmt(s.with_prior_return_first200) << '\n'
       << "greedy success (pooled): baseline " << fmt(s.baseline_success) << ", with prior "
       << fmt(s.with_prior_success) << " (lowest seed " << fmt(s.min_with_prior_success) << ")\n";
    return os.str();
}

QTable resolve_prior(const ExperimentConfig& c, const MapSpec& map) {
    std::string path = c.prior_path.empty() ? (fs::path(c.out_dir) / "prior.qtable").string() : c.prior_path;
    if (!fs::exists(path)) throw ConfigError("prior file " + path + " not found (run learn-prior or pass --prior)");
    QTable q = load_qtable(path);
    if (q.state_count() != map.cell_count() || q.action_count() != kMoveCount)
        throw ConfigError("prior " + path + " does not match the map");
    return q;
}

// ---------------------------------------------------------------------------

int cmd_train_sources(const ExperimentConfig& c) {
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    MapSpec map = load_target_map(c);
    auto set = build_sources(c, map);
    return save_sources(dir / "sources", set);
}

int cmd_learn_prior(const ExperimentConfig& c) {
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    MapSpec map = load_target_map(c);
    warn_threshold(c, map);
    auto sources = resolve_sources(c, map);
    auto res = build_prior(c, map, sources);
    auto rep = report_prior(res.prior.q_p(), sources, map, c.threshold_t, c.prior_mode);
    write_prior_outputs(dir, res, rep);
    log_prior(rep);
    return kExitOk;
}

int cmd_train_target(const ExperimentConfig& c) {
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    MapSpec map = load_target_map(c);
    QTable q_p = resolve_prior(c, map);
    auto pairs = run_target_pairs(map, q_p, c.train, explore_mode_for(c.prior_mode), c.seeds, c.jobs);
    write_target_outputs(dir, pairs);
    auto text = target_summary_text(pairs);
    write_text_file(dir / "summary.txt", text);
    std::cout << text;
    return kExitOk;
}

int cmd_verify_theorem(const ExperimentConfig& c) {
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    auto rows = verify_theorem_grid(c, RngStream(c.pipeline_seed));
    std::ofstream os(dir / "theorem.csv");
    write_theorem_csv(os, rows);
    std::size_t passed = 0;
    for (const auto& r : rows) {
        passed += r.pass ? 1 : 0;
        if (!r.pass)
            log_line("mismatch at |A|=" + std::to_string(r.params.action_count) +
                     " U=" + std::to_string(r.params.unsafe_count) + " C=" + fmt(r.params.correctness, 2) +
                     " rho=" + fmt(r.params.rho, 2) + ": closed form " + fmt(r.closed_form) +
                     ", simulated " + fmt(r.mc.estimate) +
                     (r.params.feasible() ? "" : " (U(1-C) exceeds |A|-U: closed form is not a probability ratio)"));
    }
    std::cout << passed << "/" << rows.size() << " grid points within 3 standard errors\n";
    return passed == rows.size() ? kExitOk : kExitTheorem;
}

int cmd_transfer(const ExperimentConfig& c) {
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    MapSpec original = load_target_map(c);
    QTable source_prior = [&] {
        if (!c.prior_path.empty()) return resolve_prior(c, original);
        log_line("no --prior given: learning the source prior on " + c.map_path);
        auto set = build_sources(c, original);
        if (!set.all_converged()) log_line("warning: a source task did not pass its convergence check");
        return build_prior(c, original, set.tasks).prior.q_p();
    }();

    fs::create_directories(dir / "transfer");
    std::ofstream summary(dir / "transfer" / "summary.csv");
    summary << "variant,init_mode,first100_mean_abs_td,last100_mean_abs_td,decreasing\n";
    for (const auto& path : c.variant_paths) {
        std::string name = fs::path(path).stem().string();
        TransferSpec spec{load_map(path), c.source_goals};
        if (c.target_goal) spec.target_map = spec.target_map.with_goal(*c.target_goal);
        spec.source_prior = source_prior;
        spec.source_cfg = c.source_config();
        spec.prior_cfg = c.prior_config();
        spec.threshold_t = c.threshold_t;
        spec.mode = c.prior_mode;
        spec.seeds = c.seeds;
        spec.jobs = c.jobs;
        if (!c.transfer_retrain_sources) spec.reuse_sources = build_sources(c, spec.target_map).tasks;
        auto cmp = compare_init_modes(spec);
        const std::size_t k = c.prior_episodes;
        const std::size_t w = std::min<std::size_t>(100, k);
        for (auto [mode, runs] : {std::pair{InitMode::FromSource, &cmp.from_source},
                                  std::pair{InitMode::Scratch, &cmp.scratch}}) {
            auto logs = logs_of(*runs);
            std::ofstream trace(dir / "transfer" / (name + "_" + to_string(mode) + "_td.csv"));
            write_td_trace_csv(trace, td_error_trace(logs));
            double first = mean_window_td(*runs, 0, w), last = mean_window_td(*runs, k - w, k);
            summary << name << ',' << to_string(mode) << ',' << format_double(first) << ','
                    << format_double(last) << ',' << (last < first ? 1 : 0) << '\n';
            log_line(name + " " + to_string(mode) + ": first " + fmt(first, 5) + ", last " + fmt(last, 5));
        }
    }
    return kExitOk;
}

int cmd_common_reward(ExperimentConfig c) {
    c.prior_mode = PriorMode::SeekDesirable;
    auto dir = prepare_out_dir(c.out_dir);
    echo_config(dir, c);
    MapSpec map = load_common_reward_map(c);
    GridCoord com = map.coord_of(*map.common_reward_state());
    warn_threshold(c, map);

    auto set = build_sources(c, map);
    int status = save_sources(dir / "sources", set);
    auto res = build_prior(c, map, set.tasks);
    auto rep = report_prior(res.prior.q_p(), set.tasks, map, c.threshold_t, c.prior_mode);
    write_prior_outputs(dir, res, rep);

    std::ofstream sel(dir / "selected_pairs.csv");
    sel << "x,y,action,approaches_common_reward\n";
    for (const auto& p : rep.selected) {
        GridCoord g = map.coord_of(p.state);
        auto d = move_delta(p.action);
        bool closer = manhattan({g.x + d[0], g.y + d[1]}, com) < manhattan(g, com);
        sel << g.x << ',' << g.y << ',' << move_name(p.action) << ',' << (closer ? 1 : 0) << '\n';
    }
    std::size_t approaching = count_approaching(rep.selected, map, com);

    auto pairs = run_target_pairs(map, res.prior.q_p(), c.train, ExploreMode::SeekDesirable, c.seeds, c.jobs);
    write_target_outputs(dir, pairs);
    std::ostringstream text;
    text << "selected desirable pairs " << rep.selected.size() << ", moving towards the common-reward cell "
         << approaching << "\n\n"
         << target_summary_text(pairs);
    write_text_file(dir / "summary.txt", text.str());
    std::cout << text.str();
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safety priors from solved tasks: source training, prior learning, biased exploration"};
    app.require_subcommand(1);
    Overrides o;
    struct Command {
        const char* name;
        const char* help;
    };
    const Command commands[] = {
        {"train-sources", "train one Q-table per source goal"},
        {"learn-prior", "learn the prior Q_P from source tables"},
        {"train-target", "paired target-task runs with and without the prior"},
        {"verify-theorem", "closed-form vs simulated unsafe-exploration ratio grid"},
        {"transfer", "prior learning on variant maps, initialised vs from scratch"},
        {"common-reward", "desirable-action prior on the common-reward map"},
    };
    for (const auto& cmd : commands) add_common_flags(app.add_subcommand(cmd.name, cmd.help), o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        std::string name = app.get_subcommands().front()->get_name();
        if (name == "common-reward" && !o.map.empty()) {
            o.sets.insert(o.sets.begin(), "common_reward_map=" + o.map);
            o.map.clear();
        }
        ExperimentConfig c = resolve(o);
        if (name == "train-sources") return cmd_train_sources(c);
        if (name == "learn-prior") return cmd_learn_prior(c);
        if (name == "train-target") return cmd_train_target(c);
        if (name == "verify-theorem") return cmd_verify_theorem(c);
        if (name == "transfer") return cmd_transfer(c);
        if (name == "common-reward") return cmd_common_reward(c);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
