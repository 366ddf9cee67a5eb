// Command-line front end: scenario presets, the exact solver, agent
// training, fixed-policy simulation, and the class-3 reward sweep.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slicesim/config.hpp"
#include "slicesim/experiments.hpp"

namespace {

using namespace slicesim;

struct CommonOpts {
    std::string config_path;
    std::string preset_name;
    std::string seeds;
    std::string out_dir;
    std::string mode;
    std::string agent;
    std::int64_t episodes = -1;
    std::int64_t horizon = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Flat key-value config file");
    cmd->add_option("--preset", opts.preset_name, "Scenario preset: small, medium, large");
    cmd->add_option("--seed", opts.seeds, "Seed list, e.g. 1 or 1,2,3");
    cmd->add_option("--episodes", opts.episodes, "Training episodes override");
    cmd->add_option("--horizon", opts.horizon, "Evaluation epochs override");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--mode", opts.mode, "Simulation mode: uniformized or continuous");
    cmd->add_option("--agent", opts.agent, "Agent: greedy, tabular, double, dueling");
}

cli::ExperimentConfig resolve_config(const CommonOpts& opts) {
    if (!opts.config_path.empty() && !opts.preset_name.empty())
        throw ConfigError("pass either --config or --preset, not both");
    cli::ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = cli::parse_config_file(opts.config_path);
    else if (!opts.preset_name.empty()) cfg = cli::preset(opts.preset_name);
    else throw ConfigError("one of --config or --preset is required");

    if (!opts.seeds.empty()) cfg.seeds = cli::detail::to_seeds("--seed", opts.seeds);
    if (opts.episodes >= 0) cfg.train.episodes = opts.episodes;
    if (opts.horizon >= 0) cfg.horizon = opts.horizon;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.mode.empty()) {
        if (opts.mode == "uniformized") cfg.mode = sim::Mode::Uniformized;
        else if (opts.mode == "continuous") cfg.mode = sim::Mode::Continuous;
        else throw ConfigError("--mode must be uniformized or continuous");
    }
    if (!opts.agent.empty()) cfg.agent = agents::agent_kind_from(opts.agent);
    cfg.validate();
    return cfg;
}

std::vector<double> parse_r3_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    if (out.empty()) throw ConfigError("--r3 needs at least one value");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Network-slicing admission control: exact average-reward solver and RL agents"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string policy_arg;
    std::string checkpoint_arg;
    std::string r3_arg = "1,2,3,4,5,6";

    CLI::App* solve = app.add_subcommand("solve", "Exact optimal policy via relative value iteration");
    add_common(solve, opts);

    CLI::App* train = app.add_subcommand("train", "Train the configured agent, one run per seed");
    add_common(train, opts);

    CLI::App* simulate = app.add_subcommand("simulate", "Evaluate a fixed policy or checkpoint");
    add_common(simulate, opts);
    simulate->add_option("--policy", policy_arg, "greedy, reject, or a policy CSV path");
    simulate->add_option("--checkpoint", checkpoint_arg, "Agent checkpoint JSON path");

    CLI::App* sweep = app.add_subcommand("sweep-reward", "Vary the last class's reward and compare agents");
    add_common(sweep, opts);
    sweep->add_option("--r3", r3_arg, "Comma-separated reward values (default 1..6)");

    CLI::App* dump = app.add_subcommand("preset-dump", "Print a preset as a config file");
    add_common(dump, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (solve->parsed()) {
            const auto cfg = resolve_config(opts);
            const auto out = cli::cmd_solve(cfg);
            std::printf("gain: %.10g reward/hour (residual span %.3g, %zu iterations)\n", out.solution.gain,
                        out.solution.residual_span, out.solution.iterations);
            std::printf("policy: %s\n", out.policy_path.string().c_str());
        } else if (train->parsed()) {
            const auto cfg = resolve_config(opts);
            const auto out = cli::cmd_train(cfg);
            for (std::size_t i = 0; i < out.per_seed.size(); ++i) {
                const auto& r = out.per_seed[i];
                std::printf("seed %llu: training avg reward %.6g/hour over %lld epochs\n",
                            static_cast<unsigned long long>(cfg.seeds[i]), r.metrics.average_reward(),
                            static_cast<long long>(r.metrics.epochs));
            }
            std::printf("curves: %s\n", out.mean_curve_path.string().c_str());
        } else if (simulate->parsed()) {
            const auto cfg = resolve_config(opts);
            if (policy_arg.empty() == checkpoint_arg.empty())
                throw ConfigError("simulate needs exactly one of --policy or --checkpoint");
            cli::PolicySource source = cli::BuiltinGreedy{};
            if (!checkpoint_arg.empty()) source = cli::CheckpointFile{checkpoint_arg};
            else if (policy_arg == "greedy") source = cli::BuiltinGreedy{};
            else if (policy_arg == "reject") source = cli::BuiltinReject{};
            else source = cli::PolicyFile{policy_arg};
            const auto out = cli::cmd_simulate(cfg, source);
            std::printf("average reward: %.10g/hour over %lld epochs (%.6g hours)\n",
                        out.metrics.average_reward(), static_cast<long long>(out.metrics.epochs),
                        out.metrics.total_time);
            std::printf("metrics: %s\n", out.metrics_path.string().c_str());
        } else if (sweep->parsed()) {
            const auto cfg = resolve_config(opts);
            const auto values = parse_r3_list(r3_arg);
            const auto out = cli::cmd_sweep_reward(cfg, values);
            for (const auto& cell : out.cells)
                std::printf("r3=%g %s: avg reward %.6g/hour\n", cell.r3, agents::to_string(cell.agent),
                            cell.avg_reward);
            std::printf("summary: %s\n", out.summary_path.string().c_str());
        } else if (dump->parsed()) {
            if (opts.preset_name.empty()) throw ConfigError("preset-dump requires --preset");
            auto cfg = cli::preset(opts.preset_name);
            if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
            std::cout << cli::dump_config(cfg);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
