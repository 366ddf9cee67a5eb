#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "slicesim/agents.hpp"
#include "slicesim/checkpoint.hpp"
#include "slicesim/config.hpp"
#include "slicesim/markov.hpp"
#include "slicesim/sim.hpp"

namespace slicesim::cli {

namespace fs = std::filesystem;

namespace detail {

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    return os;
}

inline Occupancy parse_label(const std::string& text) {
    Occupancy occ;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '-')) occ.counts.push_back(std::stoi(tok));
    if (occ.counts.empty()) throw ConfigError("bad state label '" + text + "'");
    return occ;
}

} // namespace detail

/// Every subcommand drops a manifest next to its outputs: command, version,
/// config hash, seeds, generator, and the full config text. Re-running with
/// the same manifest reproduces every output byte for byte (nothing here is
/// time- or host-dependent).
inline void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, const std::string& command,
                           nlohmann::json extra = {}) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["config_hash"] = config_hash(cfg);
    j["seeds"] = cfg.seeds;
    j["generator"] = Rng::name();
    j["config"] = dump_config(cfg);
    if (!extra.is_null()) j["details"] = std::move(extra);
    auto os = detail::open_out(dir / "manifest.json");
    os << j.dump(1) << '\n';
}

inline void write_policy_csv(std::ostream& os, const markov::PolicyTable& policy,
                             std::span<const Occupancy> states, std::size_t num_classes) {
    os << "state,class_id,action\n";
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= num_classes; ++c)
            os << label(occ) << ',' << c << ',' << to_string(policy.at(occ, static_cast<int>(c))) << '\n';
}

inline markov::PolicyTable read_policy_csv(std::istream& is) {
    markov::PolicyTable pi;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("policy file is empty");
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string state_label, class_text, action_text;
        if (!std::getline(ss, state_label, ',') || !std::getline(ss, class_text, ',') ||
            !std::getline(ss, action_text))
            throw ConfigError("policy file: malformed line " + std::to_string(lineno));
        Action a;
        if (action_text == "accept") a = Action::Accept;
        else if (action_text == "reject") a = Action::Reject;
        else throw ConfigError("policy file: unknown action '" + action_text + "' on line " + std::to_string(lineno));
        pi.set(detail::parse_label(state_label), std::stoi(class_text), a);
    }
    return pi;
}

inline markov::PolicyTable read_policy_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open policy file: " + path);
    return read_policy_csv(is);
}

// ---------------------------------------------------------------------------
// solve

struct SolveOutput {
    markov::AverageRewardSolution solution;
    fs::path policy_path;
    fs::path gain_path;
};

/// Exact optimal policy for the configured instance: relative value
/// iteration, then a policy CSV and a gain JSON under the output directory.
inline SolveOutput cmd_solve(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path dir = cfg.out_dir;
    detail::ensure_dir(dir);

    const auto states = model::enumerate_states(cfg.classes, cfg.capacity);
    auto solution = markov::solve_optimal(cfg.classes, cfg.capacity);

    SolveOutput out{std::move(solution), dir / "policy.csv", dir / "gain.json"};
    {
        auto os = detail::open_out(out.policy_path);
        write_policy_csv(os, out.solution.policy, states, cfg.classes.size());
    }
    {
        nlohmann::json j;
        j["gain_per_hour"] = out.solution.gain;
        j["residual_span"] = out.solution.residual_span;
        j["iterations"] = out.solution.iterations;
        j["occupancy_states"] = states.size();
        j["decision_states"] = out.solution.bias_states.size();
        j["uniform_rate"] = markov::uniform_rate(cfg.classes, cfg.capacity);
        auto os = detail::open_out(out.gain_path);
        os << j.dump(1) << '\n';
    }
    write_manifest(dir, cfg, "solve");
    return out;
}

// ---------------------------------------------------------------------------
// train

inline void write_learning_curve_csv(std::ostream& os, std::span<const agents::LearningCurvePoint> curve) {
    os << "episode,avg_reward,avg_reward_window,epsilon,loss\n";
    for (const auto& pt : curve)
        os << pt.episode << ',' << format_double(pt.avg_reward) << ',' << format_double(pt.window_avg_reward) << ','
           << format_double(pt.epsilon) << ',' << format_double(pt.loss) << '\n';
}

inline void write_qtable_csv(std::ostream& os, const agents::TrainResult& result,
                             std::span<const Occupancy> states, std::span<const SliceClassSpec> specs) {
    os << "state,class_id,q_reject,q_accept\n";
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= specs.size(); ++c) {
            const SmdpState s{occ, Event::arrival(static_cast<int>(c))};
            const agents::QTable::Row* row = result.table.find(s);
            const double qr = row ? row->q[0] : 0.0;
            const double qa = row ? row->q[1] : 0.0;
            os << label(occ) << ',' << c << ',' << format_double(qr, "%.17g") << ',' << format_double(qa, "%.17g")
               << '\n';
        }
}

struct TrainOutput {
    std::vector<agents::TrainResult> per_seed;
    std::vector<fs::path> curve_paths;
    std::vector<fs::path> checkpoint_paths;
    fs::path mean_curve_path;
};

/// Train the configured agent once per seed; write each seed's learning
/// curve and checkpoint plus the across-seed mean +- standard error curve.
inline TrainOutput cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path dir = cfg.out_dir;
    detail::ensure_dir(dir);
    const bool deep = cfg.agent == agents::AgentKind::DoubleQ || cfg.agent == agents::AgentKind::Dueling;

    TrainOutput out;
    for (const std::uint64_t seed : cfg.seeds) {
        Rng rng(seed);
        agents::TrainResult result = agents::train(cfg.agent, cfg.classes, cfg.capacity, cfg.train, rng, cfg.mode);
        result.metrics.seed = seed;

        const fs::path curve_path = dir / ("learning_curve_seed" + std::to_string(seed) + ".csv");
        {
            auto os = detail::open_out(curve_path);
            write_learning_curve_csv(os, result.curve);
        }
        out.curve_paths.push_back(curve_path);

        if (deep) {
            const fs::path ck = dir / ("checkpoint_seed" + std::to_string(seed) + ".json");
            nn::save_checkpoint(ck.string(), result.params);
            nlohmann::json meta;
            meta["agent"] = agents::to_string(cfg.agent);
            meta["seed"] = seed;
            meta["classes"] = cfg.classes.size();
            meta["features"] = nn::to_string(cfg.train.features);
            meta["config_hash"] = config_hash(cfg);
            meta["version"] = kVersion;
            auto os = detail::open_out(ck.string() + ".manifest.json");
            os << meta.dump(1) << '\n';
            out.checkpoint_paths.push_back(ck);
        } else if (cfg.agent == agents::AgentKind::Tabular) {
            const fs::path qt = dir / ("qtable_seed" + std::to_string(seed) + ".csv");
            auto os = detail::open_out(qt);
            write_qtable_csv(os, result, model::enumerate_states(cfg.classes, cfg.capacity), cfg.classes);
            out.checkpoint_paths.push_back(qt);
        }
        out.per_seed.push_back(std::move(result));
    }

    // mean +- stderr across seeds, aligned on curve sample points
    out.mean_curve_path = dir / "learning_curve_mean.csv";
    {
        auto os = detail::open_out(out.mean_curve_path);
        os << "episode,avg_reward_mean,avg_reward_stderr\n";
        if (!out.per_seed.empty()) {
            const std::size_t points = out.per_seed.front().curve.size();
            const double n = static_cast<double>(out.per_seed.size());
            for (std::size_t i = 0; i < points; ++i) {
                double mean = 0;
                for (const auto& r : out.per_seed) mean += r.curve[i].avg_reward;
                mean /= n;
                double var = 0;
                for (const auto& r : out.per_seed) {
                    const double d = r.curve[i].avg_reward - mean;
                    var += d * d;
                }
                const double stderr_ = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
                os << out.per_seed.front().curve[i].episode << ',' << format_double(mean) << ','
                   << format_double(stderr_) << '\n';
            }
        }
    }
    write_manifest(dir, cfg, "train");
    return out;
}

// ---------------------------------------------------------------------------
// simulate

struct BuiltinGreedy {};
struct BuiltinReject {};
struct PolicyFile { std::string path; };
struct CheckpointFile { std::string path; };
using PolicySource = std::variant<BuiltinGreedy, BuiltinReject, PolicyFile, CheckpointFile>;

struct SimulateOutput {
    sim::RunMetrics metrics;
    fs::path metrics_path;
    fs::path trajectory_path;
};

/// Fixed-policy evaluation: no learning, one run with the first configured
/// seed, metrics JSON plus a trajectory CSV.
inline SimulateOutput cmd_simulate(const ExperimentConfig& cfg, const PolicySource& source) {
    cfg.validate();
    const fs::path dir = cfg.out_dir;
    detail::ensure_dir(dir);
    const std::uint64_t seed = cfg.seeds.front();
    Rng rng(seed);

    std::function<Action(const SmdpState&)> decide;
    std::string source_name;
    if (std::holds_alternative<BuiltinGreedy>(source)) {
        source_name = "greedy";
        decide = [&cfg](const SmdpState& s) { return agents::greedy_act(s, cfg.classes, cfg.capacity); };
    } else if (std::holds_alternative<BuiltinReject>(source)) {
        source_name = "reject";
        decide = [](const SmdpState&) { return Action::Reject; };
    } else if (const PolicyFile* pf = std::get_if<PolicyFile>(&source)) {
        source_name = pf->path;
        auto policy = std::make_shared<markov::PolicyTable>(read_policy_csv_file(pf->path));
        for (const auto& occ : model::enumerate_states(cfg.classes, cfg.capacity))
            for (std::size_t c = 1; c <= cfg.classes.size(); ++c)
                if (!policy->contains(occ, static_cast<int>(c)))
                    throw ConfigError("policy file misses state " + label(occ) + " class " + std::to_string(c));
        decide = [policy](const SmdpState& s) { return (*policy)(s); };
    } else {
        const auto& ck = std::get<CheckpointFile>(source);
        source_name = ck.path;
        auto params = std::make_shared<nn::MlpParams>(nn::load_checkpoint(ck.path));

        // manifest next to the checkpoint must agree with this config
        std::ifstream mis(ck.path + ".manifest.json");
        if (!mis) throw ConfigError("missing checkpoint manifest: " + ck.path + ".manifest.json");
        nlohmann::json meta;
        try {
            mis >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("checkpoint manifest: invalid JSON: ") + e.what());
        }
        const auto kind = agents::agent_kind_from(meta.at("agent").get<std::string>());
        if ((kind == agents::AgentKind::Dueling) != (params->arch == nn::Arch::Dueling))
            throw ConfigError("checkpoint/manifest mismatch: agent kind does not match architecture");
        if (meta.at("classes").get<std::size_t>() != cfg.classes.size())
            throw ConfigError("checkpoint/manifest mismatch: class count differs from config");
        const auto features =
            meta.at("features").get<std::string>() == "scalar" ? nn::FeatureMode::ScalarIndex : nn::FeatureMode::OneHot;
        if (params->input_dim() != nn::feature_dim(cfg.classes.size(), features))
            throw ConfigError("checkpoint/manifest mismatch: feature dimension differs from network input");

        auto enc = std::make_shared<nn::FeatureEncoder>(cfg.classes, cfg.capacity, features);
        const auto classes = cfg.classes;
        const auto cap = cfg.capacity;
        decide = [params, enc, classes, cap](const SmdpState& s) {
            if (!s.event.is_arrival() || !agents::accept_admissible(s, classes, cap)) return Action::Reject;
            const std::vector<double> q = nn::forward(*params, (*enc)(s));
            return q[1] > q[0] ? Action::Accept : Action::Reject;
        };
    }

    std::vector<sim::TrajectoryStep> trajectory;
    sim::RunMetrics metrics = sim::run(decide, cfg.classes, cfg.capacity, cfg.horizon, rng, cfg.mode, &trajectory,
                                       seed, cfg.trajectory_limit);

    SimulateOutput out{std::move(metrics), dir / "metrics.json", dir / "trajectory.csv"};
    {
        nlohmann::json j;
        j["policy"] = source_name;
        j["average_reward"] = out.metrics.average_reward();
        j["total_reward"] = out.metrics.total_reward;
        j["total_time_hours"] = out.metrics.total_time;
        j["epochs"] = out.metrics.epochs;
        j["offered"] = out.metrics.offered;
        j["accepted"] = out.metrics.accepted;
        j["mean_occupancy"] = out.metrics.mean_occupancy();
        j["coerced_accepts"] = out.metrics.coerced_accepts;
        j["mode"] = sim::to_string(out.metrics.mode);
        j["rng"] = out.metrics.rng_name;
        j["seed"] = out.metrics.seed;
        auto os = detail::open_out(out.metrics_path);
        os << j.dump(1) << '\n';
    }
    {
        auto os = detail::open_out(out.trajectory_path);
        sim::write_trajectory_csv(os, trajectory, cfg.classes.size());
    }
    write_manifest(dir, cfg, "simulate", {{"policy", source_name}});
    return out;
}

// ---------------------------------------------------------------------------
// sweep-reward

/// Per-class counts emitted by the sweep. Deliberately free of any reward
/// value so the greedy baseline's files can be compared byte for byte
/// across the swept reward.
inline void write_counts_csv(std::ostream& os, const sim::RunMetrics& m) {
    os << "class_id,mean_running_slices,offered,accepted\n";
    const auto mean = m.mean_occupancy();
    for (std::size_t c = 0; c < mean.size(); ++c)
        os << (c + 1) << ',' << format_double(mean[c], "%.17g") << ',' << m.offered[c] << ',' << m.accepted[c]
           << '\n';
}

inline void write_profile_csv(std::ostream& os, const sim::AcceptanceProfile& profile) {
    os << "class_id,free_slots,offered,accepted,acceptance_probability\n";
    for (std::size_t c = 0; c < profile.per_class.size(); ++c)
        for (const auto& [bin, cell] : profile.per_class[c])
            os << (c + 1) << ',' << bin << ',' << cell.offered << ',' << cell.accepted << ','
               << format_double(cell.probability()) << '\n';
}

struct SweepCell {
    double r3 = 0;
    agents::AgentKind agent = agents::AgentKind::Greedy;
    double avg_reward = 0;
    sim::RunMetrics metrics;
    sim::AcceptanceProfile profile;
};

struct SweepOutput {
    std::vector<SweepCell> cells;
    fs::path summary_path;
};

/// Vary the last class's immediate reward over `r3_values`; for each value
/// evaluate greedy, tabular, and dueling agents (the learners trained
/// fresh). All agents share the evaluation seed, so reward-independent
/// behavior shows up as identical counts files.
inline SweepOutput cmd_sweep_reward(const ExperimentConfig& cfg, std::span<const double> r3_values) {
    cfg.validate();
    if (r3_values.empty()) throw ConfigError("sweep-reward: need at least one reward value");
    const fs::path dir = cfg.out_dir;
    detail::ensure_dir(dir);
    const std::uint64_t train_seed = cfg.seeds.front();
    const std::uint64_t eval_seed = cfg.seeds.front();

    const agents::AgentKind kinds[] = {agents::AgentKind::Greedy, agents::AgentKind::Tabular,
                                       agents::AgentKind::Dueling};

    SweepOutput out;
    for (const double r3 : r3_values) {
        ExperimentConfig varied = cfg;
        varied.classes.back().reward = r3;
        varied.validate();
        const std::string tag = "r3_" + format_double(r3, "%g");

        for (const auto kind : kinds) {
            agents::TrainResult trained;
            trained.kind = kind;
            if (kind != agents::AgentKind::Greedy) {
                Rng trng(train_seed);
                trained = agents::train(kind, varied.classes, varied.capacity, varied.train, trng, varied.mode);
            }
            nn::FeatureEncoder enc(varied.classes, varied.capacity, varied.train.features);
            auto decide = [&](const SmdpState& s) {
                return agents::act_greedy_from_values(trained, s, varied.classes, varied.capacity, enc);
            };

            Rng run_rng(eval_seed);
            SweepCell cell;
            cell.r3 = r3;
            cell.agent = kind;
            cell.metrics =
                sim::run(decide, varied.classes, varied.capacity, varied.horizon, run_rng, varied.mode, nullptr,
                         eval_seed);
            cell.avg_reward = cell.metrics.average_reward();

            Rng prof_rng(eval_seed);
            cell.profile = sim::acceptance_profile(decide, varied.classes, varied.capacity, varied.horizon,
                                                   prof_rng, varied.mode);

            const std::string agent_name = agents::to_string(kind);
            {
                auto os = detail::open_out(dir / ("counts_" + agent_name + "_" + tag + ".csv"));
                write_counts_csv(os, cell.metrics);
            }
            {
                auto os = detail::open_out(dir / ("profile_" + agent_name + "_" + tag + ".csv"));
                write_profile_csv(os, cell.profile);
            }
            out.cells.push_back(std::move(cell));
        }
    }

    out.summary_path = dir / "summary.csv";
    {
        auto os = detail::open_out(out.summary_path);
        os << "r3,agent,avg_reward\n";
        for (const auto& cell : out.cells)
            os << format_double(cell.r3, "%g") << ',' << agents::to_string(cell.agent) << ','
               << format_double(cell.avg_reward) << '\n';
    }
    write_manifest(dir, cfg, "sweep-reward");
    return out;
}

} // namespace slicesim::cli
