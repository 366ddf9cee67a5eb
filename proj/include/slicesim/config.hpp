#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "slicesim/agents.hpp"
#include "slicesim/errors.hpp"
#include "slicesim/matrix.hpp"
#include "slicesim/sim.hpp"
#include "slicesim/types.hpp"

namespace slicesim::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Everything one experiment needs: the slice classes, the capacity, the
/// agent and its training knobs, the evaluation horizon, seeds, and where
/// outputs go. Scenario presets produce these; the flat key-value config
/// file round-trips them.
struct ExperimentConfig {
    std::string scenario = "custom";
    std::vector<SliceClassSpec> classes;
    ResourceCapacity capacity;
    agents::AgentKind agent = agents::AgentKind::Dueling;
    agents::TrainConfig train;
    std::int64_t horizon = 1000000;          ///< evaluation epochs
    std::int64_t trajectory_limit = 100000;  ///< trajectory rows written by simulate; -1 keeps all
    sim::Mode mode = sim::Mode::Uniformized;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";

    void validate() const {
        validate_specs(classes);
        validate_capacity(capacity);
        train.validate();
        if (horizon < 1) throw ConfigError("run.horizon must be >= 1");
        if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
    }
};

/// Scenario presets mirroring the experiment configurations: `small` is the
/// 400 Mbps / 8 CPU / 4 GB system, `medium` scales capacity to 1 Gbps /
/// 20 CPUs / 10 GB with arrival rates four times higher, and `large` doubles
/// that capacity again.
inline ExperimentConfig preset(std::string_view name) {
    auto classes = [](std::vector<double> lam, double mu, std::vector<double> rewards) {
        std::vector<SliceClassSpec> out;
        for (std::size_t i = 0; i < lam.size(); ++i)
            out.push_back({static_cast<int>(i) + 1, lam[i], mu, rewards[i], 100, 2, 1});
        return out;
    };
    ExperimentConfig cfg;
    if (name == "small") {
        cfg.scenario = "small";
        cfg.classes = classes({12, 8, 10}, 3, {1, 2, 4});
        cfg.capacity = {400, 8, 4};
    } else if (name == "medium") {
        cfg.scenario = "medium";
        cfg.classes = classes({48, 32, 40}, 2, {1, 2, 4});
        cfg.capacity = {1000, 20, 10};
    } else if (name == "large") {
        cfg.scenario = "large";
        cfg.classes = classes({48, 32, 40}, 2, {1, 2, 4});
        cfg.capacity = {2000, 40, 20};
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected small, medium, or large)");
    }
    cfg.seeds = {1, 2, 3, 4, 5};
    return cfg;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: expected a number for " + key + ", got '" + v + "'");
    }
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: expected an integer for " + key + ", got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: expected true/false for " + key + ", got '" + v + "'");
}

inline std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(static_cast<std::uint64_t>(to_int(key, tok)));
    }
    if (out.empty()) throw ConfigError("config: no seeds in " + key);
    return out;
}

} // namespace detail

/// Canonical flat `section.key = value` dump; parse_config inverts it.
inline std::string dump_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    auto num = [](double v) { return format_double(v, "%.17g"); };
    os << "experiment.scenario = " << cfg.scenario << '\n';
    os << "experiment.classes = " << cfg.classes.size() << '\n';
    os << "experiment.agent = " << agents::to_string(cfg.agent) << '\n';
    for (const auto& sc : cfg.classes) {
        const std::string p = "class" + std::to_string(sc.class_id) + ".";
        os << p << "arrival_rate = " << num(sc.arrival_rate) << '\n';
        os << p << "completion_rate = " << num(sc.completion_rate) << '\n';
        os << p << "reward = " << num(sc.reward) << '\n';
        os << p << "radio_demand = " << sc.radio_demand << '\n';
        os << p << "compute_demand = " << sc.compute_demand << '\n';
        os << p << "storage_demand = " << sc.storage_demand << '\n';
    }
    os << "capacity.radio = " << cfg.capacity.radio << '\n';
    os << "capacity.compute = " << cfg.capacity.compute << '\n';
    os << "capacity.storage = " << cfg.capacity.storage << '\n';
    os << "train.gamma = " << num(cfg.train.gamma) << '\n';
    os << "train.epsilon_start = " << num(cfg.train.epsilon_start) << '\n';
    os << "train.epsilon_end = " << num(cfg.train.epsilon_end) << '\n';
    os << "train.epsilon_decay_fraction = " << num(cfg.train.epsilon_decay_fraction) << '\n';
    os << "train.learning_rate = " << num(cfg.train.learning_rate) << '\n';
    os << "train.minibatch = " << cfg.train.minibatch << '\n';
    os << "train.replay_capacity = " << cfg.train.replay_capacity << '\n';
    os << "train.target_sync = " << cfg.train.target_sync << '\n';
    os << "train.episodes = " << cfg.train.episodes << '\n';
    os << "train.hidden_width = " << cfg.train.hidden_width << '\n';
    os << "train.store_nonarrival = " << (cfg.train.store_nonarrival ? "true" : "false") << '\n';
    os << "train.double_q_canonical = " << (cfg.train.double_q_canonical ? "true" : "false") << '\n';
    os << "train.dueling_combiner = " << nn::to_string(cfg.train.combiner) << '\n';
    os << "train.features = " << nn::to_string(cfg.train.features) << '\n';
    os << "train.warmup = " << cfg.train.warmup << '\n';
    os << "train.curve_interval = " << cfg.train.curve_interval << '\n';
    os << "train.curve_window = " << cfg.train.curve_window << '\n';
    os << "run.horizon = " << cfg.horizon << '\n';
    os << "run.trajectory_limit = " << cfg.trajectory_limit << '\n';
    os << "run.mode = " << sim::to_string(cfg.mode) << '\n';
    os << "run.seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
    os << '\n';
    os << "output.dir = " << cfg.out_dir << '\n';
    return os.str();
}

/// Parse the flat key-value format. Lines are `section.key = value`; blank
/// lines and `#` comments are ignored; unknown keys are rejected.
inline ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    cfg.classes.clear();
    cfg.seeds.clear();
    std::size_t declared_classes = 0;

    std::istringstream is{std::string(text)};
    std::string line;
    int lineno = 0;
    auto ensure_class = [&](std::size_t id) -> SliceClassSpec& {
        if (id < 1) throw ConfigError("config: class index must be >= 1");
        if (cfg.classes.size() < id) {
            const std::size_t old = cfg.classes.size();
            cfg.classes.resize(id);
            for (std::size_t i = old; i < id; ++i) cfg.classes[i].class_id = static_cast<int>(i) + 1;
        }
        return cfg.classes[id - 1];
    };

    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: missing '=' on line " + std::to_string(lineno));
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: empty key or value on line " + std::to_string(lineno));

        if (key == "experiment.scenario") cfg.scenario = value;
        else if (key == "experiment.classes") declared_classes = static_cast<std::size_t>(detail::to_int(key, value));
        else if (key == "experiment.agent") cfg.agent = agents::agent_kind_from(value);
        else if (key.rfind("class", 0) == 0) {
            const std::size_t dot = key.find('.');
            if (dot == std::string::npos) throw ConfigError("config: unknown key '" + key + "'");
            const std::size_t id = static_cast<std::size_t>(detail::to_int(key, key.substr(5, dot - 5)));
            SliceClassSpec& sc = ensure_class(id);
            const std::string field = key.substr(dot + 1);
            if (field == "arrival_rate") sc.arrival_rate = detail::to_double(key, value);
            else if (field == "completion_rate") sc.completion_rate = detail::to_double(key, value);
            else if (field == "reward") sc.reward = detail::to_double(key, value);
            else if (field == "radio_demand") sc.radio_demand = detail::to_int(key, value);
            else if (field == "compute_demand") sc.compute_demand = detail::to_int(key, value);
            else if (field == "storage_demand") sc.storage_demand = detail::to_int(key, value);
            else throw ConfigError("config: unknown key '" + key + "'");
        }
        else if (key == "capacity.radio") cfg.capacity.radio = detail::to_int(key, value);
        else if (key == "capacity.compute") cfg.capacity.compute = detail::to_int(key, value);
        else if (key == "capacity.storage") cfg.capacity.storage = detail::to_int(key, value);
        else if (key == "train.gamma") cfg.train.gamma = detail::to_double(key, value);
        else if (key == "train.epsilon_start") cfg.train.epsilon_start = detail::to_double(key, value);
        else if (key == "train.epsilon_end") cfg.train.epsilon_end = detail::to_double(key, value);
        else if (key == "train.epsilon_decay_fraction")
            cfg.train.epsilon_decay_fraction = detail::to_double(key, value);
        else if (key == "train.learning_rate") cfg.train.learning_rate = detail::to_double(key, value);
        else if (key == "train.minibatch") cfg.train.minibatch = static_cast<int>(detail::to_int(key, value));
        else if (key == "train.replay_capacity")
            cfg.train.replay_capacity = static_cast<int>(detail::to_int(key, value));
        else if (key == "train.target_sync") cfg.train.target_sync = static_cast<int>(detail::to_int(key, value));
        else if (key == "train.episodes") cfg.train.episodes = detail::to_int(key, value);
        else if (key == "train.hidden_width") cfg.train.hidden_width = static_cast<int>(detail::to_int(key, value));
        else if (key == "train.store_nonarrival") cfg.train.store_nonarrival = detail::to_bool(key, value);
        else if (key == "train.double_q_canonical") cfg.train.double_q_canonical = detail::to_bool(key, value);
        else if (key == "train.dueling_combiner") {
            if (value == "mean") cfg.train.combiner = nn::Combiner::MeanSubtract;
            else if (value == "max") cfg.train.combiner = nn::Combiner::MaxSubtract;
            else throw ConfigError("config: train.dueling_combiner must be mean or max");
        }
        else if (key == "train.features") {
            if (value == "onehot") cfg.train.features = nn::FeatureMode::OneHot;
            else if (value == "scalar") cfg.train.features = nn::FeatureMode::ScalarIndex;
            else throw ConfigError("config: train.features must be onehot or scalar");
        }
        else if (key == "train.warmup") cfg.train.warmup = detail::to_int(key, value);
        else if (key == "train.curve_interval") cfg.train.curve_interval = detail::to_int(key, value);
        else if (key == "train.curve_window") cfg.train.curve_window = static_cast<int>(detail::to_int(key, value));
        else if (key == "run.horizon") cfg.horizon = detail::to_int(key, value);
        else if (key == "run.trajectory_limit") cfg.trajectory_limit = detail::to_int(key, value);
        else if (key == "run.mode") {
            if (value == "uniformized") cfg.mode = sim::Mode::Uniformized;
            else if (value == "continuous") cfg.mode = sim::Mode::Continuous;
            else throw ConfigError("config: run.mode must be uniformized or continuous");
        }
        else if (key == "run.seeds") cfg.seeds = detail::to_seeds(key, value);
        else if (key == "output.dir") cfg.out_dir = value;
        else throw ConfigError("config: unknown key '" + key + "'");
    }

    if (cfg.seeds.empty()) cfg.seeds = {1};
    if (declared_classes != 0 && declared_classes != cfg.classes.size())
        throw ConfigError("config: experiment.classes says " + std::to_string(declared_classes) + " but " +
                          std::to_string(cfg.classes.size()) + " classes are defined");
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str());
}

/// FNV-1a over the canonical dump; recorded in every output manifest.
inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = dump_config(cfg);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace slicesim::cli
