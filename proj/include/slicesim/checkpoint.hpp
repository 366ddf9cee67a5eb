#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "slicesim/errors.hpp"
#include "slicesim/nn.hpp"

namespace slicesim::nn {

namespace detail {

// 17 significant digits round-trip any IEEE double through decimal exactly
inline std::string double_string(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw ConfigError("checkpoint: bad number '" + s + "'");
    return v;
}

inline nlohmann::json mlp_to_json(const Mlp& mlp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : mlp.layers) {
        nlohmann::json jw = nlohmann::json::array();
        for (std::size_t i = 0; i < layer.out_dim(); ++i)
            for (std::size_t j = 0; j < layer.in_dim(); ++j) jw.push_back(double_string(layer.weights(i, j)));
        nlohmann::json jb = nlohmann::json::array();
        for (double b : layer.bias) jb.push_back(double_string(b));
        layers.push_back({{"out", layer.out_dim()}, {"in", layer.in_dim()}, {"w", jw}, {"b", jb}});
    }
    return layers;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp mlp;
    for (const auto& jl : j) {
        const std::size_t out = jl.at("out").get<std::size_t>();
        const std::size_t in = jl.at("in").get<std::size_t>();
        DenseLayer layer{Matrix(out, in), std::vector<double>(out)};
        const auto& jw = jl.at("w");
        if (jw.size() != out * in) throw ConfigError("checkpoint: weight count mismatch");
        std::size_t k = 0;
        for (std::size_t i = 0; i < out; ++i)
            for (std::size_t c = 0; c < in; ++c) layer.weights(i, c) = parse_double(jw[k++].get<std::string>());
        const auto& jb = jl.at("b");
        if (jb.size() != out) throw ConfigError("checkpoint: bias count mismatch");
        for (std::size_t i = 0; i < out; ++i) layer.bias[i] = parse_double(jb[i].get<std::string>());
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

} // namespace detail

inline constexpr int kCheckpointVersion = 1;

/// JSON checkpoint with weights as decimal strings; save/load round-trips
/// bit-exactly.
inline nlohmann::json checkpoint_to_json(const MlpParams& params) {
    nlohmann::json j;
    j["format"] = "slicesim-mlp";
    j["version"] = kCheckpointVersion;
    j["arch"] = to_string(params.arch);
    j["combiner"] = to_string(params.combiner);
    if (params.arch == Arch::SingleHead) {
        j["net"] = detail::mlp_to_json(params.net);
    } else {
        j["value"] = detail::mlp_to_json(params.value);
        j["advantage"] = detail::mlp_to_json(params.advantage);
    }
    return j;
}

inline MlpParams checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "slicesim-mlp") throw ConfigError("checkpoint: unknown format");
    if (j.value("version", 0) != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
    MlpParams params;
    const std::string arch = j.at("arch").get<std::string>();
    const std::string combiner = j.value("combiner", "mean");
    params.combiner = combiner == "max" ? Combiner::MaxSubtract : Combiner::MeanSubtract;
    if (arch == "single") {
        params.arch = Arch::SingleHead;
        params.net = detail::mlp_from_json(j.at("net"));
    } else if (arch == "dueling") {
        params.arch = Arch::Dueling;
        params.value = detail::mlp_from_json(j.at("value"));
        params.advantage = detail::mlp_from_json(j.at("advantage"));
    } else {
        throw ConfigError("checkpoint: unknown architecture '" + arch + "'");
    }
    return params;
}

inline void save_checkpoint(const std::string& path, const MlpParams& params) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write checkpoint: " + path);
    os << checkpoint_to_json(params).dump(1) << '\n';
}

inline MlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read checkpoint: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    return checkpoint_from_json(j);
}

} // namespace slicesim::nn
