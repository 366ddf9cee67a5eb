#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slicesim/errors.hpp"

namespace slicesim {

/// Per-class slice parameters: Poisson arrival rate, exponential completion
/// rate per running slice, the reward paid on acceptance, and the three
/// resource demands of one slice instance.
///
/// Demands are kept as exact integers in the smallest natural unit
/// (Mbps, CPUs, GB) so feasibility checks never hit floating-point ambiguity.
struct SliceClassSpec {
    int class_id = 0;            ///< 1-based class index
    double arrival_rate = 0;     ///< requests/hour
    double completion_rate = 0;  ///< completions/hour per running slice
    double reward = 0;           ///< paid per accepted request
    std::int64_t radio_demand = 0;    ///< Mbps
    std::int64_t compute_demand = 0;  ///< CPUs
    std::int64_t storage_demand = 0;  ///< GB

    bool operator==(const SliceClassSpec&) const = default;
};

/// Total radio / computing / storage budget of the provider.
struct ResourceCapacity {
    std::int64_t radio = 0;    ///< Mbps
    std::int64_t compute = 0;  ///< CPUs
    std::int64_t storage = 0;  ///< GB

    bool operator==(const ResourceCapacity&) const = default;
};

/// Resources consumed by a set of running slices.
struct ResourceUsage {
    std::int64_t radio = 0;
    std::int64_t compute = 0;
    std::int64_t storage = 0;
};

/// Number of running slices per class, n = [n_1 .. n_C].
struct Occupancy {
    std::vector<int> counts;

    Occupancy() = default;
    explicit Occupancy(std::vector<int> c) : counts(std::move(c)) {}
    static Occupancy zero(std::size_t num_classes) { return Occupancy(std::vector<int>(num_classes, 0)); }

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }

    bool operator==(const Occupancy&) const = default;

    /// Lexicographic order on counts; used for all state orderings.
    bool operator<(const Occupancy& other) const { return counts < other.counts; }
};

enum class EventKind { Arrival, Departure, Trivial };

/// The SMDP event: one arrival or one departure of a single class, or the
/// trivial self-transition event introduced by uniformization.
struct Event {
    EventKind kind = EventKind::Trivial;
    int class_id = 0;  ///< 1-based; 0 for Trivial

    static Event arrival(int class_id) { return {EventKind::Arrival, class_id}; }
    static Event departure(int class_id) { return {EventKind::Departure, class_id}; }
    static Event trivial() { return {EventKind::Trivial, 0}; }

    bool is_arrival() const { return kind == EventKind::Arrival; }
    bool operator==(const Event&) const = default;
};

/// Decision-relevant state: the occupancy vector paired with the pending
/// event. Decisions happen only on arrivals; departures and trivial events
/// are processed with a forced no-op.
struct SmdpState {
    Occupancy occupancy;
    Event event;

    bool operator==(const SmdpState&) const = default;
};

enum class Action : int { Reject = 0, Accept = 1 };

inline const char* to_string(Action a) { return a == Action::Accept ? "accept" : "reject"; }
inline const char* to_string(EventKind k) {
    switch (k) {
    case EventKind::Arrival: return "arrival";
    case EventKind::Departure: return "departure";
    default: return "trivial";
    }
}

/// "2-1-0" style label used in CSV headers and policy dumps.
inline std::string label(const Occupancy& occ) {
    std::string s;
    for (std::size_t i = 0; i < occ.counts.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(occ.counts[i]);
    }
    return s;
}

inline void validate_specs(std::span<const SliceClassSpec> specs) {
    if (specs.empty()) throw ConfigError("at least one slice class is required");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& sc = specs[i];
        if (sc.class_id != static_cast<int>(i) + 1)
            throw ConfigError("class_id must be contiguous starting at 1 (class " + std::to_string(i + 1) + ")");
        if (!(sc.arrival_rate > 0)) throw ConfigError("arrival_rate must be > 0 for class " + std::to_string(sc.class_id));
        if (!(sc.completion_rate > 0))
            throw ConfigError("completion_rate must be > 0 for class " + std::to_string(sc.class_id));
        if (sc.reward < 0) throw ConfigError("reward must be >= 0 for class " + std::to_string(sc.class_id));
        if (sc.radio_demand < 0 || sc.compute_demand < 0 || sc.storage_demand < 0)
            throw ConfigError("demands must be >= 0 for class " + std::to_string(sc.class_id));
        if (sc.radio_demand == 0 && sc.compute_demand == 0 && sc.storage_demand == 0)
            throw ConfigError("at least one demand must be > 0 for class " + std::to_string(sc.class_id));
    }
}

inline void validate_capacity(const ResourceCapacity& cap) {
    if (cap.radio <= 0 || cap.compute <= 0 || cap.storage <= 0)
        throw ConfigError("all three capacities must be strictly positive");
}

namespace detail {
inline std::size_t hash_mix(std::size_t h, std::uint64_t v) {
    // FNV-1a over the value bytes
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ULL;
    }
    return h;
}
} // namespace detail

struct OccupancyHash {
    std::size_t operator()(const Occupancy& occ) const {
        std::size_t h = 14695981039346656037ULL;
        for (int c : occ.counts) h = detail::hash_mix(h, static_cast<std::uint64_t>(c));
        return h;
    }
};

struct SmdpStateHash {
    std::size_t operator()(const SmdpState& s) const {
        std::size_t h = OccupancyHash{}(s.occupancy);
        h = detail::hash_mix(h, static_cast<std::uint64_t>(s.event.kind));
        h = detail::hash_mix(h, static_cast<std::uint64_t>(s.event.class_id));
        return h;
    }
};

} // namespace slicesim
