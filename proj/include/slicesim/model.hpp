#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "slicesim/types.hpp"

namespace slicesim::model {

/// Exact solvers enumerate the feasible set; beyond this many occupancies
/// only the learning agents apply.
inline constexpr std::size_t kDefaultStateCeiling = 5000;

inline ResourceUsage usage(const Occupancy& occ, std::span<const SliceClassSpec> specs) {
    ResourceUsage u;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto n = static_cast<std::int64_t>(occ.counts[i]);
        u.radio += specs[i].radio_demand * n;
        u.compute += specs[i].compute_demand * n;
        u.storage += specs[i].storage_demand * n;
    }
    return u;
}

/// All three resource constraints hold at this occupancy.
inline bool feasible(const Occupancy& occ, std::span<const SliceClassSpec> specs, const ResourceCapacity& cap) {
    const ResourceUsage u = usage(occ, specs);
    return u.radio <= cap.radio && u.compute <= cap.compute && u.storage <= cap.storage;
}

/// True iff one more class `class_id` slice still satisfies all three
/// resource constraints.
inline bool fits(const Occupancy& occ, int class_id, std::span<const SliceClassSpec> specs,
                 const ResourceCapacity& cap) {
    if (class_id < 1 || class_id > static_cast<int>(specs.size()))
        throw std::invalid_argument("fits: unknown class_id " + std::to_string(class_id));
    const ResourceUsage u = usage(occ, specs);
    const auto& sc = specs[static_cast<std::size_t>(class_id - 1)];
    return u.radio + sc.radio_demand <= cap.radio && u.compute + sc.compute_demand <= cap.compute &&
           u.storage + sc.storage_demand <= cap.storage;
}

/// Largest m such that m additional class `class_id` slices still fit.
/// Used to bin acceptance probabilities by remaining capacity.
inline int free_slots(const Occupancy& occ, int class_id, std::span<const SliceClassSpec> specs,
                      const ResourceCapacity& cap) {
    if (class_id < 1 || class_id > static_cast<int>(specs.size()))
        throw std::invalid_argument("free_slots: unknown class_id " + std::to_string(class_id));
    const ResourceUsage u = usage(occ, specs);
    const auto& sc = specs[static_cast<std::size_t>(class_id - 1)];
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    if (sc.radio_demand > 0) m = std::min(m, (cap.radio - u.radio) / sc.radio_demand);
    if (sc.compute_demand > 0) m = std::min(m, (cap.compute - u.compute) / sc.compute_demand);
    if (sc.storage_demand > 0) m = std::min(m, (cap.storage - u.storage) / sc.storage_demand);
    return static_cast<int>(std::max<std::int64_t>(m, 0));
}

/// Every occupancy satisfying the three resource constraints, in
/// lexicographic order on the counts vector. The ordering is the canonical
/// one used by all matrices, tables, and file dumps.
///
/// Throws ConfigError once the feasible set exceeds `max_states`.
inline std::vector<Occupancy> enumerate_states(std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                                               std::size_t max_states = kDefaultStateCeiling) {
    validate_specs(specs);
    validate_capacity(cap);
    std::vector<Occupancy> out;
    Occupancy cur = Occupancy::zero(specs.size());

    // depth-first over classes; class 1 outermost gives lexicographic order
    auto walk = [&](auto&& self, std::size_t cls, ResourceUsage used) -> void {
        if (cls == specs.size()) {
            if (out.size() >= max_states)
                throw ConfigError("state space too large: exceeds ceiling of " + std::to_string(max_states) +
                                  " occupancy states");
            out.push_back(cur);
            return;
        }
        const auto& sc = specs[cls];
        for (int n = 0;; ++n) {
            ResourceUsage u{used.radio + sc.radio_demand * n, used.compute + sc.compute_demand * n,
                            used.storage + sc.storage_demand * n};
            if (u.radio > cap.radio || u.compute > cap.compute || u.storage > cap.storage) break;
            cur.counts[cls] = n;
            self(self, cls + 1, u);
        }
        cur.counts[cls] = 0;
    };
    walk(walk, 0, ResourceUsage{});
    return out;
}

/// Deterministic occupancy update. Accepted arrivals increment, departures
/// decrement, everything else is the identity. Accepting an arrival that
/// does not fit is a caller bug: agents must never be offered that action.
inline Occupancy apply(const SmdpState& state, Action action, std::span<const SliceClassSpec> specs,
                       const ResourceCapacity& cap) {
    Occupancy next = state.occupancy;
    switch (state.event.kind) {
    case EventKind::Arrival:
        if (action == Action::Accept) {
            if (!fits(state.occupancy, state.event.class_id, specs, cap))
                throw std::invalid_argument("apply: infeasible accept for class " +
                                            std::to_string(state.event.class_id));
            next.counts[static_cast<std::size_t>(state.event.class_id - 1)] += 1;
        }
        break;
    case EventKind::Departure: {
        auto& n = next.counts[static_cast<std::size_t>(state.event.class_id - 1)];
        if (n < 1) throw std::invalid_argument("apply: departure from empty class");
        n -= 1;
        break;
    }
    case EventKind::Trivial:
        break;
    }
    return next;
}

} // namespace slicesim::model
