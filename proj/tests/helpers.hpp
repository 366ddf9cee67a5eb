#pragma once

#include <span>
#include <vector>

#include "slicesim/model.hpp"
#include "slicesim/types.hpp"

namespace testutil {

// the 3-class instance used throughout: rates (12,8,10)/h, completions 3/h,
// rewards (1,2,4), one slice needs 100 Mbps / 2 CPUs / 1 GB, capacity
// 400 Mbps / 8 CPUs / 4 GB
inline std::vector<slicesim::SliceClassSpec> small_specs() {
    return {
        {1, 12.0, 3.0, 1.0, 100, 2, 1},
        {2, 8.0, 3.0, 2.0, 100, 2, 1},
        {3, 10.0, 3.0, 4.0, 100, 2, 1},
    };
}

inline slicesim::ResourceCapacity small_cap() { return {400, 8, 4}; }

inline slicesim::Occupancy occ(std::vector<int> counts) { return slicesim::Occupancy(std::move(counts)); }

inline slicesim::Action greedy(const slicesim::SmdpState& s, std::span<const slicesim::SliceClassSpec> specs,
                               const slicesim::ResourceCapacity& cap) {
    using namespace slicesim;
    if (!s.event.is_arrival()) return Action::Reject;
    return model::fits(s.occupancy, s.event.class_id, specs, cap) ? Action::Accept : Action::Reject;
}

} // namespace testutil
