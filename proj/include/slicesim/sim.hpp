#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slicesim/markov.hpp"
#include "slicesim/model.hpp"
#include "slicesim/rng.hpp"
#include "slicesim/types.hpp"

namespace slicesim::sim {

enum class Mode { Uniformized, Continuous };

inline const char* to_string(Mode m) { return m == Mode::Uniformized ? "uniformized" : "continuous"; }

/// One decision epoch: the state seen, the action executed, the reward
/// earned, the state after the next event, and the sojourn to that event.
struct TrajectoryStep {
    SmdpState state;
    Action action = Action::Reject;
    double reward = 0;
    SmdpState next_state;
    double sojourn = 0;  ///< hours
};

struct RunMetrics {
    double total_reward = 0;
    double total_time = 0;  ///< hours
    std::int64_t epochs = 0;
    std::vector<std::int64_t> offered;   ///< arrival events per class
    std::vector<std::int64_t> accepted;  ///< accepted arrivals per class
    std::vector<double> occupancy_time;  ///< integral of n_c dt per class
    std::int64_t coerced_accepts = 0;    ///< infeasible accepts coerced to reject
    std::string rng_name;
    std::uint64_t seed = 0;
    Mode mode = Mode::Uniformized;

    double average_reward() const { return total_time > 0 ? total_reward / total_time : 0.0; }

    std::vector<double> mean_occupancy() const {
        std::vector<double> m(occupancy_time.size(), 0.0);
        if (total_time > 0)
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = occupancy_time[i] / total_time;
        return m;
    }
};

/// Draw the next event and the sojourn preceding it.
///
/// Uniformized mode: sojourn ~ Exp(z) and the event comes from the
/// uniformized distribution (trivial events included). Continuous mode:
/// sojourn ~ Exp(z_s) with the event drawn from the raw rates, never
/// trivial; by the equivalence of the two processes both views produce the
/// same law for the continuous-time trajectory.
inline std::pair<Event, double> sample_event(const Occupancy& occ, std::span<const SliceClassSpec> specs, double z,
                                             Mode mode, Rng& rng) {
    const double rate = mode == Mode::Uniformized ? z : markov::event_rate(occ, specs);
    const double sojourn = rng.exponential(rate);
    const double u = rng.uniform() * rate;
    double acc = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        acc += specs[i].arrival_rate;
        if (u < acc) return {Event::arrival(static_cast<int>(i) + 1), sojourn};
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (occ.counts[i] == 0) continue;
        acc += occ.counts[i] * specs[i].completion_rate;
        if (u < acc) return {Event::departure(static_cast<int>(i) + 1), sojourn};
    }
    return {Event::trivial(), sojourn};
}

/// The SMDP environment seen by policies and learning agents. Owns the
/// current (occupancy, event) state; each step resolves the pending event
/// with the supplied action and advances to the next event.
class Environment {
  public:
    Environment(std::vector<SliceClassSpec> specs, ResourceCapacity cap, Mode mode, double uniform_rate)
        : specs_(std::move(specs)), cap_(cap), mode_(mode), z_(uniform_rate) {
        validate_specs(specs_);
        validate_capacity(cap_);
        state_.occupancy = Occupancy::zero(specs_.size());
        state_.event = Event::trivial();
    }

    static Environment make(std::vector<SliceClassSpec> specs, ResourceCapacity cap, Mode mode,
                            std::size_t max_states = model::kDefaultStateCeiling) {
        const double z = markov::uniform_rate(specs, cap, max_states);
        return Environment(std::move(specs), cap, mode, z);
    }

    const SmdpState& state() const { return state_; }
    double uniform_rate() const { return z_; }
    Mode mode() const { return mode_; }
    std::span<const SliceClassSpec> specs() const { return specs_; }
    const ResourceCapacity& capacity() const { return cap_; }

    /// Empty system; the epoch-0 event is drawn fresh.
    void reset(Rng& rng) {
        state_.occupancy = Occupancy::zero(specs_.size());
        state_.event = draw_event(state_.occupancy, rng);
    }

    struct StepOutcome {
        double reward = 0;
        double sojourn = 0;
        Action executed = Action::Reject;
        bool coerced = false;
    };

    /// Resolve the pending event. Infeasible accepts are coerced to reject
    /// (reward 0) rather than erroring: learning agents pick actions before
    /// feasibility is known. Non-arrival events force the no-op.
    StepOutcome step(Action action, Rng& rng) {
        StepOutcome out;
        const Event& ev = state_.event;
        if (ev.is_arrival()) {
            out.executed = action;
            if (action == Action::Accept && !model::fits(state_.occupancy, ev.class_id, specs_, cap_)) {
                out.executed = Action::Reject;
                out.coerced = true;
            }
            if (out.executed == Action::Accept) out.reward = specs_[static_cast<std::size_t>(ev.class_id - 1)].reward;
        } else {
            out.executed = Action::Reject;
        }
        Occupancy next = model::apply({state_.occupancy, ev}, out.executed, specs_, cap_);
        if (!model::feasible(next, specs_, cap_)) throw std::logic_error("environment left the feasible set");
        auto [next_event, sojourn] = sample_event(next, specs_, z_, mode_, rng);
        out.sojourn = sojourn;
        state_ = {std::move(next), next_event};
        return out;
    }

  private:
    Event draw_event(const Occupancy& occ, Rng& rng) {
        // same ladder as sample_event without consuming a sojourn draw
        const double rate = mode_ == Mode::Uniformized ? z_ : markov::event_rate(occ, specs_);
        const double u = rng.uniform() * rate;
        double acc = 0.0;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            acc += specs_[i].arrival_rate;
            if (u < acc) return Event::arrival(static_cast<int>(i) + 1);
        }
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            if (occ.counts[i] == 0) continue;
            acc += occ.counts[i] * specs_[i].completion_rate;
            if (u < acc) return Event::departure(static_cast<int>(i) + 1);
        }
        return Event::trivial();
    }

    std::vector<SliceClassSpec> specs_;
    ResourceCapacity cap_;
    Mode mode_;
    double z_;
    SmdpState state_;
};

/// Run a fixed decision rule for `horizon` epochs and accumulate long-run
/// metrics. The rule is any callable Action(const SmdpState&); it is only
/// consulted on arrival events. The average reward estimator is total
/// reward over total elapsed time.
template <typename DecisionRule>
RunMetrics run(DecisionRule&& decide, std::vector<SliceClassSpec> specs, const ResourceCapacity& cap,
               std::int64_t horizon, Rng& rng, Mode mode, std::vector<TrajectoryStep>* trajectory = nullptr,
               std::uint64_t seed_tag = 0, std::int64_t trajectory_limit = -1) {
    if (horizon < 1) throw std::invalid_argument("run: horizon must be >= 1");
    Environment env = Environment::make(std::move(specs), cap, mode);
    const std::size_t num_classes = env.specs().size();

    RunMetrics m;
    m.offered.assign(num_classes, 0);
    m.accepted.assign(num_classes, 0);
    m.occupancy_time.assign(num_classes, 0.0);
    m.rng_name = Rng::name();
    m.seed = seed_tag;
    m.mode = mode;

    env.reset(rng);
    for (std::int64_t k = 0; k < horizon; ++k) {
        const SmdpState state = env.state();
        Action requested = Action::Reject;
        if (state.event.is_arrival()) {
            requested = decide(state);
            m.offered[static_cast<std::size_t>(state.event.class_id - 1)] += 1;
        }
        const auto out = env.step(requested, rng);
        if (out.coerced) m.coerced_accepts += 1;
        if (state.event.is_arrival() && out.executed == Action::Accept)
            m.accepted[static_cast<std::size_t>(state.event.class_id - 1)] += 1;

        m.total_reward += out.reward;
        m.total_time += out.sojourn;
        m.epochs += 1;
        const SmdpState& next = env.state();
        for (std::size_t c = 0; c < num_classes; ++c)
            m.occupancy_time[c] += next.occupancy.counts[c] * out.sojourn;
        if (trajectory && (trajectory_limit < 0 || static_cast<std::int64_t>(trajectory->size()) < trajectory_limit))
            trajectory->push_back({state, out.executed, out.reward, next, out.sojourn});
    }
    return m;
}

/// Empirical acceptance probability per class, binned by how many more
/// slices of the requesting class would still fit at decision time.
/// Bin 0 collects arrivals that do not fit at all. Bins never offered are
/// absent from the map rather than reported as zero.
struct AcceptanceProfile {
    struct Cell {
        std::int64_t offered = 0;
        std::int64_t accepted = 0;
        double probability() const { return offered > 0 ? static_cast<double>(accepted) / offered : 0.0; }
    };
    std::vector<std::map<int, Cell>> per_class;  ///< [class-1][free_slots] -> cell
};

template <typename DecisionRule>
AcceptanceProfile acceptance_profile(DecisionRule&& decide, std::vector<SliceClassSpec> specs,
                                     const ResourceCapacity& cap, std::int64_t horizon, Rng& rng, Mode mode) {
    Environment env = Environment::make(std::move(specs), cap, mode);
    const std::size_t num_classes = env.specs().size();
    AcceptanceProfile profile;
    profile.per_class.resize(num_classes);

    env.reset(rng);
    for (std::int64_t k = 0; k < horizon; ++k) {
        const SmdpState state = env.state();
        Action requested = Action::Reject;
        int bin = -1;
        if (state.event.is_arrival()) {
            requested = decide(state);
            bin = model::free_slots(state.occupancy, state.event.class_id, env.specs(), cap);
        }
        const auto out = env.step(requested, rng);
        if (bin >= 0) {
            auto& cell = profile.per_class[static_cast<std::size_t>(state.event.class_id - 1)][bin];
            cell.offered += 1;
            if (out.executed == Action::Accept) cell.accepted += 1;
        }
    }
    return profile;
}

/// Trajectory CSV: epoch, n_1..n_C, event_kind, event_class, action, reward, sojourn_hours.
inline void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryStep> steps, std::size_t num_classes) {
    os << "epoch";
    for (std::size_t c = 1; c <= num_classes; ++c) os << ",n_" << c;
    os << ",event_kind,event_class,action,reward,sojourn_hours\n";
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& st = steps[k];
        os << k;
        for (std::size_t c = 0; c < num_classes; ++c) os << ',' << st.state.occupancy.counts[c];
        os << ',' << to_string(st.state.event.kind) << ',' << st.state.event.class_id << ','
           << to_string(st.action) << ',' << format_double(st.reward) << ',' << format_double(st.sojourn, "%.17g")
           << '\n';
    }
}

} // namespace slicesim::sim
