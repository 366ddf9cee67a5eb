#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slicesim/matrix.hpp"
#include "slicesim/model.hpp"
#include "slicesim/rng.hpp"
#include "slicesim/types.hpp"

namespace slicesim::markov {

/// Occurrence rate of the next event at a given occupancy:
/// sum over classes of arrival rate plus per-slice completion rate.
inline double event_rate(const Occupancy& occ, std::span<const SliceClassSpec> specs) {
    double z = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i)
        z += specs[i].arrival_rate + occ.counts[i] * specs[i].completion_rate;
    return z;
}

/// Uniform rate z = max over all feasible occupancies of event_rate.
inline double uniform_rate(std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                           std::size_t max_states = model::kDefaultStateCeiling) {
    double z = 0.0;
    for (const auto& occ : model::enumerate_states(specs, cap, max_states))
        z = std::max(z, event_rate(occ, specs));
    return z;
}

struct EventProb {
    Event event;
    double probability;
};

/// Event distribution of the uniformized chain at one occupancy:
/// P(arrival c) = lambda_c/z, P(departure c) = n_c*mu_c/z, and the trivial
/// event carries the complement 1 - z_s/z, so the list sums to one exactly.
/// At a rate-maximizing occupancy (z_s = z) the trivial probability is an
/// exact zero and the last real entry absorbs the rounding dust instead.
/// Ordering is arrivals 1..C, departures 1..C (occupied only), trivial last.
inline std::vector<EventProb> event_distribution(const Occupancy& occ, std::span<const SliceClassSpec> specs,
                                                 double z) {
    const double zs = event_rate(occ, specs);
    if (z < zs * (1.0 - 1e-12))
        throw std::invalid_argument("event_distribution: uniform rate below state event rate");
    std::vector<EventProb> out;
    out.reserve(2 * specs.size() + 1);
    double acc = 0.0, acc_before_last = 0.0, rate_acc = 0.0;
    auto push = [&](Event e, double rate) {
        acc_before_last = acc;
        const double p = rate / z;
        out.push_back({e, p});
        acc += p;
        rate_acc += rate;
    };
    for (std::size_t i = 0; i < specs.size(); ++i) push(Event::arrival(static_cast<int>(i) + 1), specs[i].arrival_rate);
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (occ.counts[i] > 0) push(Event::departure(static_cast<int>(i) + 1), occ.counts[i] * specs[i].completion_rate);

    if (rate_acc >= z) {
        // saturated: the last entry absorbs any rounding dust of the others
        out.back().probability = 1.0 - acc_before_last;
        out.push_back({Event::trivial(), 0.0});
    } else {
        out.push_back({Event::trivial(), std::max(0.0, 1.0 - acc)});
    }
    return out;
}

/// Time-invariant admission rule for arrival states: (occupancy, class) -> action.
/// Never maps to Accept where the request does not fit.
class PolicyTable {
  public:
    void set(const Occupancy& occ, int class_id, Action a) { map_[key(occ, class_id)] = a; }

    Action at(const Occupancy& occ, int class_id) const {
        auto it = map_.find(key(occ, class_id));
        if (it == map_.end())
            throw std::invalid_argument("policy missing state " + label(occ) + " class " + std::to_string(class_id));
        return it->second;
    }

    bool contains(const Occupancy& occ, int class_id) const { return map_.count(key(occ, class_id)) > 0; }
    std::size_t size() const { return map_.size(); }

    Action operator()(const SmdpState& s) const {
        if (!s.event.is_arrival()) return Action::Reject;
        return at(s.occupancy, s.event.class_id);
    }

  private:
    static SmdpState key(const Occupancy& occ, int class_id) { return {occ, Event::arrival(class_id)}; }
    std::unordered_map<SmdpState, Action, SmdpStateHash> map_;
};

/// Accept whenever the request fits the remaining capacity.
inline PolicyTable greedy_policy(std::span<const Occupancy> states, std::span<const SliceClassSpec> specs,
                                 const ResourceCapacity& cap) {
    PolicyTable pi;
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= specs.size(); ++c)
            pi.set(occ, static_cast<int>(c),
                   model::fits(occ, static_cast<int>(c), specs, cap) ? Action::Accept : Action::Reject);
    return pi;
}

inline PolicyTable all_reject_policy(std::span<const Occupancy> states, std::span<const SliceClassSpec> specs) {
    PolicyTable pi;
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= specs.size(); ++c) pi.set(occ, static_cast<int>(c), Action::Reject);
    return pi;
}

/// Uniform coin flip per feasible arrival state; infeasible accepts are never emitted.
inline PolicyTable random_policy(std::span<const Occupancy> states, std::span<const SliceClassSpec> specs,
                                 const ResourceCapacity& cap, Rng& rng) {
    PolicyTable pi;
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= specs.size(); ++c) {
            const bool can = model::fits(occ, static_cast<int>(c), specs, cap);
            pi.set(occ, static_cast<int>(c), (can && rng.uniform() < 0.5) ? Action::Accept : Action::Reject);
        }
    return pi;
}

/// One-step transition matrix of the uniformized discrete-time chain over
/// occupancies, with arrival events resolved through a fixed policy.
struct EmbeddedChain {
    std::vector<Occupancy> states;  ///< lexicographic order
    double uniform_rate = 0;        ///< z, events/hour
    Matrix one_step;                ///< row-stochastic

    std::size_t index_of(const Occupancy& occ) const {
        auto it = index_.find(occ);
        if (it == index_.end()) throw std::invalid_argument("occupancy not in chain: " + label(occ));
        return it->second;
    }

    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < states.size(); ++i) index_[states[i]] = i;
    }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(states.size());
        for (const auto& s : states) out.push_back(label(s));
        return out;
    }

  private:
    std::unordered_map<Occupancy, std::size_t, OccupancyHash> index_;
};

inline EmbeddedChain build_embedded_chain(const PolicyTable& policy, std::span<const SliceClassSpec> specs,
                                          const ResourceCapacity& cap,
                                          std::size_t max_states = model::kDefaultStateCeiling) {
    EmbeddedChain chain;
    chain.states = model::enumerate_states(specs, cap, max_states);
    chain.rebuild_index();
    chain.uniform_rate = 0.0;
    for (const auto& occ : chain.states) chain.uniform_rate = std::max(chain.uniform_rate, event_rate(occ, specs));

    const std::size_t n = chain.states.size();
    chain.one_step = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const Occupancy& occ = chain.states[i];
        double self_mass = 1.0;  // complement keeps rows summing to one
        for (const auto& [event, p] : event_distribution(occ, specs, chain.uniform_rate)) {
            if (p == 0.0) continue;
            if (event.kind == EventKind::Trivial) continue;
            if (event.kind == EventKind::Arrival) {
                const Action a = policy.at(occ, event.class_id);
                if (a == Action::Accept) {
                    if (!model::fits(occ, event.class_id, specs, cap))
                        throw std::invalid_argument("policy accepts an infeasible arrival at " + label(occ));
                    const std::size_t j = chain.index_of(model::apply({occ, event}, Action::Accept, specs, cap));
                    chain.one_step(i, j) += p;
                    self_mass -= p;
                }
                // rejected arrivals stay in the self-transition mass
            } else {
                const std::size_t j = chain.index_of(model::apply({occ, event}, Action::Reject, specs, cap));
                chain.one_step(i, j) += p;
                self_mass -= p;
            }
        }
        chain.one_step(i, i) += self_mass;
    }
    return chain;
}

/// Transient distribution of the uniformized process after t hours, starting
/// from state index `from`: the Poisson-weighted series over n-step powers,
/// truncated once the remaining Poisson tail mass drops below tail_tol.
inline std::vector<double> transient_distribution(const EmbeddedChain& chain, std::size_t from, double t,
                                                  double tail_tol = 1e-9) {
    if (!(tail_tol > 0)) throw std::invalid_argument("transient_distribution: tail_tol must be positive");
    if (t < 0) throw std::invalid_argument("transient_distribution: t must be nonnegative");
    const std::size_t n = chain.states.size();
    if (from >= n) throw std::invalid_argument("transient_distribution: state index out of range");

    const double zt = chain.uniform_rate * t;
    std::vector<double> step(n, 0.0);  // e_from * P^k
    step[from] = 1.0;
    std::vector<double> result(n, 0.0);

    double weight = std::exp(-zt);  // Poisson pmf at k = 0
    double cum = weight;
    for (std::size_t j = 0; j < n; ++j) result[j] += weight * step[j];

    const std::size_t max_terms = static_cast<std::size_t>(50.0 * (zt + 20.0)) + 1000;
    for (std::size_t k = 1; 1.0 - cum >= tail_tol; ++k) {
        if (k > max_terms) throw NumericalError("transient_distribution: series failed to reach tail tolerance");
        step = row_times_matrix(step, chain.one_step);
        weight *= zt / static_cast<double>(k);
        cum += weight;
        for (std::size_t j = 0; j < n; ++j) result[j] += weight * step[j];
    }
    return result;
}

inline double transient_probability(const EmbeddedChain& chain, std::size_t from, std::size_t to, double t,
                                    double tail_tol = 1e-9) {
    if (to >= chain.states.size()) throw std::invalid_argument("transient_probability: state index out of range");
    return transient_distribution(chain, from, t, tail_tol)[to];
}

/// Cesaro limit of the powers of a row-stochastic matrix, computed by
/// iterated averaging over doubling windows: A_1 = I and
/// A_2N = (A_N + P^N A_N)/2, stopping once successive averages differ by
/// less than tol in max norm. Handles periodic chains, where the plain
/// power sequence does not converge.
inline Matrix limiting_matrix(const Matrix& p, double tol = 1e-10, std::size_t max_iters = 64) {
    if (p.rows() != p.cols()) throw std::invalid_argument("limiting_matrix: matrix must be square");
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("limiting_matrix: matrix is not row-stochastic");
    }
    // rows of the true P^(2^k) sum to one exactly; renormalizing after each
    // squaring stops floating error from compounding across doublings
    auto renormalize = [](Matrix& m) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) sum += m(i, j);
            if (sum > 0.0)
                for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) /= sum;
        }
    };

    Matrix avg = Matrix::identity(p.rows());
    Matrix power = p;  // P^(2^k)
    for (std::size_t k = 0; k < max_iters; ++k) {
        Matrix shifted = power * avg;
        Matrix next(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.rows(); ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) next(i, j) = 0.5 * (avg(i, j) + shifted(i, j));
        renormalize(next);
        const double diff = max_abs_diff(next, avg);
        avg = std::move(next);
        if (diff < tol) return avg;
        power = power * power;
        renormalize(power);
    }
    throw NumericalError("limiting_matrix: did not converge within " + std::to_string(max_iters) + " doublings");
}

inline Matrix limiting_matrix(const EmbeddedChain& chain, double tol = 1e-10, std::size_t max_iters = 64) {
    return limiting_matrix(chain.one_step, tol, max_iters);
}

/// Exact long-run average reward of a fixed policy: the ratio of limiting
/// expected per-epoch reward to limiting expected epoch duration. Under
/// uniformization every epoch lasts 1/z in expectation, and the per-epoch
/// reward at occupancy s is sum_c (lambda_c/z) r_c over accepted classes.
inline double policy_average_reward(const PolicyTable& policy, std::span<const SliceClassSpec> specs,
                                    const ResourceCapacity& cap, double tol = 1e-10,
                                    std::size_t max_iters = 64,
                                    std::size_t max_states = model::kDefaultStateCeiling) {
    const EmbeddedChain chain = build_embedded_chain(policy, specs, cap, max_states);
    const Matrix limit = limiting_matrix(chain.one_step, tol, max_iters);
    const double z = chain.uniform_rate;

    std::vector<double> reward_per_epoch(chain.states.size(), 0.0);
    for (std::size_t i = 0; i < chain.states.size(); ++i) {
        const Occupancy& occ = chain.states[i];
        for (std::size_t c = 1; c <= specs.size(); ++c)
            if (policy.at(occ, static_cast<int>(c)) == Action::Accept)
                reward_per_epoch[i] += specs[c - 1].arrival_rate / z * specs[c - 1].reward;
    }

    // ratio taken at the zero-occupancy row (row 0 in lexicographic order)
    double numer = 0.0, denom = 0.0;
    for (std::size_t j = 0; j < chain.states.size(); ++j) {
        numer += limit(0, j) * reward_per_epoch[j];
        denom += limit(0, j) * (1.0 / z);
    }
    return numer / denom;
}

/// Canonical enumeration of (occupancy, event) decision states: per
/// occupancy in lexicographic order, arrivals 1..C, then departures of
/// occupied classes, then the trivial event.
struct DecisionSpace {
    std::vector<Occupancy> occupancies;
    std::vector<SmdpState> states;
    double uniform_rate = 0;

    std::size_t state_index(const SmdpState& s) const {
        auto it = index_.find(s);
        if (it == index_.end()) throw std::invalid_argument("decision state not enumerated");
        return it->second;
    }

    static DecisionSpace build(std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                               std::size_t max_states = model::kDefaultStateCeiling) {
        DecisionSpace ds;
        ds.occupancies = model::enumerate_states(specs, cap, max_states);
        for (const auto& occ : ds.occupancies) {
            ds.uniform_rate = std::max(ds.uniform_rate, event_rate(occ, specs));
            for (std::size_t c = 1; c <= specs.size(); ++c)
                ds.states.push_back({occ, Event::arrival(static_cast<int>(c))});
            for (std::size_t c = 1; c <= specs.size(); ++c)
                if (occ.counts[c - 1] > 0) ds.states.push_back({occ, Event::departure(static_cast<int>(c))});
            ds.states.push_back({occ, Event::trivial()});
        }
        for (std::size_t i = 0; i < ds.states.size(); ++i) ds.index_[ds.states[i]] = i;
        return ds;
    }

  private:
    std::unordered_map<SmdpState, std::size_t, SmdpStateHash> index_;
};

struct AverageRewardSolution {
    PolicyTable policy;
    double gain = 0;             ///< reward per hour
    std::vector<double> bias;    ///< relative values, one per decision state
    std::vector<SmdpState> bias_states;
    double residual_span = 0;    ///< Bellman residual span, reward-per-hour units
    std::size_t iterations = 0;
};

/// Optimal average-reward admission policy via relative value iteration on
/// the uniformized discrete-time MDP over (occupancy, event) states.
///
/// Each iteration applies the Bellman operator and re-anchors the values at
/// the reference state (zero occupancy, trivial event). The gain is the
/// reference-state offset per epoch times the uniform rate z; iteration
/// stops when the span of the Bellman residual, in reward-per-hour units,
/// falls below tol. Ties in the greedy step break toward Reject.
inline AverageRewardSolution solve_optimal(std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                                           double tol = 1e-8, std::size_t max_iters = 1000000,
                                           std::size_t max_states = model::kDefaultStateCeiling) {
    if (!(tol > 0)) throw std::invalid_argument("solve_optimal: tol must be positive");
    const DecisionSpace ds = DecisionSpace::build(specs, cap, max_states);
    const double z = ds.uniform_rate;
    const std::size_t nstates = ds.states.size();

    // successor (state index, probability) lists per occupancy
    std::unordered_map<Occupancy, std::vector<std::pair<std::size_t, double>>, OccupancyHash> successors;
    for (const auto& occ : ds.occupancies) {
        std::vector<std::pair<std::size_t, double>> list;
        for (const auto& [event, prob] : event_distribution(occ, specs, z))
            if (prob > 0.0) list.emplace_back(ds.state_index({occ, event}), prob);
        successors[occ] = std::move(list);
    }

    struct Choice {
        double reward;
        const std::vector<std::pair<std::size_t, double>>* next;
    };
    // per state: reject choice always, accept choice only on fitting arrivals
    std::vector<Choice> reject_choice(nstates), accept_choice(nstates);
    std::vector<bool> has_accept(nstates, false);
    for (std::size_t i = 0; i < nstates; ++i) {
        const SmdpState& x = ds.states[i];
        const Occupancy stay = model::apply(x, Action::Reject, specs, cap);
        reject_choice[i] = {0.0, &successors.at(stay)};
        if (x.event.is_arrival() && model::fits(x.occupancy, x.event.class_id, specs, cap)) {
            const Occupancy grown = model::apply(x, Action::Accept, specs, cap);
            accept_choice[i] = {specs[static_cast<std::size_t>(x.event.class_id - 1)].reward, &successors.at(grown)};
            has_accept[i] = true;
        }
    }

    const std::size_t ref = ds.state_index({Occupancy::zero(specs.size()), Event::trivial()});
    std::vector<double> h(nstates, 0.0), w(nstates, 0.0);
    std::vector<bool> accepts(nstates, false);

    double gain_per_epoch = 0.0, span = 0.0;
    std::size_t iter = 0;
    const double tol_per_epoch = tol / z;
    for (;; ++iter) {
        if (iter >= max_iters)
            throw NumericalError("solve_optimal: span " + std::to_string(span * z) + " not below tolerance after " +
                                 std::to_string(max_iters) + " iterations");
        for (std::size_t i = 0; i < nstates; ++i) {
            auto value_of = [&](const Choice& ch) {
                double v = ch.reward;
                for (const auto& [j, p] : *ch.next) v += p * h[j];
                return v;
            };
            const double v_reject = value_of(reject_choice[i]);
            if (has_accept[i]) {
                const double v_accept = value_of(accept_choice[i]);
                accepts[i] = v_accept > v_reject;  // tie -> Reject
                w[i] = accepts[i] ? v_accept : v_reject;
            } else {
                accepts[i] = false;
                w[i] = v_reject;
            }
        }
        double lo = w[0] - h[0], hi = lo;
        for (std::size_t i = 1; i < nstates; ++i) {
            const double d = w[i] - h[i];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        span = hi - lo;
        gain_per_epoch = w[ref] - h[ref];  // h[ref] is 0 after re-anchoring
        const double anchor = w[ref];
        for (std::size_t i = 0; i < nstates; ++i) h[i] = w[i] - anchor;
        if (span < tol_per_epoch) break;
    }

    AverageRewardSolution sol;
    sol.gain = gain_per_epoch * z;
    sol.bias = h;
    sol.bias_states = ds.states;
    sol.residual_span = span * z;
    sol.iterations = iter + 1;
    for (std::size_t i = 0; i < nstates; ++i) {
        const SmdpState& x = ds.states[i];
        if (!x.event.is_arrival()) continue;
        sol.policy.set(x.occupancy, x.event.class_id, accepts[i] ? Action::Accept : Action::Reject);
    }
    return sol;
}

} // namespace slicesim::markov
