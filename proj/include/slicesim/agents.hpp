#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slicesim/markov.hpp"
#include "slicesim/model.hpp"
#include "slicesim/nn.hpp"
#include "slicesim/rng.hpp"
#include "slicesim/sim.hpp"
#include "slicesim/types.hpp"

namespace slicesim::agents {

/// (state, action, reward, next state); the replay/table unit. The action
/// is the one actually executed (a coerced accept is stored as reject, so
/// the reward invariant of the trajectory holds).
struct Transition {
    SmdpState state;
    Action action = Action::Reject;
    double reward = 0;
    SmdpState next_state;
};

/// Fixed-capacity ring buffer; oldest transitions are evicted first,
/// sampling is uniform over the current contents.
class ReplayMemory {
  public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be positive");
        buffer_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void push(Transition t) {
        if (buffer_.size() < capacity_) {
            buffer_.push_back(std::move(t));
            return;
        }
        buffer_[write_] = std::move(t);
        write_ = (write_ + 1) % capacity_;
    }

    const Transition& sample(Rng& rng) const {
        if (buffer_.empty()) throw std::logic_error("ReplayMemory: sample from empty buffer");
        return buffer_[rng.bounded(buffer_.size())];
    }

    std::size_t size() const { return buffer_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return buffer_[i]; }

  private:
    std::vector<Transition> buffer_;
    std::size_t capacity_;
    std::size_t write_ = 0;
};

/// Tabular action values. Arrival states carry a (reject, accept) pair;
/// departure/trivial states carry a single no-op entry, so bootstrap maxima
/// at non-arrival next states read the one admissible value.
class QTable {
  public:
    struct Row {
        std::array<double, 2> q{0.0, 0.0};
        std::array<std::int64_t, 2> visits{0, 0};
        int actions = 1;
    };

    static int action_count(const SmdpState& s) { return s.event.is_arrival() ? 2 : 1; }

    Row& row(const SmdpState& s) {
        auto [it, inserted] = map_.try_emplace(s);
        if (inserted) it->second.actions = action_count(s);
        return it->second;
    }

    const Row* find(const SmdpState& s) const {
        auto it = map_.find(s);
        return it == map_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return map_.size(); }

  private:
    std::unordered_map<SmdpState, Row, SmdpStateHash> map_;
};

/// Indices into a Q row that the agent could actually execute at `s`:
/// reject always; accept only on arrivals that fit.
inline bool accept_admissible(const SmdpState& s, std::span<const SliceClassSpec> specs,
                              const ResourceCapacity& cap) {
    return s.event.is_arrival() && model::fits(s.occupancy, s.event.class_id, specs, cap);
}

inline double admissible_max(std::span<const double> q, const SmdpState& s, std::span<const SliceClassSpec> specs,
                             const ResourceCapacity& cap) {
    if (q.size() >= 2 && accept_admissible(s, specs, cap)) return std::max(q[0], q[1]);
    return q[0];
}

inline std::size_t admissible_argmax(std::span<const double> q, const SmdpState& s,
                                     std::span<const SliceClassSpec> specs, const ResourceCapacity& cap) {
    if (q.size() >= 2 && accept_admissible(s, specs, cap)) return q[1] > q[0] ? 1 : 0;  // tie -> reject
    return 0;
}

/// Baseline: accept whenever the request fits the remaining capacity.
inline Action greedy_act(const SmdpState& state, std::span<const SliceClassSpec> specs,
                         const ResourceCapacity& cap) {
    if (!state.event.is_arrival()) return Action::Reject;
    return model::fits(state.occupancy, state.event.class_id, specs, cap) ? Action::Accept : Action::Reject;
}

/// Random action with probability epsilon, otherwise the argmax.
/// Ties break toward Reject (index 0).
inline Action epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng) {
    if (q_values.empty()) throw std::invalid_argument("epsilon_greedy: empty value row");
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon_greedy: epsilon outside [0,1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<Action>(rng.bounded(q_values.size()));
    std::size_t best = 0;
    for (std::size_t i = 1; i < q_values.size(); ++i)
        if (q_values[i] > q_values[best]) best = i;
    return static_cast<Action>(best);
}

/// Visit-count learning rate 1/(1+visits)^0.6, clipped below 1 so the
/// classic convergence conditions hold (sum infinite, sum of squares finite).
inline double tabular_alpha(std::int64_t visits) {
    if (visits < 0) throw std::invalid_argument("tabular_alpha: negative visit count");
    return std::min(0.99, std::pow(1.0 + static_cast<double>(visits), -0.6));
}

/// One Q-learning backup: Q(s,a) += alpha * (r + gamma * max_adm Q(s',.) - Q(s,a)).
/// Returns the temporal difference before the step. Never-seen next states
/// bootstrap from zero.
inline double q_update(QTable& table, const Transition& step, double gamma, double alpha,
                       std::span<const SliceClassSpec> specs, const ResourceCapacity& cap) {
    if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("q_update: alpha outside [0,1)");
    double next_max = 0.0;
    if (const QTable::Row* next = table.find(step.next_state))
        next_max = admissible_max(std::span<const double>(next->q.data(), static_cast<std::size_t>(next->actions)),
                                  step.next_state, specs, cap);
    QTable::Row& row = table.row(step.state);
    const auto idx = static_cast<std::size_t>(step.action);
    if (static_cast<int>(idx) >= row.actions) throw std::invalid_argument("q_update: action not available in state");
    const double td = step.reward + gamma * next_max - row.q[idx];
    row.q[idx] += alpha * td;
    return td;
}

/// Target for deep double Q-learning. Default nesting: the action is
/// selected by the target network's values and evaluated by the primary
/// network. The canonical double-DQN nesting (select with primary,
/// evaluate with target) sits behind the `canonical` flag.
inline double double_q_target(const nn::MlpParams& primary, const nn::MlpParams& target, const Transition& t,
                              double gamma, const nn::FeatureEncoder& enc, bool canonical = false) {
    const std::vector<double> feats = enc(t.next_state);
    const std::vector<double> q_target = nn::forward(target, feats);
    const std::vector<double> q_primary = nn::forward(primary, feats);
    if (q_target.size() != q_primary.size()) throw std::invalid_argument("double_q_target: network size mismatch");
    const auto& selector = canonical ? q_primary : q_target;
    const auto& evaluator = canonical ? q_target : q_primary;
    const std::size_t best = admissible_argmax(selector, t.next_state, enc.specs(), enc.capacity());
    return t.reward + gamma * evaluator[best];
}

/// Target for the dueling agent: plain max over the target network's
/// action values at the next state.
inline double dueling_target(const nn::MlpParams& target, const Transition& t, double gamma,
                             const nn::FeatureEncoder& enc) {
    const std::vector<double> q = nn::forward(target, enc(t.next_state));
    return t.reward + gamma * admissible_max(q, t.next_state, enc.specs(), enc.capacity());
}

enum class AgentKind { Greedy, Tabular, DoubleQ, Dueling };

inline const char* to_string(AgentKind k) {
    switch (k) {
    case AgentKind::Greedy: return "greedy";
    case AgentKind::Tabular: return "tabular";
    case AgentKind::DoubleQ: return "double";
    default: return "dueling";
    }
}

inline AgentKind agent_kind_from(const std::string& name) {
    if (name == "greedy") return AgentKind::Greedy;
    if (name == "tabular") return AgentKind::Tabular;
    if (name == "double") return AgentKind::DoubleQ;
    if (name == "dueling") return AgentKind::Dueling;
    throw ConfigError("unknown agent kind '" + name + "'");
}

struct TrainConfig {
    double gamma = 0.99;
    double epsilon_start = 1.0;
    double epsilon_end = 0.1;
    double epsilon_decay_fraction = 0.8;  ///< share of episodes over which epsilon decays linearly
    double learning_rate = 0.01;          ///< deep-agent SGD step
    int minibatch = 64;                   ///< D'
    int replay_capacity = 10000;          ///< D
    int target_sync = 1000;               ///< sync the target network every this many steps
    std::int64_t episodes = 20000;        ///< T
    int hidden_width = 64;
    bool store_nonarrival = true;         ///< also train on departure/trivial transitions
    bool double_q_canonical = false;      ///< canonical double-DQN nesting (select primary, evaluate target)
    nn::Combiner combiner = nn::Combiner::MeanSubtract;
    nn::FeatureMode features = nn::FeatureMode::OneHot;
    std::int64_t warmup = -1;             ///< learning starts at this buffer fill; -1 means minibatch size
    std::int64_t curve_interval = 0;      ///< curve sample stride; 0 picks ~2000 samples
    int curve_window = 1000;              ///< sliding-window width for the windowed average

    double epsilon_at(std::int64_t episode) const {
        const double horizon = epsilon_decay_fraction * static_cast<double>(episodes);
        if (horizon <= 0) return epsilon_end;
        const double progress = std::min(1.0, static_cast<double>(episode - 1) / horizon);
        return epsilon_start + (epsilon_end - epsilon_start) * progress;
    }

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("train.gamma must be in [0,1)");
        if (epsilon_end > epsilon_start) throw ConfigError("train.epsilon_end must not exceed epsilon_start");
        if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0)
            throw ConfigError("train.epsilon values must be in [0,1]");
        if (epsilon_decay_fraction < 0.0 || epsilon_decay_fraction > 1.0)
            throw ConfigError("train.epsilon_decay_fraction must be in [0,1]");
        if (minibatch < 1) throw ConfigError("train.minibatch must be >= 1");
        if (replay_capacity < minibatch) throw ConfigError("train.minibatch must not exceed replay capacity");
        if (target_sync < 1) throw ConfigError("train.target_sync must be >= 1");
        if (episodes < 0) throw ConfigError("train.episodes must be >= 0");
        if (hidden_width < 1) throw ConfigError("train.hidden_width must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
        if (curve_window < 1) throw ConfigError("train.curve_window must be >= 1");
    }
};

struct LearningCurvePoint {
    std::int64_t episode = 0;
    double avg_reward = 0;         ///< cumulative reward / cumulative time since episode 0
    double window_avg_reward = 0;  ///< same estimator over the trailing window
    double epsilon = 0;
    double loss = 0;               ///< last minibatch mean squared TD error
};

struct TrainResult {
    AgentKind kind = AgentKind::Greedy;
    QTable table;                 ///< tabular agent
    nn::MlpParams params;         ///< deep agents (primary network)
    nn::MlpParams target_params;  ///< target network as of the last episode
    std::vector<LearningCurvePoint> curve;
    sim::RunMetrics metrics;      ///< accumulated over the training run
    std::int64_t gradient_steps = 0;
    std::int64_t target_syncs = 0;
};

/// Greedy decision rule of a trained agent at one state, Accept only where
/// it fits; ties and unseen states fall back to Reject.
inline Action act_greedy_from_values(const TrainResult& result, const SmdpState& state,
                                     std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                                     const nn::FeatureEncoder& enc) {
    if (!state.event.is_arrival()) return Action::Reject;
    switch (result.kind) {
    case AgentKind::Greedy:
        return greedy_act(state, specs, cap);
    case AgentKind::Tabular: {
        if (!accept_admissible(state, specs, cap)) return Action::Reject;
        const QTable::Row* row = result.table.find(state);
        if (!row || row->actions < 2) return Action::Reject;
        return row->q[1] > row->q[0] ? Action::Accept : Action::Reject;
    }
    default: {
        if (!accept_admissible(state, specs, cap)) return Action::Reject;
        const std::vector<double> q = nn::forward(result.params, enc(state));
        return q[1] > q[0] ? Action::Accept : Action::Reject;
    }
    }
}

/// Materialize the trained agent's greedy policy over an enumerated state
/// space, for exact evaluation against the embedded-chain machinery.
inline markov::PolicyTable extract_policy(const TrainResult& result, std::span<const Occupancy> states,
                                          std::span<const SliceClassSpec> specs, const ResourceCapacity& cap,
                                          const nn::FeatureEncoder& enc) {
    markov::PolicyTable pi;
    for (const auto& occ : states)
        for (std::size_t c = 1; c <= specs.size(); ++c) {
            const SmdpState s{occ, Event::arrival(static_cast<int>(c))};
            pi.set(occ, static_cast<int>(c), act_greedy_from_values(result, s, specs, cap, enc));
        }
    return pi;
}

/// Episode loop shared by the tabular and deep agents: epsilon-greedy act,
/// environment step, store, minibatch backup, periodic target sync. One
/// episode is one uniformized decision epoch, and the emitted curve tracks
/// the time-average reward since episode 0 plus a sliding-window variant.
inline TrainResult train(AgentKind kind, std::vector<SliceClassSpec> specs, const ResourceCapacity& cap,
                         const TrainConfig& cfg, Rng& rng, sim::Mode mode = sim::Mode::Uniformized) {
    cfg.validate();
    validate_specs(specs);
    validate_capacity(cap);

    sim::Environment env = sim::Environment::make(specs, cap, mode);
    const std::size_t num_classes = specs.size();
    nn::FeatureEncoder enc(specs, cap, cfg.features);

    TrainResult res;
    res.kind = kind;
    res.metrics.offered.assign(num_classes, 0);
    res.metrics.accepted.assign(num_classes, 0);
    res.metrics.occupancy_time.assign(num_classes, 0.0);
    res.metrics.rng_name = Rng::name();
    res.metrics.mode = mode;

    const bool deep = kind == AgentKind::DoubleQ || kind == AgentKind::Dueling;
    if (kind == AgentKind::DoubleQ) {
        const std::size_t hidden[] = {static_cast<std::size_t>(cfg.hidden_width),
                                      static_cast<std::size_t>(cfg.hidden_width)};
        res.params = nn::make_single_head(enc.dim(), hidden, 2, rng);
    } else if (kind == AgentKind::Dueling) {
        res.params = nn::make_dueling(enc.dim(), static_cast<std::size_t>(cfg.hidden_width), 2, rng, cfg.combiner);
    }
    nn::MlpParams target = res.params;
    ReplayMemory replay(static_cast<std::size_t>(std::max(cfg.replay_capacity, 1)));
    const std::int64_t warmup = std::max<std::int64_t>(cfg.warmup < 0 ? cfg.minibatch : cfg.warmup, cfg.minibatch);

    const std::int64_t stride =
        cfg.curve_interval > 0 ? cfg.curve_interval : std::max<std::int64_t>(1, cfg.episodes / 2000);

    // trailing-window accumulators for the windowed average reward
    std::vector<double> win_rewards(static_cast<std::size_t>(cfg.curve_window), 0.0);
    std::vector<double> win_sojourns(static_cast<std::size_t>(cfg.curve_window), 0.0);
    double win_reward_sum = 0.0, win_sojourn_sum = 0.0;

    std::vector<nn::GradientSet> grads;
    double last_loss = 0.0;

    env.reset(rng);
    for (std::int64_t episode = 1; episode <= cfg.episodes; ++episode) {
        const double eps = cfg.epsilon_at(episode);
        const SmdpState state = env.state();

        Action requested = Action::Reject;
        if (state.event.is_arrival()) {
            switch (kind) {
            case AgentKind::Greedy:
                requested = greedy_act(state, specs, cap);
                break;
            case AgentKind::Tabular: {
                const QTable::Row& row = res.table.row(state);
                requested = epsilon_greedy(std::span<const double>(row.q.data(), 2), eps, rng);
                break;
            }
            default: {
                const std::vector<double> q = nn::forward(res.params, enc(state));
                requested = epsilon_greedy(q, eps, rng);
                break;
            }
            }
        }

        const auto out = env.step(requested, rng);
        const SmdpState& next = env.state();
        const Transition transition{state, out.executed, out.reward, next};

        if (state.event.is_arrival()) {
            res.metrics.offered[static_cast<std::size_t>(state.event.class_id - 1)] += 1;
            if (out.executed == Action::Accept)
                res.metrics.accepted[static_cast<std::size_t>(state.event.class_id - 1)] += 1;
        }
        if (out.coerced) res.metrics.coerced_accepts += 1;
        res.metrics.total_reward += out.reward;
        res.metrics.total_time += out.sojourn;
        res.metrics.epochs += 1;
        for (std::size_t c = 0; c < num_classes; ++c)
            res.metrics.occupancy_time[c] += next.occupancy.counts[c] * out.sojourn;

        const bool learn_on = state.event.is_arrival() || cfg.store_nonarrival;
        if (kind == AgentKind::Tabular && learn_on) {
            const auto idx = static_cast<std::size_t>(out.executed);
            const double alpha = tabular_alpha(res.table.row(state).visits[idx]);
            const double td = q_update(res.table, transition, cfg.gamma, alpha, specs, cap);
            res.table.row(state).visits[idx] += 1;
            last_loss = td * td;
        } else if (deep) {
            if (learn_on) replay.push(transition);
            if (static_cast<std::int64_t>(replay.size()) >= warmup) {
                grads.clear();
                double batch_loss = 0.0;
                for (int j = 0; j < cfg.minibatch; ++j) {
                    const Transition& t = replay.sample(rng);
                    const double y = kind == AgentKind::DoubleQ
                                         ? double_q_target(res.params, target, t, cfg.gamma, enc,
                                                           cfg.double_q_canonical)
                                         : dueling_target(target, t, cfg.gamma, enc);
                    const std::vector<double> feats = enc(t.state);
                    const std::vector<double> q = nn::forward(res.params, feats);
                    const auto idx = static_cast<std::size_t>(t.action);
                    const double err = q[idx] - y;
                    batch_loss += err * err;
                    std::vector<double> dq(q.size(), 0.0);
                    dq[idx] = 2.0 * err;
                    grads.push_back(nn::backward(res.params, feats, dq));
                }
                try {
                    nn::sgd_step(res.params, grads, cfg.learning_rate);
                } catch (const NumericalError& e) {
                    throw NumericalError("train: divergent loss at episode " + std::to_string(episode) + " (" +
                                         e.what() + ", last minibatch loss " + std::to_string(batch_loss) + ")");
                }
                res.gradient_steps += 1;
                last_loss = batch_loss / cfg.minibatch;
            }
            if (episode % cfg.target_sync == 0) {
                target = res.params;
                res.target_syncs += 1;
            }
        }

        const auto slot = static_cast<std::size_t>((episode - 1) % cfg.curve_window);
        win_reward_sum += out.reward - win_rewards[slot];
        win_sojourn_sum += out.sojourn - win_sojourns[slot];
        win_rewards[slot] = out.reward;
        win_sojourns[slot] = out.sojourn;

        if (episode % stride == 0 || episode == cfg.episodes) {
            LearningCurvePoint pt;
            pt.episode = episode;
            pt.avg_reward = res.metrics.average_reward();
            pt.window_avg_reward = win_sojourn_sum > 0 ? win_reward_sum / win_sojourn_sum : 0.0;
            pt.epsilon = eps;
            pt.loss = last_loss;
            res.curve.push_back(pt);
        }
    }
    if (deep) res.target_params = std::move(target);
    return res;
}

} // namespace slicesim::agents
