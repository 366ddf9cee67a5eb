#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "slicesim/matrix.hpp"
#include "slicesim/model.hpp"
#include "slicesim/rng.hpp"
#include "slicesim/types.hpp"

namespace slicesim::nn {

/// Fully connected layer, y = W x + b with W stored (out x in).
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }
};

/// Plain MLP: rectifier between layers, linear output.
struct Mlp {
    std::vector<DenseLayer> layers;
};

enum class Arch { SingleHead, Dueling };

/// How the dueling streams recombine: mean-centered advantages (the shipped
/// default) or max-centered advantages, kept behind a flag for comparison.
enum class Combiner { MeanSubtract, MaxSubtract };

inline const char* to_string(Arch a) { return a == Arch::SingleHead ? "single" : "dueling"; }
inline const char* to_string(Combiner c) { return c == Combiner::MeanSubtract ? "mean" : "max"; }

/// Value-network parameters. Single-head: one MLP emitting one Q per
/// action. Dueling: two streams off the shared input feature vector, a
/// scalar state-value stream and an |A|-wide advantage stream, recombined
/// at the output.
struct MlpParams {
    Arch arch = Arch::SingleHead;
    Combiner combiner = Combiner::MeanSubtract;
    Mlp net;        ///< single-head
    Mlp value;      ///< dueling state-value stream
    Mlp advantage;  ///< dueling advantage stream

    std::size_t input_dim() const {
        const Mlp& first = arch == Arch::SingleHead ? net : value;
        return first.layers.empty() ? 0 : first.layers.front().in_dim();
    }
    std::size_t num_actions() const {
        const Mlp& last = arch == Arch::SingleHead ? net : advantage;
        return last.layers.empty() ? 0 : last.layers.back().out_dim();
    }
};

/// Gradients, shape-congruent with the MlpParams they came from.
struct GradientSet {
    Arch arch = Arch::SingleHead;
    Mlp net;
    Mlp value;
    Mlp advantage;
};

namespace detail {

inline DenseLayer init_layer(std::size_t out, std::size_t in, Rng& rng) {
    DenseLayer layer{Matrix(out, in), std::vector<double>(out)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < out; ++i) layer.bias[i] = rng.uniform(-bound, bound);
    return layer;
}

inline Mlp init_mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out, Rng& rng) {
    Mlp mlp;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
        mlp.layers.push_back(init_layer(h, prev, rng));
        prev = h;
    }
    mlp.layers.push_back(init_layer(out, prev, rng));
    return mlp;
}

inline Mlp zeros_like(const Mlp& src) {
    Mlp out;
    out.layers.reserve(src.layers.size());
    for (const auto& l : src.layers)
        out.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
    return out;
}

/// Forward pass keeping each layer's input for the backward sweep.
struct MlpTrace {
    std::vector<std::vector<double>> inputs;  ///< input to each layer
    std::vector<double> output;
};

inline MlpTrace forward_mlp(const Mlp& mlp, std::span<const double> x) {
    if (mlp.layers.empty()) throw std::invalid_argument("forward: empty network");
    if (x.size() != mlp.layers.front().in_dim()) throw std::invalid_argument("forward: feature dimension mismatch");
    MlpTrace trace;
    trace.inputs.reserve(mlp.layers.size());
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
        const DenseLayer& layer = mlp.layers[li];
        if (cur.size() != layer.in_dim()) throw std::invalid_argument("forward: layer dimension mismatch");
        trace.inputs.push_back(cur);
        std::vector<double> next(layer.out_dim());
        for (std::size_t i = 0; i < layer.out_dim(); ++i) {
            double acc = layer.bias[i];
            auto wrow = layer.weights.row(i);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) acc += wrow[j] * cur[j];
            next[i] = acc;
        }
        if (li + 1 < mlp.layers.size())
            for (double& v : next) v = v > 0.0 ? v : 0.0;  // rectifier on hidden layers
        cur = std::move(next);
    }
    trace.output = std::move(cur);
    return trace;
}

/// Backpropagate dL/d(output) through one MLP, accumulating into grad.
inline void backward_mlp(const Mlp& mlp, const MlpTrace& trace, std::vector<double> dout, Mlp& grad) {
    for (std::size_t li = mlp.layers.size(); li-- > 0;) {
        const DenseLayer& layer = mlp.layers[li];
        const auto& input = trace.inputs[li];
        DenseLayer& g = grad.layers[li];
        for (std::size_t i = 0; i < layer.out_dim(); ++i) {
            const double d = dout[i];
            if (d == 0.0) continue;
            g.bias[i] += d;
            auto grow = g.weights.row(i);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) grow[j] += d * input[j];
        }
        if (li == 0) break;
        std::vector<double> din(layer.in_dim(), 0.0);
        for (std::size_t i = 0; i < layer.out_dim(); ++i) {
            const double d = dout[i];
            if (d == 0.0) continue;
            auto wrow = layer.weights.row(i);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) din[j] += d * wrow[j];
        }
        // the stored input of layer li is the rectified output of layer li-1
        for (std::size_t j = 0; j < din.size(); ++j)
            if (input[j] <= 0.0) din[j] = 0.0;
        dout = std::move(din);
    }
}

} // namespace detail

/// Fresh single-head network: hidden rectifier layers, |A| linear outputs.
inline MlpParams make_single_head(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t actions,
                                  Rng& rng) {
    MlpParams p;
    p.arch = Arch::SingleHead;
    p.net = detail::init_mlp(input_dim, hidden, actions, rng);
    return p;
}

/// Fresh dueling network: each stream is one hidden rectifier layer off the
/// shared input; the value head is scalar, the advantage head is |A|-wide.
inline MlpParams make_dueling(std::size_t input_dim, std::size_t hidden_width, std::size_t actions, Rng& rng,
                              Combiner combiner = Combiner::MeanSubtract) {
    MlpParams p;
    p.arch = Arch::Dueling;
    p.combiner = combiner;
    const std::size_t hidden[] = {hidden_width};
    p.value = detail::init_mlp(input_dim, hidden, 1, rng);
    p.advantage = detail::init_mlp(input_dim, hidden, actions, rng);
    return p;
}

/// Action-value vector. Dueling recombination:
///   Q(s,a) = V(s) + (G(s,a) - mean_a' G(s,a'))    (mean combiner)
///   Q(s,a) = V(s) + (G(s,a) - max_a'  G(s,a'))    (max combiner)
inline std::vector<double> forward(const MlpParams& params, std::span<const double> features) {
    if (params.arch == Arch::SingleHead) return detail::forward_mlp(params.net, features).output;
    const double v = detail::forward_mlp(params.value, features).output[0];
    std::vector<double> g = detail::forward_mlp(params.advantage, features).output;
    double center;
    if (params.combiner == Combiner::MeanSubtract)
        center = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    else
        center = *std::max_element(g.begin(), g.end());
    for (double& q : g) q = v + (q - center);
    return g;
}

inline GradientSet zeros_like(const MlpParams& params) {
    GradientSet g;
    g.arch = params.arch;
    if (params.arch == Arch::SingleHead) {
        g.net = detail::zeros_like(params.net);
    } else {
        g.value = detail::zeros_like(params.value);
        g.advantage = detail::zeros_like(params.advantage);
    }
    return g;
}

/// Exact gradients of a scalar loss with respect to every parameter, given
/// dL/dQ at the output. The dueling mean-subtraction routes gradient
/// (delta_{a,b} - 1/|A|) to each advantage output; the value stream
/// receives the sum over actions.
inline GradientSet backward(const MlpParams& params, std::span<const double> features,
                            std::span<const double> dloss_dq) {
    GradientSet grad = zeros_like(params);
    if (params.arch == Arch::SingleHead) {
        auto trace = detail::forward_mlp(params.net, features);
        if (dloss_dq.size() != trace.output.size()) throw std::invalid_argument("backward: gradient size mismatch");
        detail::backward_mlp(params.net, trace, std::vector<double>(dloss_dq.begin(), dloss_dq.end()), grad.net);
        return grad;
    }
    auto vtrace = detail::forward_mlp(params.value, features);
    auto gtrace = detail::forward_mlp(params.advantage, features);
    const std::size_t actions = gtrace.output.size();
    if (dloss_dq.size() != actions) throw std::invalid_argument("backward: gradient size mismatch");

    const double dsum = std::accumulate(dloss_dq.begin(), dloss_dq.end(), 0.0);
    std::vector<double> dg(dloss_dq.begin(), dloss_dq.end());
    if (params.combiner == Combiner::MeanSubtract) {
        for (double& d : dg) d -= dsum / static_cast<double>(actions);
    } else {
        const std::size_t amax = static_cast<std::size_t>(
            std::max_element(gtrace.output.begin(), gtrace.output.end()) - gtrace.output.begin());
        dg[amax] -= dsum;
    }
    detail::backward_mlp(params.value, vtrace, {dsum}, grad.value);
    detail::backward_mlp(params.advantage, gtrace, std::move(dg), grad.advantage);
    return grad;
}

namespace detail {
inline void sgd_apply(Mlp& target, const Mlp& grad, double scale) {
    for (std::size_t li = 0; li < target.layers.size(); ++li) {
        DenseLayer& t = target.layers[li];
        const DenseLayer& g = grad.layers[li];
        for (std::size_t i = 0; i < t.out_dim(); ++i) {
            auto trow = t.weights.row(i);
            auto grow = g.weights.row(i);
            for (std::size_t j = 0; j < t.in_dim(); ++j) {
                if (!std::isfinite(grow[j])) throw NumericalError("sgd_step: non-finite gradient");
                trow[j] += scale * grow[j];
            }
            if (!std::isfinite(g.bias[i])) throw NumericalError("sgd_step: non-finite gradient");
            t.bias[i] += scale * g.bias[i];
        }
    }
}
} // namespace detail

/// Minibatch SGD: average the batch gradients and step against them.
inline void sgd_step(MlpParams& params, std::span<const GradientSet> batch, double learning_rate) {
    if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
    const double scale = -learning_rate / static_cast<double>(batch.size());
    for (const GradientSet& g : batch) {
        if (params.arch == Arch::SingleHead) {
            detail::sgd_apply(params.net, g.net, scale);
        } else {
            detail::sgd_apply(params.value, g.value, scale);
            detail::sgd_apply(params.advantage, g.advantage, scale);
        }
    }
}

enum class FeatureMode { OneHot, ScalarIndex };

inline const char* to_string(FeatureMode m) { return m == FeatureMode::OneHot ? "onehot" : "scalar"; }

inline std::size_t feature_dim(std::size_t num_classes, FeatureMode mode) {
    return mode == FeatureMode::OneHot ? 3 + num_classes : 4;
}

/// Learning features: the three resource utilizations in [0,1] plus the
/// event trigger. The trigger is a one-hot over arrival classes (all zero
/// for departures/trivial events); a scalar class-index encoding is kept
/// behind the ScalarIndex flag.
inline std::vector<double> encode_features(const SmdpState& state, std::span<const SliceClassSpec> specs,
                                           const ResourceCapacity& cap, FeatureMode mode = FeatureMode::OneHot) {
    const ResourceUsage u = model::usage(state.occupancy, specs);
    std::vector<double> f;
    f.reserve(feature_dim(specs.size(), mode));
    f.push_back(static_cast<double>(u.radio) / static_cast<double>(cap.radio));
    f.push_back(static_cast<double>(u.compute) / static_cast<double>(cap.compute));
    f.push_back(static_cast<double>(u.storage) / static_cast<double>(cap.storage));
    if (mode == FeatureMode::OneHot) {
        for (std::size_t c = 1; c <= specs.size(); ++c)
            f.push_back(state.event.is_arrival() && state.event.class_id == static_cast<int>(c) ? 1.0 : 0.0);
    } else {
        f.push_back(state.event.is_arrival()
                        ? static_cast<double>(state.event.class_id) / static_cast<double>(specs.size())
                        : 0.0);
    }
    return f;
}

/// Bundles the feature context so agents can encode states without passing
/// specs/capacity everywhere.
class FeatureEncoder {
  public:
    FeatureEncoder(std::vector<SliceClassSpec> specs, ResourceCapacity cap, FeatureMode mode = FeatureMode::OneHot)
        : specs_(std::move(specs)), cap_(cap), mode_(mode) {}

    std::vector<double> operator()(const SmdpState& s) const { return encode_features(s, specs_, cap_, mode_); }
    std::size_t dim() const { return feature_dim(specs_.size(), mode_); }
    std::span<const SliceClassSpec> specs() const { return specs_; }
    const ResourceCapacity& capacity() const { return cap_; }
    FeatureMode mode() const { return mode_; }

  private:
    std::vector<SliceClassSpec> specs_;
    ResourceCapacity cap_;
    FeatureMode mode_;
};

} // namespace slicesim::nn
