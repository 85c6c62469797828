#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relrank/featurizer.hpp"
#include "relrank/rng.hpp"

namespace relrank {

inline double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 30.0) {
        return x;  // log1p(exp(x)) == x to double precision here
    }
    return std::log1p(std::exp(x));
}

// Probabilities are clamped away from {0,1} so cross-entropy stays finite.
inline constexpr double kProbEps = 1e-12;

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

enum class HeadKind { ordinal, softmax3, regression };

inline std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::ordinal: return "ordinal";
        case HeadKind::softmax3: return "softmax3";
        case HeadKind::regression: return "regression";
    }
    throw std::logic_error("unreachable head kind");
}

inline HeadKind head_kind_from_name(const std::string& name) {
    if (name == "ordinal") return HeadKind::ordinal;
    if (name == "softmax3") return HeadKind::softmax3;
    if (name == "regression") return HeadKind::regression;
    throw std::runtime_error("unknown head kind '" + name +
                             "' (expected ordinal, softmax3, or regression)");
}

inline std::size_t rel_head_arity(HeadKind k) {
    return k == HeadKind::softmax3 ? 3 : 1;
}

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;  // out

    bool operator==(const DenseLayer&) const = default;
};

struct ArchConfig {
    std::vector<std::size_t> shared = {64, 32};
    std::vector<std::size_t> tower = {16};

    bool operator==(const ArchConfig&) const = default;
};

// Minimum cutpoint gap; theta2 = theta1 + max(softplus(delta), kGapFloor)
// keeps theta2 > theta1 for every real delta.
inline constexpr double kGapFloor = 1e-3;

struct ModelParams {
    std::size_t input_dim = 0;
    ArchConfig arch;
    HeadKind head_kind = HeadKind::ordinal;
    std::vector<DenseLayer> shared;
    std::vector<DenseLayer> tower_ctr;  // hidden layers plus a final linear projection
    std::vector<DenseLayer> tower_atc;
    std::vector<DenseLayer> tower_cvr;
    std::vector<DenseLayer> tower_rel;
    double theta1 = -0.5;
    double delta = 0.0;
    std::uint64_t layout_fingerprint = 0;
    std::uint64_t init_seed = 0;

    double gap() const { return std::max(softplus(delta), kGapFloor); }
    double theta2() const { return theta1 + gap(); }

    bool operator==(const ModelParams&) const = default;
};

namespace detail {

inline DenseLayer make_layer(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) {
        throw std::runtime_error("zero-width layer in architecture");
    }
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(in * out);
    layer.b.assign(out, 0.0);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));  // He fan-in
    for (double& v : layer.w) {
        v = rng.normal() * scale;
    }
    return layer;
}

inline std::vector<DenseLayer> make_stack(std::size_t in, const std::vector<std::size_t>& widths,
                                          std::size_t out_arity, Rng& rng) {
    std::vector<DenseLayer> layers;
    std::size_t cur = in;
    for (std::size_t w : widths) {
        layers.push_back(make_layer(cur, w, rng));
        cur = w;
    }
    if (out_arity > 0) {
        layers.push_back(make_layer(cur, out_arity, rng));
    }
    return layers;
}

}  // namespace detail

// delta value with softplus(delta) == 1, so theta2 - theta1 == 1.0 at init.
inline constexpr double kInitDelta = 0.5413248546129181;

inline ModelParams init_params(std::size_t input_dim, const ArchConfig& arch, HeadKind head_kind,
                               std::uint64_t seed) {
    if (input_dim == 0) {
        throw std::runtime_error("input dimension must be >= 1");
    }
    for (std::size_t w : arch.shared) {
        if (w == 0) throw std::runtime_error("zero-width layer in architecture");
    }
    for (std::size_t w : arch.tower) {
        if (w == 0) throw std::runtime_error("zero-width layer in architecture");
    }
    ModelParams p;
    p.input_dim = input_dim;
    p.arch = arch;
    p.head_kind = head_kind;
    p.init_seed = seed;
    Rng rng(seed);
    p.shared = detail::make_stack(input_dim, arch.shared, 0, rng);
    const std::size_t shared_out = arch.shared.empty() ? input_dim : arch.shared.back();
    p.tower_ctr = detail::make_stack(shared_out, arch.tower, 1, rng);
    p.tower_atc = detail::make_stack(shared_out, arch.tower, 1, rng);
    p.tower_cvr = detail::make_stack(shared_out, arch.tower, 1, rng);
    p.tower_rel = detail::make_stack(shared_out, arch.tower, rel_head_arity(head_kind), rng);
    p.theta1 = -0.5;
    p.delta = kInitDelta;
    return p;
}

struct LayerTrace {
    std::vector<double> pre;
    std::vector<double> act;
};

struct StackTrace {
    std::vector<LayerTrace> layers;
};

struct ForwardTrace {
    std::vector<double> input;
    StackTrace shared;  // every layer ReLU
    StackTrace ctr;     // hidden layers ReLU, final layer linear
    StackTrace atc;
    StackTrace cvr;
    StackTrace rel;
};

struct HeadOutputs {
    double y_ctr = 0.5;
    double y_atc = 0.5;
    double y_cvr = 0.5;
    double ctr_logit = 0.0;
    double atc_logit = 0.0;
    double cvr_logit = 0.0;
    std::vector<double> rel_raw;  // relevance tower output: {z}, 3 logits, or {raw}
    double rel_latent = 0.0;      // ordinal latent z (regression: raw value)
    double p_ge1 = 0.5;
    double p_ge2 = 0.5;
    double s_rel = 1.0;
};

// Margin cap for the cumulative head. At 27 the sigmoid stays strictly
// outside the kProbEps clamp band (1 - sigmoid(27) is about 1.9e-12), so the
// downstream clamp cannot flatten the pair, and the slope still resolves a
// cutpoint gap of kGapFloor in double precision (sigmoid'(27) * 1e-3 is about
// 17 ulps of 1.0).
inline constexpr double kOrdinalMarginCap = 27.0;

// Cumulative-link probabilities p(r>=k) = sigmoid(z - theta_k). The first
// margin is capped and the second derived from it by subtracting the exact
// gap, so p_ge1 > p_ge2 holds strictly for every finite z; raw sigmoids would
// both round to 0 or 1 once z - theta saturates.
inline std::pair<double, double> ordinal_probs(double z, double theta1, double theta2) {
    if (!(theta2 > theta1)) {
        throw std::invalid_argument("ordinal_probs: requires theta2 > theta1");
    }
    const double u = std::clamp(z - theta1, -kOrdinalMarginCap, kOrdinalMarginCap);
    return {stable_sigmoid(u), stable_sigmoid(u - (theta2 - theta1))};
}

inline double scalar_relevance(const HeadOutputs& outputs) {
    return outputs.p_ge1 + outputs.p_ge2;  // expected grade
}

struct RelScalars {
    double p_ge1 = 0.0;
    double p_ge2 = 0.0;
    double s_rel = 0.0;
};

inline RelScalars head_scalar_softmax(const std::vector<double>& logits) {
    if (logits.size() != 3) {
        throw std::invalid_argument("head_scalar_softmax: expects exactly 3 logits");
    }
    const double m = std::max({logits[0], logits[1], logits[2]});
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double e2 = std::exp(logits[2] - m);
    const double z = e0 + e1 + e2;
    const double p1 = e1 / z;
    const double p2 = e2 / z;
    return {p1 + p2, p2, p1 + 2.0 * p2};
}

inline RelScalars head_scalar_regression(double raw) {
    const double s = std::clamp(raw, 0.0, 2.0);
    return {std::clamp(s, 0.0, 1.0), std::clamp(s - 1.0, 0.0, 1.0), s};
}

namespace detail {

// Runs layers on input; ReLU after every layer except, when final_linear,
// the last one (its act is the identity). Trace keeps pre and act per layer.
inline void run_stack(const std::vector<DenseLayer>& layers, const std::vector<double>& input,
                      bool final_linear, StackTrace& trace) {
    trace.layers.clear();
    trace.layers.resize(layers.size());
    const std::vector<double>* cur = &input;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const DenseLayer& layer = layers[li];
        if (cur->size() != layer.in) {
            throw std::runtime_error("layer input dimension mismatch");
        }
        LayerTrace& lt = trace.layers[li];
        lt.pre.resize(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double z = layer.b[o];
            const double* wrow = layer.w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) {
                z += wrow[i] * (*cur)[i];
            }
            lt.pre[o] = z;
        }
        const bool relu = !(final_linear && li + 1 == layers.size());
        if (relu) {
            lt.act.resize(layer.out);
            for (std::size_t o = 0; o < layer.out; ++o) {
                lt.act[o] = lt.pre[o] > 0.0 ? lt.pre[o] : 0.0;
            }
        } else {
            lt.act = lt.pre;
        }
        cur = &lt.act;
    }
}

inline const std::vector<double>& stack_output(const StackTrace& trace,
                                               const std::vector<double>& input) {
    return trace.layers.empty() ? input : trace.layers.back().act;
}

}  // namespace detail

inline std::pair<HeadOutputs, ForwardTrace> forward(const ModelParams& params,
                                                    const FeatureVector& x) {
    if (x.values.size() != params.input_dim) {
        throw std::runtime_error("feature vector length " + std::to_string(x.values.size()) +
                                 " does not match model input dim " +
                                 std::to_string(params.input_dim));
    }
    if (x.layout_fingerprint != 0 && params.layout_fingerprint != 0 &&
        x.layout_fingerprint != params.layout_fingerprint) {
        throw std::runtime_error("feature layout fingerprint does not match the model");
    }
    ForwardTrace trace;
    trace.input = x.values;
    detail::run_stack(params.shared, trace.input, false, trace.shared);
    const std::vector<double>& h = detail::stack_output(trace.shared, trace.input);
    detail::run_stack(params.tower_ctr, h, true, trace.ctr);
    detail::run_stack(params.tower_atc, h, true, trace.atc);
    detail::run_stack(params.tower_cvr, h, true, trace.cvr);
    detail::run_stack(params.tower_rel, h, true, trace.rel);

    HeadOutputs out;
    out.ctr_logit = trace.ctr.layers.back().act[0];
    out.atc_logit = trace.atc.layers.back().act[0];
    out.cvr_logit = trace.cvr.layers.back().act[0];
    out.y_ctr = clamp_prob(stable_sigmoid(out.ctr_logit));
    out.y_atc = clamp_prob(stable_sigmoid(out.atc_logit));
    out.y_cvr = clamp_prob(stable_sigmoid(out.cvr_logit));
    out.rel_raw = trace.rel.layers.back().act;
    switch (params.head_kind) {
        case HeadKind::ordinal: {
            const double z = out.rel_raw[0];
            out.rel_latent = z;
            auto [p1, p2] = ordinal_probs(z, params.theta1, params.theta2());
            out.p_ge1 = clamp_prob(p1);
            out.p_ge2 = clamp_prob(p2);
            out.s_rel = out.p_ge1 + out.p_ge2;
            break;
        }
        case HeadKind::softmax3: {
            const RelScalars rs = head_scalar_softmax(out.rel_raw);
            out.rel_latent = rs.s_rel;
            out.p_ge1 = rs.p_ge1;
            out.p_ge2 = rs.p_ge2;
            out.s_rel = rs.s_rel;
            break;
        }
        case HeadKind::regression: {
            const RelScalars rs = head_scalar_regression(out.rel_raw[0]);
            out.rel_latent = out.rel_raw[0];
            out.p_ge1 = rs.p_ge1;
            out.p_ge2 = rs.p_ge2;
            out.s_rel = rs.s_rel;
            break;
        }
    }
    return {out, trace};
}

struct LayerGrads {
    std::vector<double> w;
    std::vector<double> b;
};

struct ModelGrads {
    std::vector<LayerGrads> shared;
    std::vector<LayerGrads> tower_ctr;
    std::vector<LayerGrads> tower_atc;
    std::vector<LayerGrads> tower_cvr;
    std::vector<LayerGrads> tower_rel;
    double theta1 = 0.0;
    double delta = 0.0;
};

// Upstream gradient seeds, expressed at pre-activation level (per-head
// logits) plus direct cutpoint gradients for the ordinal loss.
struct LossSeeds {
    double d_ctr_logit = 0.0;
    double d_atc_logit = 0.0;
    double d_cvr_logit = 0.0;
    std::vector<double> d_rel;  // dL/d(relevance tower output), arity per head
    double d_theta1 = 0.0;
    double d_theta2 = 0.0;
};

namespace detail {

inline std::vector<LayerGrads> zero_grads_for(const std::vector<DenseLayer>& layers) {
    std::vector<LayerGrads> grads(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        grads[i].w.assign(layers[i].w.size(), 0.0);
        grads[i].b.assign(layers[i].b.size(), 0.0);
    }
    return grads;
}

// d_out is the gradient at the final pre-activation when final_linear, else
// at the final post-ReLU activation. Returns the gradient at the stack input.
inline std::vector<double> backprop_stack(const std::vector<DenseLayer>& layers,
                                          const StackTrace& trace,
                                          const std::vector<double>& input,
                                          std::vector<double> d_out, bool final_linear,
                                          std::vector<LayerGrads>& grads) {
    if (layers.empty()) {
        return d_out;
    }
    if (trace.layers.size() != layers.size()) {
        throw std::runtime_error("trace does not match parameter stack");
    }
    std::vector<double> d_pre = std::move(d_out);
    for (std::size_t li = layers.size(); li-- > 0;) {
        const DenseLayer& layer = layers[li];
        const LayerTrace& lt = trace.layers[li];
        const bool relu = !(final_linear && li + 1 == layers.size());
        if (relu) {
            for (std::size_t o = 0; o < layer.out; ++o) {
                if (lt.pre[o] <= 0.0) {
                    d_pre[o] = 0.0;
                }
            }
        }
        const std::vector<double>& layer_in = li == 0 ? input : trace.layers[li - 1].act;
        LayerGrads& lg = grads[li];
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double d = d_pre[o];
            lg.b[o] += d;
            double* gw = lg.w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) {
                gw[i] += d * layer_in[i];
            }
        }
        std::vector<double> d_in(layer.in, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double d = d_pre[o];
            const double* wrow = layer.w.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) {
                d_in[i] += d * wrow[i];
            }
        }
        d_pre = std::move(d_in);
    }
    return d_pre;
}

}  // namespace detail

inline ModelGrads zero_grads(const ModelParams& params) {
    ModelGrads g;
    g.shared = detail::zero_grads_for(params.shared);
    g.tower_ctr = detail::zero_grads_for(params.tower_ctr);
    g.tower_atc = detail::zero_grads_for(params.tower_atc);
    g.tower_cvr = detail::zero_grads_for(params.tower_cvr);
    g.tower_rel = detail::zero_grads_for(params.tower_rel);
    return g;
}

// Exact analytic gradients for one sample, accumulated into grads. The
// cutpoint chain runs through theta2 = theta1 + max(softplus(delta), floor):
// d/d theta1 collects both cutpoints, d/d delta vanishes when the floor
// is active.
inline void backward_into(const ModelParams& params, const ForwardTrace& trace,
                          const LossSeeds& seeds, ModelGrads& grads) {
    if (seeds.d_rel.size() != rel_head_arity(params.head_kind)) {
        throw std::runtime_error("loss seed arity does not match head kind");
    }
    const std::vector<double>& h = detail::stack_output(trace.shared, trace.input);
    std::vector<double> d_h(h.size(), 0.0);
    auto add_tower = [&](const std::vector<DenseLayer>& layers, const StackTrace& ttrace,
                         std::vector<double> d_logits, std::vector<LayerGrads>& tgrads) {
        std::vector<double> d_in =
            detail::backprop_stack(layers, ttrace, h, std::move(d_logits), true, tgrads);
        for (std::size_t i = 0; i < d_h.size(); ++i) {
            d_h[i] += d_in[i];
        }
    };
    add_tower(params.tower_ctr, trace.ctr, {seeds.d_ctr_logit}, grads.tower_ctr);
    add_tower(params.tower_atc, trace.atc, {seeds.d_atc_logit}, grads.tower_atc);
    add_tower(params.tower_cvr, trace.cvr, {seeds.d_cvr_logit}, grads.tower_cvr);
    add_tower(params.tower_rel, trace.rel, seeds.d_rel, grads.tower_rel);
    detail::backprop_stack(params.shared, trace.shared, trace.input, std::move(d_h), false,
                           grads.shared);
    grads.theta1 += seeds.d_theta1 + seeds.d_theta2;
    if (softplus(params.delta) > kGapFloor) {
        grads.delta += seeds.d_theta2 * stable_sigmoid(params.delta);
    }
}

inline ModelGrads backward(const ModelParams& params, const ForwardTrace& trace,
                           const LossSeeds& seeds) {
    ModelGrads grads = zero_grads(params);
    backward_into(params, trace, seeds, grads);
    return grads;
}

namespace detail {

inline nlohmann::json layer_to_json(const DenseLayer& layer) {
    return {{"in", layer.in}, {"out", layer.out}, {"w", layer.w}, {"b", layer.b}};
}

inline DenseLayer layer_from_json(const nlohmann::json& j) {
    DenseLayer layer;
    layer.in = j.at("in").get<std::size_t>();
    layer.out = j.at("out").get<std::size_t>();
    layer.w = j.at("w").get<std::vector<double>>();
    layer.b = j.at("b").get<std::vector<double>>();
    if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
        throw std::runtime_error("checkpoint layer shape mismatch");
    }
    return layer;
}

inline nlohmann::json stack_to_json(const std::vector<DenseLayer>& layers) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& layer : layers) {
        arr.push_back(layer_to_json(layer));
    }
    return arr;
}

inline std::vector<DenseLayer> stack_from_json(const nlohmann::json& arr) {
    std::vector<DenseLayer> layers;
    for (const auto& j : arr) {
        layers.push_back(layer_from_json(j));
    }
    return layers;
}

}  // namespace detail

inline nlohmann::json params_to_json(const ModelParams& p) {
    return {{"input_dim", p.input_dim},
            {"arch", {{"shared", p.arch.shared}, {"tower", p.arch.tower}}},
            {"head_kind", head_kind_name(p.head_kind)},
            {"shared", detail::stack_to_json(p.shared)},
            {"tower_ctr", detail::stack_to_json(p.tower_ctr)},
            {"tower_atc", detail::stack_to_json(p.tower_atc)},
            {"tower_cvr", detail::stack_to_json(p.tower_cvr)},
            {"tower_rel", detail::stack_to_json(p.tower_rel)},
            {"theta1", p.theta1},
            {"delta", p.delta},
            {"layout_fingerprint", p.layout_fingerprint},
            {"init_seed", p.init_seed}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    ModelParams p;
    p.input_dim = j.at("input_dim").get<std::size_t>();
    p.arch.shared = j.at("arch").at("shared").get<std::vector<std::size_t>>();
    p.arch.tower = j.at("arch").at("tower").get<std::vector<std::size_t>>();
    p.head_kind = head_kind_from_name(j.at("head_kind").get<std::string>());
    p.shared = detail::stack_from_json(j.at("shared"));
    p.tower_ctr = detail::stack_from_json(j.at("tower_ctr"));
    p.tower_atc = detail::stack_from_json(j.at("tower_atc"));
    p.tower_cvr = detail::stack_from_json(j.at("tower_cvr"));
    p.tower_rel = detail::stack_from_json(j.at("tower_rel"));
    p.theta1 = j.at("theta1").get<double>();
    p.delta = j.at("delta").get<double>();
    p.layout_fingerprint = j.at("layout_fingerprint").get<std::uint64_t>();
    p.init_seed = j.at("init_seed").get<std::uint64_t>();
    if (p.tower_rel.empty() ||
        p.tower_rel.back().out != rel_head_arity(p.head_kind)) {
        throw std::runtime_error("checkpoint relevance tower arity does not match head kind");
    }
    return p;
}

}  // namespace relrank
