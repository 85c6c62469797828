#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relrank/domain.hpp"
#include "relrank/featurizer.hpp"
#include "relrank/net.hpp"
#include "relrank/rng.hpp"

namespace relrank {

enum class Optimizer { sgd, adam };

inline std::string optimizer_name(Optimizer o) {
    return o == Optimizer::sgd ? "sgd" : "adam";
}

inline Optimizer optimizer_from_name(const std::string& name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adam") return Optimizer::adam;
    throw std::runtime_error("unknown optimizer '" + name + "' (expected sgd or adam)");
}

struct TrainConfig {
    // Loss weights are independent of the serving-time value weights: they
    // shape what the model learns, not how scores are combined.
    double w_ctr = 1.0;
    double w_atc = 1.0;
    double w_cvr = 1.0;
    double w_rel = 1.0;
    double learning_rate = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 256;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (!(w_ctr >= 0.0 && w_atc >= 0.0 && w_cvr >= 0.0 && w_rel >= 0.0)) {
            throw std::runtime_error("task loss weights must be nonnegative");
        }
        if (w_ctr + w_atc + w_cvr + w_rel <= 0.0) {
            throw std::runtime_error("at least one task loss weight must be positive");
        }
        if (!(learning_rate > 0.0)) {
            throw std::runtime_error("learning_rate must be positive");
        }
        if (epochs < 1 || batch_size < 1) {
            throw std::runtime_error("epochs and batch_size must be >= 1");
        }
    }
};

inline double bce(double p, bool label) {
    return label ? -std::log(p) : -std::log(1.0 - p);
}

inline double loss_engagement(double y_hat, bool label) {
    if (!(y_hat > 0.0 && y_hat < 1.0)) {
        throw std::invalid_argument("loss_engagement: prediction must lie in (0,1)");
    }
    return bce(y_hat, label);
}

// All-threshold ordinal loss: BCE against 1[r>=1] and 1[r>=2].
inline double loss_ordinal(double p_ge1, double p_ge2, RelevanceGrade grade) {
    if (!(p_ge2 > 0.0 && p_ge1 > p_ge2 && p_ge1 < 1.0)) {
        throw std::invalid_argument("loss_ordinal: requires 0 < p_ge2 < p_ge1 < 1");
    }
    const int r = grade_value(grade);
    return bce(p_ge1, r >= 1) + bce(p_ge2, r >= 2);
}

inline double loss_softmax3(const std::vector<double>& logits, RelevanceGrade grade) {
    if (logits.size() != 3) {
        throw std::invalid_argument("loss_softmax3: expects exactly 3 logits");
    }
    const double m = std::max({logits[0], logits[1], logits[2]});
    const double lse =
        m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m) +
                     std::exp(logits[2] - m));
    return lse - logits[static_cast<std::size_t>(grade_value(grade))];
}

inline double loss_regression(double raw, RelevanceGrade grade) {
    const double diff = raw - static_cast<double>(grade_value(grade));
    return diff * diff;
}

struct TotalLoss {
    double value = 0.0;
    double l_ctr = 0.0;
    double l_atc = 0.0;
    double l_cvr = 0.0;
    double l_rel = 0.0;
    LossSeeds seeds;
};

// Weighted multi-task loss plus the gradient seeds backward() consumes.
// Seeds are taken at pre-activation level (sigmoid/softmax cancel into
// prediction-minus-target), which keeps them exact for large logits.
inline TotalLoss total_loss(const HeadOutputs& outputs, const Impression& imp,
                            const TrainConfig& cfg, HeadKind head_kind) {
    TotalLoss out;
    out.seeds.d_rel.assign(rel_head_arity(head_kind), 0.0);

    out.l_ctr = loss_engagement(outputs.y_ctr, imp.clicked);
    out.l_atc = loss_engagement(outputs.y_atc, imp.added_to_cart);
    out.l_cvr = loss_engagement(outputs.y_cvr, imp.converted);
    out.seeds.d_ctr_logit = cfg.w_ctr * (outputs.y_ctr - (imp.clicked ? 1.0 : 0.0));
    out.seeds.d_atc_logit = cfg.w_atc * (outputs.y_atc - (imp.added_to_cart ? 1.0 : 0.0));
    out.seeds.d_cvr_logit = cfg.w_cvr * (outputs.y_cvr - (imp.converted ? 1.0 : 0.0));

    if (cfg.w_rel > 0.0) {
        if (!imp.grade) {
            throw std::runtime_error("relevance loss requested for unlabeled impression (" +
                                     imp.query_id + "," + imp.item_id + ")");
        }
        const RelevanceGrade grade = *imp.grade;
        const int r = grade_value(grade);
        switch (head_kind) {
            case HeadKind::ordinal: {
                out.l_rel = loss_ordinal(outputs.p_ge1, outputs.p_ge2, grade);
                const double r1 = outputs.p_ge1 - (r >= 1 ? 1.0 : 0.0);
                const double r2 = outputs.p_ge2 - (r >= 2 ? 1.0 : 0.0);
                out.seeds.d_rel[0] = cfg.w_rel * (r1 + r2);
                out.seeds.d_theta1 = -cfg.w_rel * r1;
                out.seeds.d_theta2 = -cfg.w_rel * r2;
                break;
            }
            case HeadKind::softmax3: {
                out.l_rel = loss_softmax3(outputs.rel_raw, grade);
                const double m =
                    std::max({outputs.rel_raw[0], outputs.rel_raw[1], outputs.rel_raw[2]});
                double e[3];
                double z = 0.0;
                for (int k = 0; k < 3; ++k) {
                    e[k] = std::exp(outputs.rel_raw[static_cast<std::size_t>(k)] - m);
                    z += e[k];
                }
                for (int k = 0; k < 3; ++k) {
                    out.seeds.d_rel[static_cast<std::size_t>(k)] =
                        cfg.w_rel * (e[k] / z - (k == r ? 1.0 : 0.0));
                }
                break;
            }
            case HeadKind::regression: {
                out.l_rel = loss_regression(outputs.rel_raw[0], grade);
                out.seeds.d_rel[0] =
                    cfg.w_rel * 2.0 * (outputs.rel_raw[0] - static_cast<double>(r));
                break;
            }
        }
    }
    out.value = cfg.w_ctr * out.l_ctr + cfg.w_atc * out.l_atc + cfg.w_cvr * out.l_cvr +
                cfg.w_rel * out.l_rel;
    return out;
}

// Flattened parameter/gradient views in one fixed order, for optimizers and
// finite-difference sweeps. Orders must stay in sync.
inline std::vector<double*> param_ptrs(ModelParams& p) {
    std::vector<double*> ptrs;
    auto add_stack = [&](std::vector<DenseLayer>& layers) {
        for (auto& layer : layers) {
            for (auto& v : layer.w) ptrs.push_back(&v);
            for (auto& v : layer.b) ptrs.push_back(&v);
        }
    };
    add_stack(p.shared);
    add_stack(p.tower_ctr);
    add_stack(p.tower_atc);
    add_stack(p.tower_cvr);
    add_stack(p.tower_rel);
    ptrs.push_back(&p.theta1);
    ptrs.push_back(&p.delta);
    return ptrs;
}

inline std::vector<double*> grad_ptrs(ModelGrads& g) {
    std::vector<double*> ptrs;
    auto add_stack = [&](std::vector<LayerGrads>& layers) {
        for (auto& layer : layers) {
            for (auto& v : layer.w) ptrs.push_back(&v);
            for (auto& v : layer.b) ptrs.push_back(&v);
        }
    };
    add_stack(g.shared);
    add_stack(g.tower_ctr);
    add_stack(g.tower_atc);
    add_stack(g.tower_cvr);
    add_stack(g.tower_rel);
    ptrs.push_back(&g.theta1);
    ptrs.push_back(&g.delta);
    return ptrs;
}

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double total = 0.0;
    double ctr = 0.0;
    double atc = 0.0;
    double cvr = 0.0;
    double rel = 0.0;
};

inline std::string epoch_log_csv(const std::vector<EpochStats>& log) {
    std::ostringstream out;
    out << "epoch,total,loss_ctr,loss_atc,loss_cvr,loss_rel\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& e : log) {
        out << e.epoch << ',' << e.total << ',' << e.ctr << ',' << e.atc << ',' << e.cvr << ','
            << e.rel << '\n';
    }
    return out.str();
}

struct FitResult {
    ModelParams params;
    std::vector<EpochStats> log;
};

// Mini-batch training with seed-driven shuffling. Impressions without a
// grade contribute only engagement losses (their relevance weight is masked
// to zero); requesting w_rel > 0 on a fully unlabeled dataset is an error.
inline FitResult fit(const Dataset& ds, const FeaturizerArtifacts& fz, const TrainConfig& cfg,
                     HeadKind head_kind, const ArchConfig& arch = ArchConfig{},
                     const ModelParams* warm_start = nullptr) {
    cfg.validate();
    if (ds.impressions.empty()) {
        throw std::runtime_error("cannot train on a dataset with no impressions");
    }
    Dataset indexed;  // cheap local index when the caller didn't build one
    const Dataset* dsp = &ds;
    if (ds.query_index.size() != ds.queries.size()) {
        indexed = ds;
        indexed.rebuild_index();
        dsp = &indexed;
    }
    const Dataset& data = *dsp;

    bool any_grade = false;
    for (const auto& imp : data.impressions) {
        if (imp.grade) {
            any_grade = true;
            break;
        }
    }
    if (cfg.w_rel > 0.0 && !any_grade) {
        throw std::runtime_error(
            "w_rel > 0 but no impression carries a relevance grade; label the data or use "
            "engagement-only training");
    }

    const std::size_t n = data.impressions.size();
    std::vector<FeatureVector> features;
    features.reserve(n);
    for (const auto& imp : data.impressions) {
        const Query* q = data.find_query(imp.query_id);
        const Item* it = data.find_item(imp.item_id);
        if (!q || !it) {
            throw std::runtime_error("impression references missing query or item (" +
                                     imp.query_id + "," + imp.item_id + ")");
        }
        features.push_back(build_features(*q, *it, fz.stats, fz.config));
    }

    ModelParams params;
    if (warm_start) {
        if (warm_start->head_kind != head_kind) {
            throw std::runtime_error("resume checkpoint has head '" +
                                     head_kind_name(warm_start->head_kind) + "', requested '" +
                                     head_kind_name(head_kind) + "'");
        }
        if (warm_start->layout_fingerprint != fz.fingerprint()) {
            throw std::runtime_error("featurizer fingerprint mismatch at resume");
        }
        params = *warm_start;
    } else {
        params = init_params(fz.config.feature_dim(), arch, head_kind,
                             hash_combine(cfg.seed, 0xA11C));
        params.layout_fingerprint = fz.fingerprint();
    }

    ModelGrads grads = zero_grads(params);
    ModelGrads adam_m = zero_grads(params);
    ModelGrads adam_v = zero_grads(params);
    auto pp = param_ptrs(params);
    auto gp = grad_ptrs(grads);
    auto mp = grad_ptrs(adam_m);
    auto vp = grad_ptrs(adam_v);
    std::size_t adam_t = 0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<EpochStats> log;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(hash_combine(cfg.seed, epoch));
        shuffle_rng.shuffle(order);
        EpochStats stats;
        stats.epoch = epoch;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (auto* g : gp) {
                *g = 0.0;
            }
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                const Impression& imp = data.impressions[idx];
                TrainConfig sample_cfg = cfg;
                if (!imp.grade) {
                    sample_cfg.w_rel = 0.0;  // masked relevance task
                }
                auto [outputs, trace] = forward(params, features[idx]);
                const TotalLoss tl = total_loss(outputs, imp, sample_cfg, head_kind);
                batch_loss += tl.value;
                stats.total += tl.value;
                stats.ctr += tl.l_ctr;
                stats.atc += tl.l_atc;
                stats.cvr += tl.l_cvr;
                stats.rel += tl.l_rel;
                backward_into(params, trace, tl.seeds, grads);
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("non-finite training loss in epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index));
            }
            if (cfg.optimizer == Optimizer::sgd) {
                for (std::size_t i = 0; i < pp.size(); ++i) {
                    *pp[i] -= cfg.learning_rate * (*gp[i] * inv_batch);
                }
            } else {
                ++adam_t;
                const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
                const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
                for (std::size_t i = 0; i < pp.size(); ++i) {
                    const double g = *gp[i] * inv_batch;
                    *mp[i] = cfg.adam_beta1 * *mp[i] + (1.0 - cfg.adam_beta1) * g;
                    *vp[i] = cfg.adam_beta2 * *vp[i] + (1.0 - cfg.adam_beta2) * g * g;
                    const double m_hat = *mp[i] / bc1;
                    const double v_hat = *vp[i] / bc2;
                    *pp[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        stats.total *= inv_n;
        stats.ctr *= inv_n;
        stats.atc *= inv_n;
        stats.cvr *= inv_n;
        stats.rel *= inv_n;
        log.push_back(stats);
    }
    return {std::move(params), std::move(log)};
}

namespace detail {

struct GradCheckSample {
    ModelParams params;
    FeatureVector x;
    Impression imp;
};

// Draws a (params, input, labels) triple whose loss surface is smooth in a
// neighborhood wide enough for central differences: pre-activations away
// from ReLU kinks, logits away from probability clamping, cutpoint gap away
// from its floor. Resampling is deterministic in (seed, attempt).
inline GradCheckSample draw_guarded_sample(HeadKind head_kind, std::uint64_t seed) {
    const ArchConfig tiny{{8}, {4}};
    constexpr std::size_t input_dim = 6;
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t s = hash_combine(seed, attempt);
        ModelParams params = init_params(input_dim, tiny, head_kind, s);
        Rng rng(hash_combine(s, 0xD3A3));
        params.theta1 = rng.uniform(-1.0, 0.0);
        params.delta = rng.uniform(-2.0, 2.0);
        FeatureVector x;
        x.values.resize(input_dim);
        for (auto& v : x.values) {
            v = rng.normal();
        }
        Impression imp;
        imp.query_id = "gq";
        imp.item_id = "gi";
        imp.clicked = rng.bernoulli(0.5);
        imp.added_to_cart = imp.clicked && rng.bernoulli(0.5);
        imp.converted = imp.added_to_cart && rng.bernoulli(0.5);
        imp.grade = grade_from_int(static_cast<int>(rng.uniform_index(3)));

        auto [outputs, trace] = forward(params, x);
        constexpr double kink_margin = 1e-4;
        constexpr double logit_cap = 25.0;
        bool ok = true;
        auto check_stack = [&](const StackTrace& st, bool final_linear) {
            for (std::size_t li = 0; ok && li < st.layers.size(); ++li) {
                if (final_linear && li + 1 == st.layers.size()) {
                    continue;  // linear output, no kink
                }
                for (double pre : st.layers[li].pre) {
                    if (std::abs(pre) < kink_margin) {
                        ok = false;
                        break;
                    }
                }
            }
        };
        check_stack(trace.shared, false);
        check_stack(trace.ctr, true);
        check_stack(trace.atc, true);
        check_stack(trace.cvr, true);
        check_stack(trace.rel, true);
        if (std::abs(outputs.ctr_logit) > logit_cap || std::abs(outputs.atc_logit) > logit_cap ||
            std::abs(outputs.cvr_logit) > logit_cap) {
            ok = false;
        }
        if (head_kind == HeadKind::ordinal) {
            const double z = outputs.rel_latent;
            if (std::abs(z - params.theta1) > logit_cap ||
                std::abs(z - params.theta2()) > logit_cap) {
                ok = false;
            }
        }
        if (std::abs(softplus(params.delta) - kGapFloor) < kink_margin) {
            ok = false;  // max() kink in the cutpoint gap
        }
        if (ok) {
            return {std::move(params), std::move(x), std::move(imp)};
        }
    }
}

}  // namespace detail

// Central finite differences against analytic backward over every parameter
// of a tiny network; returns the worst relative error seen across trials.
inline double gradient_check(const TrainConfig& cfg, HeadKind head_kind, std::size_t trials) {
    double max_rel_err = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto sample = detail::draw_guarded_sample(head_kind, hash_combine(cfg.seed, trial));
        auto [outputs, trace] = forward(sample.params, sample.x);
        const TotalLoss tl = total_loss(outputs, sample.imp, cfg, head_kind);
        ModelGrads grads = backward(sample.params, trace, tl.seeds);

        auto pp = param_ptrs(sample.params);
        auto gp = grad_ptrs(grads);
        for (std::size_t i = 0; i < pp.size(); ++i) {
            const double orig = *pp[i];
            const double h = 1e-5 * std::max(1.0, std::abs(orig));
            *pp[i] = orig + h;
            const double lp =
                total_loss(forward(sample.params, sample.x).first, sample.imp, cfg, head_kind)
                    .value;
            *pp[i] = orig - h;
            const double lm =
                total_loss(forward(sample.params, sample.x).first, sample.imp, cfg, head_kind)
                    .value;
            *pp[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = *gp[i];
            const double rel_err =
                std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
            max_rel_err = std::max(max_rel_err, rel_err);
        }
    }
    return max_rel_err;
}

}  // namespace relrank
