#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "relrank/domain.hpp"
#include "relrank/featurizer.hpp"
#include "relrank/net.hpp"
#include "relrank/rng.hpp"

namespace relrank {

// The generator plants the engagement confounders the ranker must overcome:
// popularity and cheapness lift clicks independently of relevance, position
// decays exposure, and candidate sampling is popularity-weighted.
struct GenConfig {
    std::size_t n_queries = 2000;
    std::size_t n_items = 5000;
    std::size_t candidates_per_query = 50;
    std::size_t vocab_size = 512;
    std::size_t n_categories = 8;

    double popularity_boost = 1.2;
    double price_anchor_boost = 0.6;
    double position_bias_decay = 0.92;
    double relevance_effect = 0.8;
    double base_click_logit = -2.0;

    double atc_base = -1.2;
    double atc_rel = 0.5;
    double atc_pop = 0.4;
    double cvr_base = -1.0;
    double cvr_rel = 0.4;
    double cvr_pop = 0.4;

    // share of candidate draws forced into the query's category; the rest
    // are popularity-weighted over the whole catalog
    double same_category_share = 0.3;
    double pop_sampling_scale = 1.0;

    // ground-truth thresholds on query-title Jaccard overlap
    double overlap_hi = 0.25;
    double overlap_lo = 0.02;

    std::uint64_t seed = 1;

    void validate() const {
        if (n_queries < 1 || n_items < 1 || candidates_per_query < 1 || vocab_size < 1 ||
            n_categories < 1) {
            throw std::runtime_error("generator counts must all be >= 1");
        }
        if (n_categories > vocab_size / 4) {
            throw std::runtime_error(
                "vocab too small for category separation (need vocab_size >= 4 * n_categories)");
        }
        if (candidates_per_query > n_items) {
            throw std::runtime_error("candidates_per_query cannot exceed n_items");
        }
        if (!(position_bias_decay > 0.0 && position_bias_decay <= 1.0)) {
            throw std::runtime_error("position_bias_decay must lie in (0,1]");
        }
        if (!(same_category_share >= 0.0 && same_category_share <= 1.0)) {
            throw std::runtime_error("same_category_share must lie in [0,1]");
        }
        if (!(overlap_lo > 0.0 && overlap_lo <= overlap_hi && overlap_hi <= 1.0)) {
            throw std::runtime_error("overlap thresholds must satisfy 0 < lo <= hi <= 1");
        }
        for (double v : {popularity_boost, price_anchor_boost, relevance_effect,
                         base_click_logit, atc_base, atc_rel, atc_pop, cvr_base, cvr_rel,
                         cvr_pop, pop_sampling_scale}) {
            if (!std::isfinite(v)) {
                throw std::runtime_error("generator strengths must be finite");
            }
        }
    }
};

namespace synth_detail {

inline std::string token_name(std::size_t idx) { return "w" + std::to_string(idx); }

inline std::string category_name(std::size_t idx) { return "cat" + std::to_string(idx); }

inline std::string format_id(char prefix, std::size_t idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, idx);
    return buf;
}

// Vocabulary is partitioned into disjoint per-category slices and every
// same-category title and query carries the slice's anchor token. Different
// categories therefore never share tokens (overlap 0), while same-category
// pairs always overlap through the anchor. That makes category membership
// recoverable from text alone, which is what lets a text-only grading rule
// reproduce the planted ground truth exactly.
struct Vocab {
    std::size_t slice_len = 0;

    explicit Vocab(const GenConfig& cfg) : slice_len(cfg.vocab_size / cfg.n_categories) {}

    std::size_t anchor(std::size_t category) const { return category * slice_len; }

    // skewed draw: low slice indices are much more likely, so queries and
    // titles of one category concentrate on shared head tokens
    std::size_t draw(std::size_t category, Rng& rng) const {
        const double u = rng.uniform01();
        auto offset = static_cast<std::size_t>(u * u * static_cast<double>(slice_len));
        if (offset >= slice_len) {
            offset = slice_len - 1;
        }
        return category * slice_len + offset;
    }

    // small per-category topic pool right after the anchor
    std::size_t topic(std::size_t category, Rng& rng) const {
        if (slice_len <= 1) {
            return anchor(category);
        }
        const std::size_t pool = std::min<std::size_t>(4, slice_len - 1);
        return category * slice_len + 1 + rng.uniform_index(pool);
    }
};

inline double popularity_latent(std::uint64_t seed, const std::string& item_id) {
    return normal_from_hash(hash_combine(seed, stable_hash(item_id)));
}

}  // namespace synth_detail

inline std::pair<std::vector<Query>, std::vector<Item>> generate_catalog(const GenConfig& cfg) {
    cfg.validate();
    using namespace synth_detail;
    const Vocab vocab(cfg);
    Rng rng(hash_combine(cfg.seed, 0xCA7A));

    std::vector<Item> items;
    items.reserve(cfg.n_items);
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        Item item;
        item.id = format_id('i', i);
        const std::size_t category = rng.uniform_index(cfg.n_categories);
        item.category = category_name(category);
        item.brand = "brand" + std::to_string(rng.uniform_index(32));
        item.price = std::exp(rng.normal(3.0, 0.6));
        item.title.push_back(token_name(vocab.anchor(category)));
        item.title.push_back(token_name(vocab.topic(category, rng)));
        for (int t = 0; t < 6; ++t) {
            item.title.push_back(token_name(vocab.draw(category, rng)));
        }
        for (int t = 0; t < 12; ++t) {
            item.description.push_back(token_name(vocab.draw(category, rng)));
        }
        items.push_back(std::move(item));
    }

    std::vector<Query> queries;
    queries.reserve(cfg.n_queries);
    for (std::size_t q = 0; q < cfg.n_queries; ++q) {
        Query query;
        query.id = format_id('q', q);
        const std::size_t category = rng.uniform_index(cfg.n_categories);
        query.intent_category = category_name(category);
        query.text.push_back(token_name(vocab.anchor(category)));
        query.text.push_back(token_name(vocab.topic(category, rng)));
        query.text.push_back(token_name(vocab.draw(category, rng)));
        queries.push_back(std::move(query));
    }
    return {std::move(queries), std::move(items)};
}

// Planted relevance rule: 2 = same category with strong title overlap,
// 1 = same category or nontrivial overlap, 0 = neither. With the partitioned
// vocabulary, cross-category overlap is always 0, so a Jaccard rule with
// thresholds (overlap_lo, overlap_hi) recovers these grades from text alone.
inline RelevanceGrade ground_truth_grade(const Query& query, const Item& item,
                                         const GenConfig& cfg) {
    const bool same_cat = query.intent_category == item.category;
    const double overlap = string_similarity(query.text, item.title);
    if (same_cat && overlap >= cfg.overlap_hi) {
        return RelevanceGrade::highly_relevant;
    }
    if (same_cat || overlap >= cfg.overlap_lo) {
        return RelevanceGrade::moderately_relevant;
    }
    return RelevanceGrade::irrelevant;
}

inline Dataset generate_impressions(const GenConfig& cfg, std::vector<Query> queries,
                                    std::vector<Item> items) {
    cfg.validate();
    using namespace synth_detail;
    Rng rng(hash_combine(cfg.seed, 0x1359));

    // price signal: standardized negative log-price, so cheap items get the
    // anchoring boost
    double mean_ln = 0.0;
    for (const auto& item : items) {
        mean_ln += std::log(item.price);
    }
    mean_ln /= static_cast<double>(items.size());
    double var_ln = 0.0;
    for (const auto& item : items) {
        const double d = std::log(item.price) - mean_ln;
        var_ln += d * d;
    }
    var_ln /= static_cast<double>(items.size());
    const double std_ln = std::sqrt(std::max(var_ln, 1e-12));

    std::vector<double> pop(items.size());
    std::vector<double> price_signal(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        pop[i] = popularity_latent(cfg.seed, items[i].id);
        price_signal[i] = -(std::log(items[i].price) - mean_ln) / std_ln;
    }

    // popularity-weighted cumulative samplers: global and per category
    auto build_cumulative = [&](const std::vector<std::size_t>& idxs) {
        std::vector<double> cum(idxs.size());
        double total = 0.0;
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            total += std::exp(cfg.pop_sampling_scale * pop[idxs[k]]);
            cum[k] = total;
        }
        return cum;
    };
    std::vector<std::size_t> all_idx(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        all_idx[i] = i;
    }
    std::map<std::string, std::vector<std::size_t>> by_category;
    for (std::size_t i = 0; i < items.size(); ++i) {
        by_category[items[i].category].push_back(i);
    }
    const std::vector<double> all_cum = build_cumulative(all_idx);
    std::map<std::string, std::vector<double>> cat_cum;
    for (const auto& [cat, idxs] : by_category) {
        cat_cum[cat] = build_cumulative(idxs);
    }
    auto weighted_draw = [&](const std::vector<std::size_t>& idxs,
                             const std::vector<double>& cum) {
        const double u = rng.uniform01() * cum.back();
        const auto it = std::lower_bound(cum.begin(), cum.end(), u);
        std::size_t k = static_cast<std::size_t>(it - cum.begin());
        if (k >= idxs.size()) {
            k = idxs.size() - 1;
        }
        return idxs[k];
    };

    Dataset ds;
    ds.queries = std::move(queries);
    ds.items = std::move(items);
    ds.impressions.reserve(ds.queries.size() * cfg.candidates_per_query);
    std::vector<HistoricalStats> tally(ds.items.size());

    for (const auto& query : ds.queries) {
        std::set<std::size_t> chosen;
        std::vector<std::size_t> candidates;
        const auto cat_it = by_category.find(query.intent_category);
        std::size_t attempts = 0;
        const std::size_t max_attempts = 50 * cfg.candidates_per_query + 1000;
        while (candidates.size() < cfg.candidates_per_query) {
            std::size_t pick;
            if (attempts++ < max_attempts) {
                const bool force_same = cat_it != by_category.end() &&
                                        rng.uniform01() < cfg.same_category_share;
                if (force_same) {
                    pick = weighted_draw(cat_it->second, cat_cum.at(query.intent_category));
                } else {
                    pick = weighted_draw(all_idx, all_cum);
                }
                if (!chosen.insert(pick).second) {
                    continue;  // duplicate; rejection keeps pairs unique
                }
            } else {
                // heavily skewed popularity can make rejection slow; fall
                // back to the first unchosen item, deterministically
                pick = 0;
                while (pick < ds.items.size() && chosen.count(pick) != 0) {
                    ++pick;
                }
                chosen.insert(pick);
            }
            candidates.push_back(pick);
        }
        for (std::size_t slot = 0; slot < candidates.size(); ++slot) {
            const std::size_t idx = candidates[slot];
            const Item& item = ds.items[idx];
            Impression imp;
            imp.query_id = query.id;
            imp.item_id = item.id;
            imp.position = static_cast<int>(slot) + 1;
            const RelevanceGrade grade = ground_truth_grade(query, item, cfg);
            imp.grade = grade;
            const double g = static_cast<double>(grade_value(grade));
            const double click_logit = cfg.base_click_logit + cfg.relevance_effect * g +
                                       cfg.popularity_boost * pop[idx] +
                                       cfg.price_anchor_boost * price_signal[idx];
            const double p_click = stable_sigmoid(click_logit) *
                                   std::pow(cfg.position_bias_decay,
                                            static_cast<double>(imp.position - 1));
            imp.clicked = rng.bernoulli(p_click);
            if (imp.clicked) {
                const double p_atc =
                    stable_sigmoid(cfg.atc_base + cfg.atc_rel * g + cfg.atc_pop * pop[idx]);
                imp.added_to_cart = rng.bernoulli(p_atc);
            }
            if (imp.added_to_cart) {
                const double p_cvr =
                    stable_sigmoid(cfg.cvr_base + cfg.cvr_rel * g + cfg.cvr_pop * pop[idx]);
                imp.converted = rng.bernoulli(p_cvr);
            }
            ++tally[idx].impressions;
            tally[idx].clicks += imp.clicked ? 1 : 0;
            tally[idx].atcs += imp.added_to_cart ? 1 : 0;
            tally[idx].conversions += imp.converted ? 1 : 0;
            ds.impressions.push_back(std::move(imp));
        }
    }
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        ds.items[i].stats = tally[i];
    }
    ds.rebuild_index();
    return ds;
}

inline Dataset generate_dataset(const GenConfig& cfg) {
    auto [queries, items] = generate_catalog(cfg);
    return generate_impressions(cfg, std::move(queries), std::move(items));
}

}  // namespace relrank
