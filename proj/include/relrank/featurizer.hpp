#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relrank/domain.hpp"
#include "relrank/rng.hpp"

namespace relrank {

struct FeatureVector {
    std::vector<double> values;
    std::uint64_t layout_fingerprint = 0;  // 0 = unchecked (hand-built test vectors)
};

struct FieldStats {
    std::uint64_t doc_count = 0;
    double avg_len = 0.0;
    std::map<std::string, std::uint64_t> df;  // document frequency per token
};

struct CorpusStats {
    FieldStats title;
    FieldStats description;
};

namespace detail {

inline FieldStats build_field_stats(const std::vector<Item>& items,
                                    const std::vector<std::string> Item::*field) {
    FieldStats stats;
    stats.doc_count = items.size();
    std::uint64_t total_len = 0;
    for (const auto& item : items) {
        const auto& tokens = item.*field;
        total_len += tokens.size();
        std::set<std::string> seen(tokens.begin(), tokens.end());
        for (const auto& tok : seen) {
            ++stats.df[tok];
        }
    }
    stats.avg_len = items.empty() ? 0.0
                                  : static_cast<double>(total_len) /
                                        static_cast<double>(items.size());
    return stats;
}

}  // namespace detail

inline CorpusStats build_corpus_stats(const std::vector<Item>& items) {
    if (items.empty()) {
        throw std::runtime_error("cannot build corpus stats from an empty catalog");
    }
    CorpusStats stats;
    stats.title = detail::build_field_stats(items, &Item::title);
    stats.description = detail::build_field_stats(items, &Item::description);
    return stats;
}

// Okapi BM25 with IDF = ln((N - df + 0.5)/(df + 0.5) + 1). Duplicate query
// tokens each contribute a term (summation, no dedup). Always >= 0.
inline double bm25_score(const std::vector<std::string>& query_tokens,
                         const std::vector<std::string>& field_tokens, const FieldStats& stats,
                         double k1, double b) {
    if (!(k1 > 0.0)) {
        throw std::invalid_argument("bm25: k1 must be > 0");
    }
    if (!(b >= 0.0 && b <= 1.0)) {
        throw std::invalid_argument("bm25: b must be in [0,1]");
    }
    if (stats.doc_count == 0) {
        return 0.0;
    }
    std::map<std::string, std::uint64_t> tf;
    for (const auto& tok : field_tokens) {
        ++tf[tok];
    }
    const double n_docs = static_cast<double>(stats.doc_count);
    const double doc_len = static_cast<double>(field_tokens.size());
    double score = 0.0;
    for (const auto& tok : query_tokens) {
        auto tf_it = tf.find(tok);
        if (tf_it == tf.end()) {
            continue;  // tf = 0 contributes nothing
        }
        const double term_freq = static_cast<double>(tf_it->second);
        auto df_it = stats.df.find(tok);
        const double df = df_it == stats.df.end() ? 0.0 : static_cast<double>(df_it->second);
        const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        // tf > 0 implies this doc is non-empty, so avg_len > 0 here
        const double norm = term_freq * (k1 + 1.0) /
                            (term_freq + k1 * (1.0 - b + b * doc_len / stats.avg_len));
        score += idf * norm;
    }
    return score;
}

// Jaccard over token sets. Both empty -> 1.0, exactly one empty -> 0.0.
inline double string_similarity(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) {
        return 1.0;
    }
    if (sa.empty() || sb.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    for (const auto& tok : sa) {
        inter += sb.count(tok);
    }
    const std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct Rates {
    double ctr = 0.0;
    double atcr = 0.0;
    double cvr = 0.0;
};

// Beta-prior smoothing: (x + s*p)/(n + s). Zero denominator returns the prior.
inline Rates historical_rates(const HistoricalStats& stats, double prior_strength,
                              double prior_rate) {
    if (!(prior_strength >= 0.0)) {
        throw std::invalid_argument("historical_rates: prior_strength must be >= 0");
    }
    if (!(prior_rate >= 0.0 && prior_rate <= 1.0)) {
        throw std::invalid_argument("historical_rates: prior_rate must be in [0,1]");
    }
    auto smooth = [&](std::uint64_t x, std::uint64_t n) {
        const double denom = static_cast<double>(n) + prior_strength;
        if (denom == 0.0) {
            return prior_rate;
        }
        return (static_cast<double>(x) + prior_strength * prior_rate) / denom;
    };
    Rates r;
    r.ctr = smooth(stats.clicks, stats.impressions);
    r.atcr = smooth(stats.atcs, stats.clicks);
    r.cvr = smooth(stats.conversions, stats.atcs);
    return r;
}

// Signed feature hashing: each token lands in a hashed bucket with a hashed
// sign; result is L2-normalized (zero vector stays zero).
inline std::vector<double> hash_embed(const std::vector<std::string>& tokens, std::size_t dims,
                                      std::uint64_t seed) {
    if (dims < 1) {
        throw std::invalid_argument("hash_embed: dims must be >= 1");
    }
    std::vector<double> v(dims, 0.0);
    for (const auto& tok : tokens) {
        const std::uint64_t h = stable_hash(tok, seed);
        const std::size_t bucket = static_cast<std::size_t>(h % dims);
        const double sign = (splitmix64(h) >> 63) ? 1.0 : -1.0;
        v[bucket] += sign;
    }
    double norm_sq = 0.0;
    for (double x : v) {
        norm_sq += x * x;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : v) {
            x *= inv;
        }
    }
    return v;
}

struct FeaturizerConfig {
    std::size_t embed_dims = 16;
    double k1 = 1.2;
    double b = 0.75;
    double prior_strength = 10.0;
    double prior_rate = 0.05;  // overwritten with the training split's global rate
    std::uint64_t hash_seed = 1;

    std::size_t feature_dim() const { return 8 + 2 * embed_dims; }

    bool operator==(const FeaturizerConfig&) const = default;
};

inline std::vector<std::string> feature_layout_names(const FeaturizerConfig& cfg) {
    std::vector<std::string> names = {
        "bm25_title", "bm25_description", "jaccard_query_title", "ctr_smoothed",
        "atcr_smoothed", "cvr_smoothed", "log1p_price", "category_match",
    };
    for (std::size_t i = 0; i < cfg.embed_dims; ++i) {
        names.push_back("query_embed_" + std::to_string(i));
    }
    for (std::size_t i = 0; i < cfg.embed_dims; ++i) {
        names.push_back("title_embed_" + std::to_string(i));
    }
    return names;
}

// Index map documenting the frozen feature layout; emitted next to trained
// models so a model is only ever scored with the layout it was trained on.
inline nlohmann::json feature_index_map(const FeaturizerConfig& cfg) {
    nlohmann::json layout = nlohmann::json::array();
    const auto names = feature_layout_names(cfg);
    for (std::size_t i = 0; i < names.size(); ++i) {
        layout.push_back({{"index", i}, {"name", names[i]}});
    }
    return nlohmann::json{{"dim", cfg.feature_dim()},
                          {"layout", layout},
                          {"embed_dims", cfg.embed_dims},
                          {"bm25_k1", cfg.k1},
                          {"bm25_b", cfg.b},
                          {"prior_strength", cfg.prior_strength},
                          {"prior_rate", cfg.prior_rate},
                          {"hash_seed", cfg.hash_seed}};
}

inline std::uint64_t layout_fingerprint(const FeaturizerConfig& cfg) {
    std::uint64_t h = 0x1a70u;
    for (const auto& name : feature_layout_names(cfg)) {
        h = hash_combine(h, stable_hash(name));
    }
    auto mix_double = [&](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h = hash_combine(h, bits);
    };
    mix_double(cfg.k1);
    mix_double(cfg.b);
    mix_double(cfg.prior_strength);
    mix_double(cfg.prior_rate);
    h = hash_combine(h, cfg.hash_seed);
    h = hash_combine(h, cfg.embed_dims);
    return h;
}

// Everything needed to reproduce feature vectors at serving time; embedded
// in checkpoints so models are always scored with their training layout.
struct FeaturizerArtifacts {
    FeaturizerConfig config;
    CorpusStats stats;

    std::uint64_t fingerprint() const { return layout_fingerprint(config); }
};

namespace detail {

inline nlohmann::json field_stats_to_json(const FieldStats& fs) {
    return {{"doc_count", fs.doc_count}, {"avg_len", fs.avg_len}, {"df", fs.df}};
}

inline FieldStats field_stats_from_json(const nlohmann::json& j) {
    FieldStats fs;
    fs.doc_count = j.at("doc_count").get<std::uint64_t>();
    fs.avg_len = j.at("avg_len").get<double>();
    fs.df = j.at("df").get<std::map<std::string, std::uint64_t>>();
    return fs;
}

}  // namespace detail

inline nlohmann::json artifacts_to_json(const FeaturizerArtifacts& a) {
    return {{"config",
             {{"embed_dims", a.config.embed_dims},
              {"bm25_k1", a.config.k1},
              {"bm25_b", a.config.b},
              {"prior_strength", a.config.prior_strength},
              {"prior_rate", a.config.prior_rate},
              {"hash_seed", a.config.hash_seed}}},
            {"corpus_stats",
             {{"title", detail::field_stats_to_json(a.stats.title)},
              {"description", detail::field_stats_to_json(a.stats.description)}}},
            {"index_map", feature_index_map(a.config)},
            {"fingerprint", a.fingerprint()}};
}

inline FeaturizerArtifacts artifacts_from_json(const nlohmann::json& j) {
    FeaturizerArtifacts a;
    const auto& cfg = j.at("config");
    a.config.embed_dims = cfg.at("embed_dims").get<std::size_t>();
    a.config.k1 = cfg.at("bm25_k1").get<double>();
    a.config.b = cfg.at("bm25_b").get<double>();
    a.config.prior_strength = cfg.at("prior_strength").get<double>();
    a.config.prior_rate = cfg.at("prior_rate").get<double>();
    a.config.hash_seed = cfg.at("hash_seed").get<std::uint64_t>();
    a.stats.title = detail::field_stats_from_json(j.at("corpus_stats").at("title"));
    a.stats.description = detail::field_stats_from_json(j.at("corpus_stats").at("description"));
    if (j.contains("fingerprint") &&
        j.at("fingerprint").get<std::uint64_t>() != a.fingerprint()) {
        throw std::runtime_error("featurizer fingerprint mismatch in stored artifacts");
    }
    return a;
}

inline FeatureVector build_features(const Query& query, const Item& item,
                                    const CorpusStats& stats, const FeaturizerConfig& cfg) {
    FeatureVector fv;
    fv.values.reserve(cfg.feature_dim());
    fv.values.push_back(bm25_score(query.text, item.title, stats.title, cfg.k1, cfg.b));
    fv.values.push_back(
        bm25_score(query.text, item.description, stats.description, cfg.k1, cfg.b));
    fv.values.push_back(string_similarity(query.text, item.title));
    const Rates rates = historical_rates(item.stats, cfg.prior_strength, cfg.prior_rate);
    fv.values.push_back(rates.ctr);
    fv.values.push_back(rates.atcr);
    fv.values.push_back(rates.cvr);
    fv.values.push_back(std::log1p(item.price));
    fv.values.push_back(query.intent_category == item.category ? 1.0 : 0.0);
    const auto q_emb = hash_embed(query.text, cfg.embed_dims, cfg.hash_seed);
    fv.values.insert(fv.values.end(), q_emb.begin(), q_emb.end());
    const auto t_emb = hash_embed(item.title, cfg.embed_dims, hash_combine(cfg.hash_seed, 2));
    fv.values.insert(fv.values.end(), t_emb.begin(), t_emb.end());
    if (fv.values.size() != cfg.feature_dim()) {
        throw std::logic_error("feature vector length does not match configured dimension");
    }
    for (double x : fv.values) {
        if (!std::isfinite(x)) {
            throw std::runtime_error("non-finite feature value for query " + query.id +
                                     ", item " + item.id);
        }
    }
    fv.layout_fingerprint = layout_fingerprint(cfg);
    return fv;
}

}  // namespace relrank
