#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relrank/domain.hpp"
#include "relrank/featurizer.hpp"
#include "relrank/io.hpp"
#include "relrank/kvconfig.hpp"
#include "relrank/labelpipe.hpp"
#include "relrank/metrics.hpp"
#include "relrank/net.hpp"
#include "relrank/split.hpp"
#include "relrank/synth.hpp"
#include "relrank/train.hpp"
#include "relrank/value.hpp"

// Command implementations shared by the CLI binary and the acceptance
// harness. Every command is a pure function of its config files and seeds;
// outputs are written atomically and carry the config hash that produced
// them (inline for JSON outputs, as a .provenance.json sidecar otherwise).

namespace relrank {

inline constexpr const char* kOracleEndpointEnvVar = "RELRANK_ORACLE_ENDPOINT";

// ---------------------------------------------------------------------------
// config readers

// The generate config must be fully explicit so a config file is a complete
// record of the dataset. Other commands accept defaults.
inline GenConfig read_gen_config(KvConfig& kv, bool require_all) {
    GenConfig d;
    auto want = [&](const char* key) {
        if (require_all) {
            kv.require(key);
        }
    };
    GenConfig cfg;
    want("n_queries");
    cfg.n_queries = static_cast<std::size_t>(kv.get_u64("n_queries", d.n_queries));
    want("n_items");
    cfg.n_items = static_cast<std::size_t>(kv.get_u64("n_items", d.n_items));
    want("candidates_per_query");
    cfg.candidates_per_query =
        static_cast<std::size_t>(kv.get_u64("candidates_per_query", d.candidates_per_query));
    want("vocab_size");
    cfg.vocab_size = static_cast<std::size_t>(kv.get_u64("vocab_size", d.vocab_size));
    want("n_categories");
    cfg.n_categories = static_cast<std::size_t>(kv.get_u64("n_categories", d.n_categories));
    want("popularity_boost");
    cfg.popularity_boost = kv.get_double("popularity_boost", d.popularity_boost);
    want("price_anchor_boost");
    cfg.price_anchor_boost = kv.get_double("price_anchor_boost", d.price_anchor_boost);
    want("position_bias_decay");
    cfg.position_bias_decay = kv.get_double("position_bias_decay", d.position_bias_decay);
    want("relevance_effect");
    cfg.relevance_effect = kv.get_double("relevance_effect", d.relevance_effect);
    want("base_click_logit");
    cfg.base_click_logit = kv.get_double("base_click_logit", d.base_click_logit);
    want("atc_base");
    cfg.atc_base = kv.get_double("atc_base", d.atc_base);
    want("atc_rel");
    cfg.atc_rel = kv.get_double("atc_rel", d.atc_rel);
    want("atc_pop");
    cfg.atc_pop = kv.get_double("atc_pop", d.atc_pop);
    want("cvr_base");
    cfg.cvr_base = kv.get_double("cvr_base", d.cvr_base);
    want("cvr_rel");
    cfg.cvr_rel = kv.get_double("cvr_rel", d.cvr_rel);
    want("cvr_pop");
    cfg.cvr_pop = kv.get_double("cvr_pop", d.cvr_pop);
    want("same_category_share");
    cfg.same_category_share = kv.get_double("same_category_share", d.same_category_share);
    want("pop_sampling_scale");
    cfg.pop_sampling_scale = kv.get_double("pop_sampling_scale", d.pop_sampling_scale);
    want("overlap_hi");
    cfg.overlap_hi = kv.get_double("overlap_hi", d.overlap_hi);
    want("overlap_lo");
    cfg.overlap_lo = kv.get_double("overlap_lo", d.overlap_lo);
    want("seed");
    cfg.seed = kv.get_u64("seed", d.seed);
    return cfg;
}

// Must stay in sync with GenConfig defaults; a test parses this text and
// compares against GenConfig{}.
inline std::string default_gen_config_text() {
    return "# synthetic dataset generator, all keys required\n"
           "n_queries = 2000\n"
           "n_items = 5000\n"
           "candidates_per_query = 50\n"
           "vocab_size = 512\n"
           "n_categories = 8\n"
           "\n"
           "# engagement confounders\n"
           "popularity_boost = 1.2\n"
           "price_anchor_boost = 0.6\n"
           "position_bias_decay = 0.92\n"
           "relevance_effect = 0.8\n"
           "base_click_logit = -2.0\n"
           "atc_base = -1.2\n"
           "atc_rel = 0.5\n"
           "atc_pop = 0.4\n"
           "cvr_base = -1.0\n"
           "cvr_rel = 0.4\n"
           "cvr_pop = 0.4\n"
           "\n"
           "# candidate sampling\n"
           "same_category_share = 0.3\n"
           "pop_sampling_scale = 1.0\n"
           "\n"
           "# ground-truth thresholds on title-token overlap\n"
           "overlap_hi = 0.25\n"
           "overlap_lo = 0.02\n"
           "\n"
           "seed = 1\n";
}

inline OracleConfig read_oracle_config(KvConfig& kv, const std::string& prefix,
                                       std::uint64_t default_seed) {
    OracleConfig cfg;
    cfg.kind = oracle_kind_from_name(kv.get_string(prefix + "kind", "rule_based"));
    cfg.endpoint = kv.get_string(prefix + "endpoint", "");
    cfg.replay_path = kv.get_string(prefix + "replay", "");
    cfg.timeout_s = kv.get_double(prefix + "timeout_s", cfg.timeout_s);
    cfg.max_concurrency =
        static_cast<std::size_t>(kv.get_u64(prefix + "max_concurrency", cfg.max_concurrency));
    cfg.seed = kv.get_u64(prefix + "seed", default_seed);
    cfg.noise_rate = kv.get_double(prefix + "noise_rate", cfg.noise_rate);
    cfg.tau1 = kv.get_double(prefix + "tau1", cfg.tau1);
    cfg.tau2 = kv.get_double(prefix + "tau2", cfg.tau2);
    return cfg;
}

struct LabelCommandConfig {
    double human_noise_rate = 0.05;
    double human_coverage = 0.8;  // share of pairs carrying a human label
    std::uint64_t human_seed = 11;
    OracleConfig audit;
    OracleConfig bulk;
    double prior_strength = 10.0;
    double prior_rate = 0.05;
    std::string q2t_file;  // empty: derive the predictor from query intents
};

inline LabelCommandConfig read_label_config(KvConfig& kv) {
    LabelCommandConfig cfg;
    cfg.human_noise_rate = kv.get_double("human_noise_rate", cfg.human_noise_rate);
    cfg.human_coverage = kv.get_double("human_coverage", cfg.human_coverage);
    cfg.human_seed = kv.get_u64("human_seed", cfg.human_seed);
    cfg.audit = read_oracle_config(kv, "audit_", 1);
    cfg.bulk = read_oracle_config(kv, "bulk_", 2);
    cfg.prior_strength = kv.get_double("prior_strength", cfg.prior_strength);
    cfg.prior_rate = kv.get_double("prior_rate", cfg.prior_rate);
    cfg.q2t_file = kv.get_string("q2t_file", "");
    if (!(cfg.human_coverage >= 0.0 && cfg.human_coverage <= 1.0)) {
        throw std::runtime_error("human_coverage must lie in [0,1]");
    }
    return cfg;
}

inline std::vector<std::size_t> parse_layer_list(const std::string& text,
                                                 const std::string& key) {
    std::vector<std::size_t> widths;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(part, &pos);
            if (pos != part.size() || v < 1) {
                throw std::invalid_argument("bad width");
            }
            widths.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw std::runtime_error("invalid value for key '" + key + "': " + text);
        }
    }
    if (widths.empty()) {
        throw std::runtime_error("invalid value for key '" + key + "': " + text);
    }
    return widths;
}

struct TrainCommandConfig {
    TrainConfig train;
    FeaturizerConfig featurizer;  // prior_rate replaced by the train split's global CTR
    ArchConfig arch;
    SplitConfig split;
};

inline TrainCommandConfig read_train_config(KvConfig& kv) {
    TrainCommandConfig cfg;
    cfg.train.w_ctr = kv.get_double("w_ctr", cfg.train.w_ctr);
    cfg.train.w_atc = kv.get_double("w_atc", cfg.train.w_atc);
    cfg.train.w_cvr = kv.get_double("w_cvr", cfg.train.w_cvr);
    cfg.train.w_rel = kv.get_double("w_rel", cfg.train.w_rel);
    cfg.train.learning_rate = kv.get_double("learning_rate", cfg.train.learning_rate);
    cfg.train.epochs = static_cast<std::size_t>(kv.get_u64("epochs", cfg.train.epochs));
    cfg.train.batch_size =
        static_cast<std::size_t>(kv.get_u64("batch_size", cfg.train.batch_size));
    cfg.train.seed = kv.get_u64("seed", cfg.train.seed);
    cfg.train.optimizer =
        optimizer_from_name(kv.get_string("optimizer", optimizer_name(cfg.train.optimizer)));
    cfg.train.adam_beta1 = kv.get_double("adam_beta1", cfg.train.adam_beta1);
    cfg.train.adam_beta2 = kv.get_double("adam_beta2", cfg.train.adam_beta2);
    cfg.train.adam_eps = kv.get_double("adam_eps", cfg.train.adam_eps);
    cfg.arch.shared = parse_layer_list(kv.get_string("shared_layers", "64,32"), "shared_layers");
    cfg.arch.tower = parse_layer_list(kv.get_string("tower_layers", "16"), "tower_layers");
    cfg.featurizer.embed_dims =
        static_cast<std::size_t>(kv.get_u64("embed_dims", cfg.featurizer.embed_dims));
    cfg.featurizer.k1 = kv.get_double("bm25_k1", cfg.featurizer.k1);
    cfg.featurizer.b = kv.get_double("bm25_b", cfg.featurizer.b);
    cfg.featurizer.prior_strength =
        kv.get_double("prior_strength", cfg.featurizer.prior_strength);
    cfg.featurizer.hash_seed = kv.get_u64("hash_seed", cfg.featurizer.hash_seed);
    cfg.split.seed = kv.get_u64("split_seed", cfg.split.seed);
    cfg.split.train_ratio = kv.get_double("train_ratio", cfg.split.train_ratio);
    return cfg;
}

// ---------------------------------------------------------------------------
// checkpoint format

struct Checkpoint {
    ModelParams params;
    FeaturizerArtifacts featurizer;
    bool engagement_only = false;
    SplitConfig split;
    std::string config_hash;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
    return nlohmann::json{
        {"kind", "checkpoint"},
        {"format_version", 1},
        {"engagement_only", ck.engagement_only},
        {"config_hash", ck.config_hash},
        {"split", {{"seed", ck.split.seed}, {"train_ratio", ck.split.train_ratio}}},
        {"featurizer", artifacts_to_json(ck.featurizer)},
        {"model", params_to_json(ck.params)},
    };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("kind", "") != std::string("checkpoint")) {
        throw std::runtime_error("not a checkpoint file");
    }
    Checkpoint ck;
    ck.engagement_only = j.at("engagement_only").get<bool>();
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.split.seed = j.at("split").at("seed").get<std::uint64_t>();
    ck.split.train_ratio = j.at("split").at("train_ratio").get<double>();
    ck.featurizer = artifacts_from_json(j.at("featurizer"));
    ck.params = params_from_json(j.at("model"));
    if (ck.params.layout_fingerprint != ck.featurizer.fingerprint()) {
        throw std::runtime_error(
            "checkpoint model fingerprint does not match its featurizer artifacts");
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    atomic_write(path, checkpoint_to_json(ck).dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOutcome {
    std::string config_hash;
    std::size_t queries = 0;
    std::size_t items = 0;
    std::size_t impressions = 0;
};

inline GenerateOutcome cmd_generate(const std::filesystem::path& config_path,
                                    const std::filesystem::path& out_path) {
    KvConfig kv = KvConfig::parse_file(config_path);
    const GenConfig cfg = read_gen_config(kv, /*require_all=*/true);
    kv.finish();
    cfg.validate();
    const Dataset ds = generate_dataset(cfg);
    const auto violations = validate_dataset(ds);
    if (!violations.empty()) {
        throw std::logic_error("generator produced an invalid dataset: " +
                               violations.front().where + ": " + violations.front().message);
    }
    save_dataset(ds, out_path);
    GenerateOutcome outcome;
    outcome.config_hash = kv.hash_hex();
    outcome.queries = ds.queries.size();
    outcome.items = ds.items.size();
    outcome.impressions = ds.impressions.size();
    const nlohmann::json prov{{"kind", "provenance"},
                              {"command", "generate"},
                              {"config_hash", outcome.config_hash},
                              {"seed", cfg.seed},
                              {"queries", outcome.queries},
                              {"items", outcome.items},
                              {"impressions", outcome.impressions}};
    atomic_write(out_path.string() + ".provenance.json", prov.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------------------
// label

// Coverage filter salt; independent of the noise stream inside
// simulate_human_labels.
inline constexpr std::uint64_t kCoverageSalt = 0xc0ffee1234abcdefull;

inline bool pair_has_human_label(std::uint64_t human_seed, double coverage,
                                 const std::string& query_id, const std::string& item_id) {
    const std::uint64_t h = hash_combine(hash_combine(hash_combine(human_seed, kCoverageSalt),
                                                      stable_hash(query_id)),
                                         stable_hash(item_id));
    return u64_to_unit(splitmix64(h)) < coverage;
}

inline void apply_endpoint_override(OracleConfig& cfg) {
    const char* env = std::getenv(kOracleEndpointEnvVar);
    if (env && *env && cfg.kind == OracleKind::remote_http) {
        cfg.endpoint = env;
    }
}

inline PipelineReport cmd_label(const std::filesystem::path& dataset_path,
                                const std::filesystem::path& config_path,
                                const std::filesystem::path& out_path) {
    Dataset ds = load_dataset(dataset_path);
    KvConfig kv = KvConfig::parse_file(config_path);
    LabelCommandConfig cfg = read_label_config(kv);
    kv.finish();
    apply_endpoint_override(cfg.audit);
    apply_endpoint_override(cfg.bulk);

    HumanLabels humans = simulate_human_labels(ds, cfg.human_noise_rate, cfg.human_seed);
    if (cfg.human_coverage < 1.0) {
        for (auto it = humans.begin(); it != humans.end();) {
            if (pair_has_human_label(cfg.human_seed, cfg.human_coverage, it->first.first,
                                     it->first.second)) {
                ++it;
            } else {
                it = humans.erase(it);
            }
        }
    }
    const CategoryPredictor q2t = cfg.q2t_file.empty()
                                      ? CategoryPredictor::from_dataset(ds)
                                      : CategoryPredictor::from_file(cfg.q2t_file);
    auto [records, report] =
        run_pipeline(ds, humans, cfg.audit, cfg.bulk, q2t, cfg.prior_strength, cfg.prior_rate);
    save_labels(records, out_path);
    nlohmann::json rj{{"kind", "label_report"},
                      {"config_hash", kv.hash_hex()},
                      {"total", report.total},
                      {"human_only", report.human_only},
                      {"audited_max", report.audited_max},
                      {"audited_min", report.audited_min},
                      {"bulk_llm", report.bulk_llm},
                      {"triggered", report.triggered},
                      {"accuracy_available", report.accuracy_available}};
    if (report.accuracy_available) {
        rj["acc3"] = report.acc3;
        rj["within1"] = report.within1;
    }
    atomic_write(out_path.string() + ".report.json", rj.dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
    Checkpoint checkpoint;
    std::vector<EpochStats> log;
};

inline TrainOutcome cmd_train(const std::filesystem::path& dataset_path,
                              const std::filesystem::path& labels_path,  // empty: none
                              const std::filesystem::path& config_path, HeadKind head_kind,
                              bool engagement_only, const std::filesystem::path& out_path,
                              const std::filesystem::path& init_from = {}) {
    Dataset ds = load_dataset(dataset_path);
    KvConfig kv = KvConfig::parse_file(config_path);
    TrainCommandConfig cfg = read_train_config(kv);
    kv.finish();
    if (engagement_only) {
        cfg.train.w_rel = 0.0;
    }

    SplitDataset split = split_dataset(ds, cfg.split);

    if (!labels_path.empty()) {
        const auto records = load_labels(labels_path);
        std::set<std::pair<std::string, std::string>> known;
        for (const auto& imp : ds.impressions) {
            known.insert({imp.query_id, imp.item_id});
        }
        std::map<std::pair<std::string, std::string>, RelevanceGrade> by_pair;
        for (const auto& rec : records) {
            if (known.count({rec.query_id, rec.item_id}) == 0) {
                throw std::runtime_error("label references unknown pair (" + rec.query_id +
                                         "," + rec.item_id + ")");
            }
            by_pair[{rec.query_id, rec.item_id}] = rec.final_grade;
        }
        // Pipeline labels replace any grades already on the impressions;
        // unlabeled pairs train without the relevance term.
        for (auto& imp : split.train.impressions) {
            const auto it = by_pair.find({imp.query_id, imp.item_id});
            imp.grade = it == by_pair.end() ? std::nullopt
                                            : std::optional<RelevanceGrade>(it->second);
        }
    }

    std::uint64_t n_impressions = 0;
    std::uint64_t n_clicks = 0;
    for (const auto& imp : split.train.impressions) {
        ++n_impressions;
        n_clicks += imp.clicked ? 1 : 0;
    }
    if (n_impressions == 0) {
        throw std::runtime_error("training split has no impressions");
    }
    // Smoothing prior: the training split's global click rate.
    cfg.featurizer.prior_rate =
        static_cast<double>(n_clicks) / static_cast<double>(n_impressions);

    FeaturizerArtifacts artifacts;
    artifacts.config = cfg.featurizer;
    artifacts.stats = build_corpus_stats(ds.items);

    Checkpoint warm;
    const ModelParams* warm_params = nullptr;
    if (!init_from.empty()) {
        warm = load_checkpoint(init_from);
        warm_params = &warm.params;
    }

    FitResult fr = fit(split.train, artifacts, cfg.train, head_kind, cfg.arch, warm_params);

    TrainOutcome outcome;
    outcome.checkpoint.params = std::move(fr.params);
    outcome.checkpoint.featurizer = std::move(artifacts);
    outcome.checkpoint.engagement_only = engagement_only;
    outcome.checkpoint.split = cfg.split;
    outcome.checkpoint.config_hash = kv.hash_hex();
    outcome.log = std::move(fr.log);
    save_checkpoint(outcome.checkpoint, out_path);
    atomic_write(out_path.string() + ".log.csv", epoch_log_csv(outcome.log));
    return outcome;
}

// ---------------------------------------------------------------------------
// eval

struct PerQueryOutputs {
    const Query* query = nullptr;
    std::vector<const Impression*> impressions;
    std::vector<HeadOutputs> outputs;
};

// Forward pass over every impression of the given dataset, grouped by query
// in sorted query-id order.
inline std::vector<PerQueryOutputs> forward_by_query(const Checkpoint& ck, const Dataset& ds) {
    std::vector<PerQueryOutputs> result;
    for (const auto& [query_id, indices] : ds.by_query) {
        const Query* q = ds.find_query(query_id);
        if (!q) {
            throw std::runtime_error("impression references unknown query " + query_id);
        }
        PerQueryOutputs row;
        row.query = q;
        for (const std::size_t idx : indices) {
            const Impression& imp = ds.impressions[idx];
            const Item* item = ds.find_item(imp.item_id);
            if (!item) {
                throw std::runtime_error("impression references unknown item " + imp.item_id);
            }
            const FeatureVector fv =
                build_features(*q, *item, ck.featurizer.stats, ck.featurizer.config);
            row.impressions.push_back(&imp);
            row.outputs.push_back(forward(ck.params, fv).first);
        }
        result.push_back(std::move(row));
    }
    return result;
}

struct EvalReport {
    std::string head_kind;
    bool engagement_only = false;
    std::size_t queries_evaluated = 0;
    double auc_ctr = 0.0;
    double auc_atc = 0.0;
    double auc_cvr = 0.0;
    MeanNdcg ndcg_click;
    MeanNdcg ndcg_atc;
    MeanNdcg ndcg_conversion;
    MeanNdcg ndcg_relevance;
    ValueWeights weights;
    bool normalize_rel = false;
    std::size_t k = 10;
};

// Ranks one query's impressions by the given per-impression score and emits
// the gains in ranked order.
inline std::vector<int> ranked_gains(const PerQueryOutputs& row,
                                     const std::vector<double>& scores,
                                     const std::vector<int>& gains) {
    std::vector<ScoredItem> scored;
    scored.reserve(scores.size());
    std::map<std::string, int> gain_by_id;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scored.push_back({row.impressions[i]->item_id, scores[i]});
        gain_by_id[row.impressions[i]->item_id] = gains[i];
    }
    std::vector<int> out;
    out.reserve(scores.size());
    for (const auto& s : rank_items(std::move(scored))) {
        out.push_back(gain_by_id.at(s.item_id));
    }
    return out;
}

inline EvalReport evaluate_checkpoint(const Checkpoint& ck, const Dataset& eval_split,
                                      const ValueWeights& weights, bool normalize_rel,
                                      std::size_t k = 10) {
    weights.validate();
    const auto rows = forward_by_query(ck, eval_split);
    if (rows.empty()) {
        throw std::runtime_error("evaluation split has no impressions");
    }

    EvalReport report;
    report.head_kind = head_kind_name(ck.params.head_kind);
    report.engagement_only = ck.engagement_only;
    report.queries_evaluated = rows.size();
    report.weights = weights;
    report.normalize_rel = normalize_rel;
    report.k = k;

    std::vector<double> s_ctr, s_atc, s_cvr;
    std::vector<bool> y_click, y_atc, y_conv;
    std::vector<std::vector<int>> click_lists, atc_lists, conv_lists, rel_lists;
    bool any_grade = false;
    for (const auto& row : rows) {
        const std::size_t n = row.impressions.size();
        std::vector<double> ctr(n), atc(n), cvr(n), value(n);
        std::vector<int> g_click(n), g_atc(n), g_conv(n), g_rel(n);
        for (std::size_t i = 0; i < n; ++i) {
            const HeadOutputs& out = row.outputs[i];
            const Impression& imp = *row.impressions[i];
            ctr[i] = out.y_ctr;
            atc[i] = out.y_atc;
            cvr[i] = out.y_cvr;
            // Engagement-only checkpoints carry an untrained relevance tower;
            // the click head stands in as the relevance score.
            value[i] = ck.engagement_only ? out.y_ctr
                                          : value_score(out, weights, normalize_rel);
            g_click[i] = imp.clicked ? 1 : 0;
            g_atc[i] = imp.added_to_cart ? 1 : 0;
            g_conv[i] = imp.converted ? 1 : 0;
            g_rel[i] = imp.grade ? grade_value(*imp.grade) : 0;
            any_grade = any_grade || imp.grade.has_value();
            s_ctr.push_back(out.y_ctr);
            s_atc.push_back(out.y_atc);
            s_cvr.push_back(out.y_cvr);
            y_click.push_back(imp.clicked);
            y_atc.push_back(imp.added_to_cart);
            y_conv.push_back(imp.converted);
        }
        click_lists.push_back(ranked_gains(row, ctr, g_click));
        atc_lists.push_back(ranked_gains(row, atc, g_atc));
        conv_lists.push_back(ranked_gains(row, cvr, g_conv));
        rel_lists.push_back(ranked_gains(row, value, g_rel));
    }
    if (!any_grade) {
        throw std::runtime_error(
            "no relevance grades in the evaluation split; relevance NDCG is undefined");
    }
    report.auc_ctr = auc(s_ctr, y_click);
    report.auc_atc = auc(s_atc, y_atc);
    report.auc_cvr = auc(s_cvr, y_conv);
    report.ndcg_click = mean_ndcg(click_lists, k);
    report.ndcg_atc = mean_ndcg(atc_lists, k);
    report.ndcg_conversion = mean_ndcg(conv_lists, k);
    report.ndcg_relevance = mean_ndcg(rel_lists, k);
    return report;
}

inline std::string format_double_key(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r, const Checkpoint& ck) {
    auto ndcg_json = [](const MeanNdcg& m) {
        return nlohmann::json{
            {"mean", m.mean}, {"evaluated", m.evaluated}, {"skipped", m.skipped}};
    };
    return nlohmann::json{
        {"kind", "eval_report"},
        {"head_kind", r.head_kind},
        {"engagement_only", r.engagement_only},
        {"queries_evaluated", r.queries_evaluated},
        {"k", r.k},
        {"auc", {{"ctr", r.auc_ctr}, {"atc", r.auc_atc}, {"cvr", r.auc_cvr}}},
        {"ndcg",
         {{"click", ndcg_json(r.ndcg_click)},
          {"atc", ndcg_json(r.ndcg_atc)},
          {"conversion", ndcg_json(r.ndcg_conversion)},
          {"relevance", ndcg_json(r.ndcg_relevance)}}},
        {"value_weights",
         {{"alpha", r.weights.alpha},
          {"beta", r.weights.beta},
          {"gamma", r.weights.gamma},
          {"relevance_weight", r.weights.relevance_weight()},
          {"normalize_rel", r.normalize_rel}}},
        {"split",
         {{"seed", ck.split.seed},
          {"train_ratio", ck.split.train_ratio},
          {"partition", "eval"}}},
        {"checkpoint_config_hash", ck.config_hash},
    };
}

inline EvalReport cmd_eval(const std::filesystem::path& ckpt_path,
                           const std::filesystem::path& dataset_path,
                           const std::filesystem::path& out_path, const ValueWeights& weights,
                           bool normalize_rel = false, std::size_t k = 10) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const Dataset ds = load_dataset(dataset_path);
    const SplitDataset split = split_dataset(ds, ck.split);
    const EvalReport report = evaluate_checkpoint(ck, split.eval, weights, normalize_rel, k);
    atomic_write(out_path, eval_report_to_json(report, ck).dump(2) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// sweep

inline std::vector<SweepPoint> cmd_sweep(const std::filesystem::path& ckpt_path,
                                         const std::filesystem::path& dataset_path,
                                         const std::string& grid_spec,
                                         const std::filesystem::path& out_path,
                                         std::size_t k = 10) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const Dataset ds = load_dataset(dataset_path);
    const SplitDataset split = split_dataset(ds, ck.split);
    const std::vector<double> grid = parse_grid(grid_spec);

    SweepInput input;
    for (const auto& row : forward_by_query(ck, split.eval)) {
        std::vector<SweepCandidate> candidates;
        candidates.reserve(row.impressions.size());
        for (std::size_t i = 0; i < row.impressions.size(); ++i) {
            const Impression& imp = *row.impressions[i];
            const HeadOutputs& out = row.outputs[i];
            SweepCandidate c;
            c.item_id = imp.item_id;
            c.s_rel = ck.engagement_only ? out.y_ctr : out.s_rel;
            c.y_cvr = out.y_cvr;
            c.grade = imp.grade ? grade_value(*imp.grade) : 0;
            c.converted = imp.converted;
            candidates.push_back(std::move(c));
        }
        input[row.query->id] = std::move(candidates);
    }
    const std::vector<SweepPoint> points = tradeoff_sweep(input, grid, k);
    atomic_write(out_path, sweep_csv(points));
    nlohmann::json grid_json = nlohmann::json::array();
    for (const double w : grid) {
        grid_json.push_back(w);
    }
    const nlohmann::json prov{{"kind", "provenance"},
                              {"command", "sweep"},
                              {"checkpoint_config_hash", ck.config_hash},
                              {"grid_spec", grid_spec},
                              {"grid", grid_json},
                              {"k", k}};
    atomic_write(out_path.string() + ".provenance.json", prov.dump(2) + "\n");
    return points;
}

// ---------------------------------------------------------------------------
// score

inline std::string cmd_score(const std::filesystem::path& ckpt_path,
                             const std::string& query_text, const std::string& intent_category,
                             const std::filesystem::path& items_path,
                             const ValueWeights& weights, bool normalize_rel = false) {
    weights.validate();
    const Checkpoint ck = load_checkpoint(ckpt_path);
    if (ck.engagement_only && weights.relevance_weight() > 1e-12) {
        throw std::runtime_error(
            "engagement-only checkpoint cannot serve a relevance weight > 0 (its relevance "
            "tower is untrained); pass weights with alpha + beta + gamma = 1");
    }
    Query query;
    query.id = "q";
    query.text = tokenize(query_text);
    query.intent_category = intent_category;
    if (query.text.empty()) {
        throw std::runtime_error("query text is empty");
    }
    const Dataset items_ds = load_dataset(items_path);
    if (items_ds.items.empty()) {
        throw std::runtime_error("items file contains no items");
    }

    struct Row {
        std::string item_id;
        double score, s_rel, y_ctr, y_atc, y_cvr;
    };
    std::map<std::string, Row> rows;
    std::vector<ScoredItem> scored;
    for (const Item& item : items_ds.items) {
        const FeatureVector fv =
            build_features(query, item, ck.featurizer.stats, ck.featurizer.config);
        const HeadOutputs out = forward(ck.params, fv).first;
        const double s = value_score(out, weights, normalize_rel);
        rows[item.id] = Row{item.id, s, out.s_rel, out.y_ctr, out.y_atc, out.y_cvr};
        scored.push_back({item.id, s});
    }
    std::string table = "rank\titem_id\tscore\ts_rel\ty_ctr\ty_atc\ty_cvr\n";
    std::size_t rank = 1;
    for (const auto& s : rank_items(std::move(scored))) {
        const Row& r = rows.at(s.item_id);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%zu\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", rank,
                      r.item_id.c_str(), r.score, r.s_rel, r.y_ctr, r.y_atc, r.y_cvr);
        table += buf;
        ++rank;
    }
    return table;
}

}  // namespace relrank
