#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "relrank/domain.hpp"
#include "relrank/featurizer.hpp"
#include "relrank/io.hpp"
#include "relrank/rng.hpp"

namespace relrank {

enum class LabelProvenance {
    human_only,
    audited_max,
    audited_min,
    bulk_llm,  // no human label existed; the bulk labeler graded the pair
};

inline std::string provenance_name(LabelProvenance p) {
    switch (p) {
        case LabelProvenance::human_only: return "human_only";
        case LabelProvenance::audited_max: return "audited_max";
        case LabelProvenance::audited_min: return "audited_min";
        case LabelProvenance::bulk_llm: return "bulk_llm";
    }
    throw std::logic_error("unreachable provenance");
}

inline LabelProvenance provenance_from_name(const std::string& name) {
    if (name == "human_only") return LabelProvenance::human_only;
    if (name == "audited_max") return LabelProvenance::audited_max;
    if (name == "audited_min") return LabelProvenance::audited_min;
    if (name == "bulk_llm") return LabelProvenance::bulk_llm;
    throw std::runtime_error("unknown label provenance '" + name + "'");
}

// Label lineage for one pair: human annotation, optional audit verdict, and
// the reconciled final grade.
struct LabelRecord {
    std::string query_id;
    std::string item_id;
    std::optional<RelevanceGrade> human_grade;  // absent only for bulk_llm
    std::optional<RelevanceGrade> audit_grade;  // present iff audited_*
    RelevanceGrade final_grade = RelevanceGrade::irrelevant;
    LabelProvenance provenance = LabelProvenance::human_only;

    bool operator==(const LabelRecord&) const = default;
};

enum class OracleKind { rule_based, replay_file, remote_http };

inline std::string oracle_kind_name(OracleKind k) {
    switch (k) {
        case OracleKind::rule_based: return "rule_based";
        case OracleKind::replay_file: return "replay_file";
        case OracleKind::remote_http: return "remote_http";
    }
    throw std::logic_error("unreachable oracle kind");
}

inline OracleKind oracle_kind_from_name(const std::string& name) {
    if (name == "rule_based") return OracleKind::rule_based;
    if (name == "replay_file") return OracleKind::replay_file;
    if (name == "remote_http") return OracleKind::remote_http;
    throw std::runtime_error("unknown oracle kind '" + name +
                             "' (expected rule_based, replay_file, or remote_http)");
}

struct OracleConfig {
    OracleKind kind = OracleKind::rule_based;
    std::string endpoint;     // remote_http: http://host:port[/path]
    std::string replay_path;  // replay_file
    double timeout_s = 5.0;
    std::size_t max_concurrency = 4;
    std::uint64_t seed = 1;
    double noise_rate = 0.0;  // rule_based label noise
    double tau1 = 0.05;       // overlap >= tau1 -> at least moderately relevant
    double tau2 = 0.25;       // overlap >= tau2 -> highly relevant

    void validate() const {
        if (kind == OracleKind::remote_http && endpoint.empty()) {
            throw std::runtime_error("remote_http oracle requires an endpoint");
        }
        if (kind == OracleKind::replay_file && replay_path.empty()) {
            throw std::runtime_error("replay_file oracle requires a path");
        }
        if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
            throw std::runtime_error("oracle noise_rate must lie in [0,1]");
        }
        if (!(tau1 > 0.0 && tau1 <= tau2 && tau2 <= 1.0)) {
            throw std::runtime_error("oracle thresholds must satisfy 0 < tau1 <= tau2 <= 1");
        }
        if (max_concurrency < 1) {
            throw std::runtime_error("oracle max_concurrency must be >= 1");
        }
    }
};

namespace detail {

// Always moves exactly one grade step: 0 and 2 fold inward to 1, 1 flips to
// either end. Keeps |perturbed - original| == 1, so within-1 accuracy stays
// 1.0 while three-class accuracy drops by the noise rate.
inline RelevanceGrade perturb_within_one(RelevanceGrade g, std::uint64_t direction_bits) {
    switch (grade_value(g)) {
        case 0: return RelevanceGrade::moderately_relevant;
        case 2: return RelevanceGrade::moderately_relevant;
        default:
            return (direction_bits & 1) ? RelevanceGrade::highly_relevant
                                        : RelevanceGrade::irrelevant;
    }
}

struct ParsedEndpoint {
    std::string base;  // scheme://host:port
    std::string path;  // /...
};

inline ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    std::string rest = endpoint;
    std::string scheme = "http://";
    const auto scheme_end = endpoint.find("://");
    if (scheme_end != std::string::npos) {
        scheme = endpoint.substr(0, scheme_end + 3);
        rest = endpoint.substr(scheme_end + 3);
    }
    const auto slash = rest.find('/');
    ParsedEndpoint out;
    if (slash == std::string::npos) {
        out.base = scheme + rest;
        out.path = "/";
    } else {
        out.base = scheme + rest.substr(0, slash);
        out.path = rest.substr(slash);
    }
    return out;
}

}  // namespace detail

// The grading oracle behind the label pipeline. rule_based grades by token
// overlap (with optional seeded noise), replay_file answers from a recorded
// JSONL table, remote_http POSTs {"query","item"} and expects {"grade"}.
class Oracle {
public:
    explicit Oracle(OracleConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        if (cfg_.kind == OracleKind::replay_file) {
            load_replay();
        }
    }

    const OracleConfig& config() const { return cfg_; }

    RelevanceGrade grade(const std::string& query_text, const std::string& item_text) const {
        switch (cfg_.kind) {
            case OracleKind::rule_based: return grade_rule_based(query_text, item_text);
            case OracleKind::replay_file: return grade_replay(query_text, item_text);
            case OracleKind::remote_http: return grade_remote(query_text, item_text);
        }
        throw std::logic_error("unreachable oracle kind");
    }

    // Grades many pairs; remote calls run concurrently up to max_concurrency
    // and results are merged by position, never by completion order. Failures
    // name the pair via pair_names when given.
    std::vector<RelevanceGrade> grade_batch(
        const std::vector<std::pair<std::string, std::string>>& pairs,
        const std::vector<std::string>* pair_names = nullptr) const {
        if (pair_names && pair_names->size() != pairs.size()) {
            throw std::invalid_argument("grade_batch: pair_names length mismatch");
        }
        auto wrap = [&](std::size_t i, const std::exception& e) -> std::runtime_error {
            const std::string who =
                pair_names ? (*pair_names)[i] : "'" + pairs[i].first + "' / '" +
                                                    pairs[i].second + "'";
            return std::runtime_error("oracle failure for pair " + who + ": " + e.what());
        };
        std::vector<RelevanceGrade> out(pairs.size(), RelevanceGrade::irrelevant);
        if (cfg_.kind != OracleKind::remote_http) {
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                try {
                    out[i] = grade(pairs[i].first, pairs[i].second);
                } catch (const std::exception& e) {
                    throw wrap(i, e);
                }
            }
            return out;
        }
        for (std::size_t start = 0; start < pairs.size(); start += cfg_.max_concurrency) {
            const std::size_t end = std::min(pairs.size(), start + cfg_.max_concurrency);
            std::vector<std::future<RelevanceGrade>> futures;
            futures.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                futures.push_back(std::async(std::launch::async, [this, &pairs, i] {
                    return grade(pairs[i].first, pairs[i].second);
                }));
            }
            for (std::size_t i = start; i < end; ++i) {
                try {
                    out[i] = futures[i - start].get();
                } catch (const std::exception& e) {
                    throw wrap(i, e);
                }
            }
        }
        return out;
    }

private:
    RelevanceGrade grade_rule_based(const std::string& query_text,
                                    const std::string& item_text) const {
        const double overlap = string_similarity(tokenize(query_text), tokenize(item_text));
        RelevanceGrade g = RelevanceGrade::irrelevant;
        if (overlap >= cfg_.tau2) {
            g = RelevanceGrade::highly_relevant;
        } else if (overlap >= cfg_.tau1) {
            g = RelevanceGrade::moderately_relevant;
        }
        if (cfg_.noise_rate > 0.0) {
            const std::uint64_t pair_hash = hash_combine(
                hash_combine(cfg_.seed, stable_hash(query_text)), stable_hash(item_text));
            if (u64_to_unit(splitmix64(pair_hash)) < cfg_.noise_rate) {
                g = detail::perturb_within_one(g, splitmix64(pair_hash ^ 0x5a5a5a5a5a5a5a5aull));
            }
        }
        return g;
    }

    RelevanceGrade grade_replay(const std::string& query_text,
                                const std::string& item_text) const {
        const auto it = replay_.find(query_text + '\x1f' + item_text);
        if (it == replay_.end()) {
            throw std::runtime_error("replay oracle has no entry for query '" + query_text +
                                     "', item '" + item_text + "'");
        }
        return it->second;
    }

    RelevanceGrade grade_remote(const std::string& query_text,
                                const std::string& item_text) const {
        const auto ep = detail::parse_endpoint(cfg_.endpoint);
        const nlohmann::json request{{"query", query_text}, {"item", item_text}};
        const std::string body = request.dump();
        std::string last_error;
        for (int attempt = 0; attempt < 3; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(200 * (1 << (attempt - 1))));
            }
            httplib::Client client(ep.base);
            const auto timeout_ms = static_cast<std::int64_t>(cfg_.timeout_s * 1000.0);
            client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
            client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
            auto res = client.Post(ep.path, body, "application/json");
            if (!res) {
                last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP status " + std::to_string(res->status);
                continue;
            }
            nlohmann::json reply;
            try {
                reply = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw std::runtime_error(std::string("malformed oracle response: ") + e.what());
            }
            if (!reply.contains("grade") || !reply["grade"].is_number_integer()) {
                throw std::runtime_error("malformed oracle response: missing integer 'grade'");
            }
            const auto g = grade_from_int(reply["grade"].get<int>());
            if (!g) {
                throw std::runtime_error("malformed oracle response: grade " +
                                         std::to_string(reply["grade"].get<int>()) +
                                         " out of range");
            }
            return *g;
        }
        throw std::runtime_error("oracle request to " + cfg_.endpoint +
                                 " failed after 3 attempts: " + last_error);
    }

    void load_replay() {
        const std::string text = read_file(cfg_.replay_path);
        std::size_t start = 0;
        int lineno = 0;
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string::npos) {
                end = text.size();
            }
            const std::string line = text.substr(start, end - start);
            start = end + 1;
            ++lineno;
            if (line.empty()) {
                continue;
            }
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw std::runtime_error(cfg_.replay_path + " line " + std::to_string(lineno) +
                                         ": " + e.what());
            }
            const auto g = grade_from_int(obj.at("grade").get<int>());
            if (!g) {
                throw std::runtime_error(cfg_.replay_path + " line " + std::to_string(lineno) +
                                         ": grade out of range");
            }
            replay_[obj.at("query").get<std::string>() + '\x1f' +
                    obj.at("item").get<std::string>()] = *g;
        }
    }

    OracleConfig cfg_;
    std::map<std::string, RelevanceGrade> replay_;
};

inline RelevanceGrade query_oracle(const OracleConfig& cfg, const std::string& query_text,
                                   const std::string& item_text) {
    return Oracle(cfg).grade(query_text, item_text);
}

// Re-examine a human "irrelevant" verdict when both engagement ranks sit in
// the query's top half. Percentiles are 0 at the best rank.
inline bool audit_trigger(RelevanceGrade human_grade, double atcr_percentile,
                          double cvr_percentile) {
    return human_grade == RelevanceGrade::irrelevant && atcr_percentile <= 0.5 &&
           cvr_percentile <= 0.5;
}

// Category-backed reconciliation: a predicted category endorses the pair, so
// the more generous grade wins; otherwise keep the more conservative one.
inline std::pair<RelevanceGrade, LabelProvenance> reconcile_q2t(
    RelevanceGrade human, RelevanceGrade audit, const std::string& item_category,
    const std::set<std::string>& predicted_set) {
    if (predicted_set.count(item_category) != 0) {
        return {grade_max(human, audit), LabelProvenance::audited_max};
    }
    return {grade_min(human, audit), LabelProvenance::audited_min};
}

// Percentile rank of each value when sorted descending, ties averaged:
// percentile = (avg_rank - 1) / (n - 1), 0 for the single-element case.
inline std::vector<double> percentile_ranks_desc(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> pct(n, 0.0);
    if (n <= 1) {
        return pct;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && values[order[j]] == values[order[i]]) {
            ++j;
        }
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const double p = (avg_rank - 1.0) / (static_cast<double>(n) - 1.0);
        for (std::size_t k = i; k < j; ++k) {
            pct[order[k]] = p;
        }
        i = j;
    }
    return pct;
}

// Q2T stand-in: maps a query intent to the set of item categories it
// plausibly targets. Unknown intents predict the empty set.
class CategoryPredictor {
public:
    static CategoryPredictor from_dataset(const Dataset& ds) {
        CategoryPredictor p;
        for (const auto& q : ds.queries) {
            p.map_[q.intent_category].insert(q.intent_category);
        }
        return p;
    }

    // JSON object: {"intent": ["category", ...], ...}
    static CategoryPredictor from_file(const std::filesystem::path& path) {
        CategoryPredictor p;
        const auto j = nlohmann::json::parse(read_file(path));
        if (!j.is_object()) {
            throw std::runtime_error(path.string() +
                                     ": expected a JSON object of intent -> categories");
        }
        for (const auto& [intent, cats] : j.items()) {
            auto& set = p.map_[intent];
            for (const auto& c : cats) {
                set.insert(c.get<std::string>());
            }
        }
        return p;
    }

    std::set<std::string> predict(const std::string& intent) const {
        const auto it = map_.find(intent);
        return it == map_.end() ? std::set<std::string>{} : it->second;
    }

private:
    std::map<std::string, std::set<std::string>> map_;
};

struct Accuracy {
    double acc3 = 0.0;
    double within1 = 0.0;
};

inline Accuracy labeler_accuracy(const std::vector<RelevanceGrade>& predictions,
                                 const std::vector<RelevanceGrade>& references) {
    if (predictions.size() != references.size()) {
        throw std::invalid_argument("labeler_accuracy: sequences differ in length");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("labeler_accuracy: empty input");
    }
    std::size_t exact = 0;
    std::size_t close = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int d = std::abs(grade_value(predictions[i]) - grade_value(references[i]));
        exact += d == 0 ? 1 : 0;
        close += d <= 1 ? 1 : 0;
    }
    const double n = static_cast<double>(predictions.size());
    return {static_cast<double>(exact) / n, static_cast<double>(close) / n};
}

using PairKey = std::pair<std::string, std::string>;  // (query_id, item_id)
using HumanLabels = std::map<PairKey, RelevanceGrade>;

// Copies ground truth, then perturbs each label by exactly one grade step
// with probability noise_rate. Deterministic per (seed, pair).
inline HumanLabels simulate_human_labels(const Dataset& ds, double noise_rate,
                                         std::uint64_t seed) {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
        throw std::invalid_argument("noise_rate must lie in [0,1]");
    }
    HumanLabels labels;
    for (const auto& imp : ds.impressions) {
        if (!imp.grade) {
            continue;
        }
        RelevanceGrade g = *imp.grade;
        const std::uint64_t pair_hash = hash_combine(
            hash_combine(seed, stable_hash(imp.query_id)), stable_hash(imp.item_id));
        if (u64_to_unit(splitmix64(pair_hash)) < noise_rate) {
            g = detail::perturb_within_one(g, splitmix64(pair_hash ^ 0x3c3c3c3c3c3c3c3cull));
        }
        labels[{imp.query_id, imp.item_id}] = g;
    }
    if (labels.empty()) {
        throw std::runtime_error(
            "simulate_human_labels: dataset carries no ground-truth grades");
    }
    return labels;
}

struct PipelineReport {
    std::size_t total = 0;
    std::size_t human_only = 0;
    std::size_t audited_max = 0;
    std::size_t audited_min = 0;
    std::size_t bulk_llm = 0;
    std::size_t triggered = 0;
    bool accuracy_available = false;  // ground truth present on impressions
    double acc3 = 0.0;
    double within1 = 0.0;
};

// The full refinement flow: per-query engagement percentiles, audit
// triggering, oracle audit, category reconciliation, and bulk labeling of
// pairs without human annotations. Output is ordered by (query_id, item_id).
inline std::pair<std::vector<LabelRecord>, PipelineReport> run_pipeline(
    const Dataset& ds, const HumanLabels& human_labels, const OracleConfig& audit_cfg,
    const OracleConfig& bulk_cfg, const CategoryPredictor& q2t, double prior_strength = 10.0,
    double prior_rate = 0.05) {
    Dataset indexed;
    const Dataset* dsp = &ds;
    if (ds.query_index.size() != ds.queries.size() || ds.by_query.empty()) {
        indexed = ds;
        indexed.rebuild_index();
        dsp = &indexed;
    }
    const Dataset& data = *dsp;
    const Oracle audit_oracle(audit_cfg);
    const Oracle bulk_oracle(bulk_cfg);

    struct Pending {
        const Impression* imp = nullptr;
        const Query* query = nullptr;
        const Item* item = nullptr;
        std::optional<RelevanceGrade> human;
        bool needs_audit = false;
    };
    std::vector<Pending> pending;
    pending.reserve(data.impressions.size());

    for (const auto& [query_id, imp_indices] : data.by_query) {
        const Query* query = data.find_query(query_id);
        if (!query) {
            throw std::runtime_error("impression references unknown query " + query_id);
        }
        std::vector<double> atcr(imp_indices.size());
        std::vector<double> cvr(imp_indices.size());
        for (std::size_t k = 0; k < imp_indices.size(); ++k) {
            const Impression& imp = data.impressions[imp_indices[k]];
            const Item* item = data.find_item(imp.item_id);
            if (!item) {
                throw std::runtime_error("impression references unknown item " + imp.item_id);
            }
            const Rates rates = historical_rates(item->stats, prior_strength, prior_rate);
            atcr[k] = rates.atcr;
            cvr[k] = rates.cvr;
        }
        const auto atcr_pct = percentile_ranks_desc(atcr);
        const auto cvr_pct = percentile_ranks_desc(cvr);
        for (std::size_t k = 0; k < imp_indices.size(); ++k) {
            const Impression& imp = data.impressions[imp_indices[k]];
            Pending p;
            p.imp = &imp;
            p.query = query;
            p.item = data.find_item(imp.item_id);
            const auto hit = human_labels.find({imp.query_id, imp.item_id});
            if (hit != human_labels.end()) {
                p.human = hit->second;
                p.needs_audit = audit_trigger(hit->second, atcr_pct[k], cvr_pct[k]);
            }
            pending.push_back(p);
        }
    }
    std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
        if (a.imp->query_id != b.imp->query_id) {
            return a.imp->query_id < b.imp->query_id;
        }
        return a.imp->item_id < b.imp->item_id;
    });

    // batched oracle calls, merged back by pair position
    std::vector<std::pair<std::string, std::string>> audit_pairs;
    std::vector<std::pair<std::string, std::string>> bulk_pairs;
    std::vector<std::string> audit_names;
    std::vector<std::string> bulk_names;
    std::vector<std::size_t> audit_rows;
    std::vector<std::size_t> bulk_rows;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        const Pending& p = pending[i];
        const std::string query_text = join_tokens(p.query->text);
        const std::string item_text = join_tokens(p.item->title);
        const std::string name = "(" + p.imp->query_id + "," + p.imp->item_id + ")";
        if (p.needs_audit) {
            audit_pairs.emplace_back(query_text, item_text);
            audit_names.push_back(name);
            audit_rows.push_back(i);
        } else if (!p.human) {
            bulk_pairs.emplace_back(query_text, item_text);
            bulk_names.push_back(name);
            bulk_rows.push_back(i);
        }
    }
    const std::vector<RelevanceGrade> audit_grades =
        audit_oracle.grade_batch(audit_pairs, &audit_names);
    const std::vector<RelevanceGrade> bulk_grades =
        bulk_oracle.grade_batch(bulk_pairs, &bulk_names);

    std::map<std::size_t, RelevanceGrade> audit_by_row;
    for (std::size_t k = 0; k < audit_rows.size(); ++k) {
        audit_by_row[audit_rows[k]] = audit_grades[k];
    }
    std::map<std::size_t, RelevanceGrade> bulk_by_row;
    for (std::size_t k = 0; k < bulk_rows.size(); ++k) {
        bulk_by_row[bulk_rows[k]] = bulk_grades[k];
    }

    std::vector<LabelRecord> records;
    records.reserve(pending.size());
    PipelineReport report;
    report.total = pending.size();
    report.triggered = audit_rows.size();
    std::vector<RelevanceGrade> preds;
    std::vector<RelevanceGrade> refs;
    for (std::size_t i = 0; i < pending.size(); ++i) {
        const Pending& p = pending[i];
        LabelRecord rec;
        rec.query_id = p.imp->query_id;
        rec.item_id = p.imp->item_id;
        rec.human_grade = p.human;
        if (p.needs_audit) {
            const RelevanceGrade audit = audit_by_row.at(i);
            rec.audit_grade = audit;
            const auto [final_grade, provenance] = reconcile_q2t(
                *p.human, audit, p.item->category, q2t.predict(p.query->intent_category));
            rec.final_grade = final_grade;
            rec.provenance = provenance;
            if (provenance == LabelProvenance::audited_max) {
                ++report.audited_max;
            } else {
                ++report.audited_min;
            }
        } else if (p.human) {
            rec.final_grade = *p.human;
            rec.provenance = LabelProvenance::human_only;
            ++report.human_only;
        } else {
            rec.final_grade = bulk_by_row.at(i);
            rec.provenance = LabelProvenance::bulk_llm;
            ++report.bulk_llm;
        }
        if (p.imp->grade) {
            preds.push_back(rec.final_grade);
            refs.push_back(*p.imp->grade);
        }
        records.push_back(std::move(rec));
    }
    if (!preds.empty()) {
        const Accuracy acc = labeler_accuracy(preds, refs);
        report.accuracy_available = true;
        report.acc3 = acc.acc3;
        report.within1 = acc.within1;
    }
    return {std::move(records), report};
}

inline std::string labels_to_jsonl(const std::vector<LabelRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        nlohmann::json obj{{"kind", "label"},
                           {"query_id", rec.query_id},
                           {"item_id", rec.item_id},
                           {"final_grade", grade_value(rec.final_grade)},
                           {"provenance", provenance_name(rec.provenance)}};
        obj["human_grade"] =
            rec.human_grade ? nlohmann::json(grade_value(*rec.human_grade)) : nlohmann::json();
        obj["audit_grade"] =
            rec.audit_grade ? nlohmann::json(grade_value(*rec.audit_grade)) : nlohmann::json();
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

inline std::vector<LabelRecord> labels_from_jsonl(const std::string& text,
                                                  const std::string& origin = "<labels>") {
    std::vector<LabelRecord> records;
    std::size_t start = 0;
    int lineno = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) {
            end = text.size();
        }
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(origin + " line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        LabelRecord rec;
        rec.query_id = obj.at("query_id").get<std::string>();
        rec.item_id = obj.at("item_id").get<std::string>();
        auto get_grade = [&](const char* key) -> std::optional<RelevanceGrade> {
            if (!obj.contains(key) || obj[key].is_null()) {
                return std::nullopt;
            }
            const auto g = grade_from_int(obj[key].get<int>());
            if (!g) {
                throw std::runtime_error(origin + " line " + std::to_string(lineno) + ": " +
                                         key + " out of range");
            }
            return g;
        };
        rec.human_grade = get_grade("human_grade");
        rec.audit_grade = get_grade("audit_grade");
        const auto final_grade = get_grade("final_grade");
        if (!final_grade) {
            throw std::runtime_error(origin + " line " + std::to_string(lineno) +
                                     ": missing final_grade");
        }
        rec.final_grade = *final_grade;
        rec.provenance = provenance_from_name(obj.at("provenance").get<std::string>());
        records.push_back(std::move(rec));
    }
    return records;
}

inline void save_labels(const std::vector<LabelRecord>& records,
                        const std::filesystem::path& path) {
    atomic_write(path, labels_to_jsonl(records));
}

inline std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
    return labels_from_jsonl(read_file(path), path.string());
}

}  // namespace relrank
