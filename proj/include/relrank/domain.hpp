#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "relrank/io.hpp"

namespace relrank {

// Ordinal relevance label. The ordering 0 < 1 < 2 is meaningful everywhere:
// 0 irrelevant, 1 moderately relevant, 2 highly relevant.
enum class RelevanceGrade : int {
    irrelevant = 0,
    moderately_relevant = 1,
    highly_relevant = 2,
};

inline int grade_value(RelevanceGrade g) { return static_cast<int>(g); }

inline std::optional<RelevanceGrade> grade_from_int(int v) {
    if (v < 0 || v > 2) {
        return std::nullopt;
    }
    return static_cast<RelevanceGrade>(v);
}

inline RelevanceGrade grade_max(RelevanceGrade a, RelevanceGrade b) { return a < b ? b : a; }
inline RelevanceGrade grade_min(RelevanceGrade a, RelevanceGrade b) { return a < b ? a : b; }

// Lowercase, strip punctuation, split on whitespace. Tokens that end up empty
// after stripping are dropped. Idempotent: tokenize(join(tokens)) == tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isspace(uc)) {
            flush();
        } else if (std::isalnum(uc) || uc >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(uc)));
        }
        // ASCII punctuation is stripped
    }
    flush();
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

struct HistoricalStats {
    std::uint64_t impressions = 0;
    std::uint64_t clicks = 0;
    std::uint64_t atcs = 0;
    std::uint64_t conversions = 0;

    // funnel: conversions <= atcs <= clicks <= impressions
    bool funnel_ok() const {
        return conversions <= atcs && atcs <= clicks && clicks <= impressions;
    }

    bool operator==(const HistoricalStats&) const = default;
};

struct Query {
    std::string id;
    std::vector<std::string> text;  // canonical tokens
    std::string intent_category;

    bool operator==(const Query&) const = default;
};

struct Item {
    std::string id;
    std::vector<std::string> title;
    std::vector<std::string> description;
    double price = 0.0;
    std::string category;
    std::string brand;
    HistoricalStats stats;

    bool operator==(const Item&) const = default;
};

struct Impression {
    std::string query_id;
    std::string item_id;
    int position = 1;  // 1-based rank shown
    bool clicked = false;
    bool added_to_cart = false;
    bool converted = false;
    std::optional<RelevanceGrade> grade;  // ground truth when known

    bool funnel_ok() const {
        return (!converted || added_to_cart) && (!added_to_cart || clicked);
    }

    bool operator==(const Impression&) const = default;
};

struct Dataset {
    std::vector<Query> queries;
    std::vector<Item> items;
    std::vector<Impression> impressions;

    // rebuilt indexes; not part of value identity
    std::unordered_map<std::string, std::size_t> query_index;
    std::unordered_map<std::string, std::size_t> item_index;
    std::map<std::string, std::vector<std::size_t>> by_query;  // listwise grouping

    void rebuild_index() {
        query_index.clear();
        item_index.clear();
        by_query.clear();
        for (std::size_t i = 0; i < queries.size(); ++i) {
            query_index.emplace(queries[i].id, i);
        }
        for (std::size_t i = 0; i < items.size(); ++i) {
            item_index.emplace(items[i].id, i);
        }
        for (std::size_t i = 0; i < impressions.size(); ++i) {
            by_query[impressions[i].query_id].push_back(i);
        }
    }

    const Query* find_query(const std::string& id) const {
        auto it = query_index.find(id);
        return it == query_index.end() ? nullptr : &queries[it->second];
    }

    const Item* find_item(const std::string& id) const {
        auto it = item_index.find(id);
        return it == item_index.end() ? nullptr : &items[it->second];
    }
};

inline bool dataset_equal(const Dataset& a, const Dataset& b) {
    return a.queries == b.queries && a.items == b.items && a.impressions == b.impressions;
}

struct Violation {
    std::string where;
    std::string message;
};

// Every invariant violation, with locating identifiers. Empty report == valid.
inline std::vector<Violation> validate_dataset(const Dataset& ds) {
    std::vector<Violation> report;
    std::unordered_set<std::string> query_ids;
    std::unordered_set<std::string> item_ids;

    for (const auto& q : ds.queries) {
        if (!query_ids.insert(q.id).second) {
            report.push_back({"query " + q.id, "duplicate query id"});
        }
        if (q.text.empty()) {
            report.push_back({"query " + q.id, "empty text"});
        }
    }
    for (const auto& it : ds.items) {
        if (!item_ids.insert(it.id).second) {
            report.push_back({"item " + it.id, "duplicate item id"});
        }
        if (it.title.empty()) {
            report.push_back({"item " + it.id, "empty title"});
        }
        if (!(it.price >= 0.0)) {
            report.push_back({"item " + it.id, "negative price"});
        }
        if (!it.stats.funnel_ok()) {
            report.push_back({"item " + it.id,
                              "stats violate funnel monotonicity (conversions <= atcs <= "
                              "clicks <= impressions)"});
        }
    }
    std::unordered_set<std::string> pairs;
    for (const auto& imp : ds.impressions) {
        const std::string where = "impression (" + imp.query_id + "," + imp.item_id + ")";
        if (query_ids.count(imp.query_id) == 0) {
            report.push_back({where, "references unknown query_id"});
        }
        if (item_ids.count(imp.item_id) == 0) {
            report.push_back({where, "references unknown item_id"});
        }
        if (!pairs.insert(imp.query_id + "\x1f" + imp.item_id).second) {
            report.push_back({where, "duplicate (query_id,item_id) pair"});
        }
        if (imp.position < 1) {
            report.push_back({where, "position must be >= 1"});
        }
        if (!imp.funnel_ok()) {
            report.push_back({where, "violates converted => added_to_cart => clicked"});
        }
    }
    return report;
}

namespace detail {

inline std::string require_string(const nlohmann::json& obj, const char* key, int lineno) {
    if (!obj.contains(key) || !obj[key].is_string()) {
        throw std::runtime_error("line " + std::to_string(lineno) + ": missing string field '" +
                                 key + "'");
    }
    return obj[key].get<std::string>();
}

inline std::uint64_t require_count(const nlohmann::json& obj, const char* key, int lineno) {
    if (!obj.contains(key) || !obj[key].is_number_integer() || obj[key].get<std::int64_t>() < 0) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": missing non-negative integer field '" + key + "'");
    }
    return obj[key].get<std::uint64_t>();
}

inline bool require_bool(const nlohmann::json& obj, const char* key, int lineno) {
    if (!obj.contains(key) || !obj[key].is_boolean()) {
        throw std::runtime_error("line " + std::to_string(lineno) + ": missing boolean field '" +
                                 key + "'");
    }
    return obj[key].get<bool>();
}

}  // namespace detail

// JSONL loader. Rejects any file whose records violate the schema or the
// dataset invariants; error messages carry the offending line number or ids.
inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dataset: " + path.string());
    }
    Dataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
        }
        const std::string kind = detail::require_string(obj, "kind", lineno);
        if (kind == "query") {
            Query q;
            q.id = detail::require_string(obj, "id", lineno);
            q.text = tokenize(detail::require_string(obj, "text", lineno));
            q.intent_category = detail::require_string(obj, "intent_category", lineno);
            if (q.text.empty()) {
                throw std::runtime_error("line " + std::to_string(lineno) + ": query " + q.id +
                                         " has empty text");
            }
            ds.queries.push_back(std::move(q));
        } else if (kind == "item") {
            Item item;
            item.id = detail::require_string(obj, "id", lineno);
            item.title = tokenize(detail::require_string(obj, "title", lineno));
            item.description = tokenize(detail::require_string(obj, "description", lineno));
            if (!obj.contains("price") || !obj["price"].is_number()) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": missing number field 'price'");
            }
            item.price = obj["price"].get<double>();
            item.category = detail::require_string(obj, "category", lineno);
            item.brand = detail::require_string(obj, "brand", lineno);
            item.stats.impressions = detail::require_count(obj, "impressions", lineno);
            item.stats.clicks = detail::require_count(obj, "clicks", lineno);
            item.stats.atcs = detail::require_count(obj, "atcs", lineno);
            item.stats.conversions = detail::require_count(obj, "conversions", lineno);
            if (item.title.empty()) {
                throw std::runtime_error("line " + std::to_string(lineno) + ": item " + item.id +
                                         " has empty title");
            }
            if (item.price < 0.0) {
                throw std::runtime_error("line " + std::to_string(lineno) + ": item " + item.id +
                                         " has negative price");
            }
            if (!item.stats.funnel_ok()) {
                throw std::runtime_error("line " + std::to_string(lineno) + ": item " + item.id +
                                         " stats violate funnel monotonicity");
            }
            ds.items.push_back(std::move(item));
        } else if (kind == "impression") {
            Impression imp;
            imp.query_id = detail::require_string(obj, "query_id", lineno);
            imp.item_id = detail::require_string(obj, "item_id", lineno);
            if (!obj.contains("position") || !obj["position"].is_number_integer()) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": missing integer field 'position'");
            }
            imp.position = obj["position"].get<int>();
            imp.clicked = detail::require_bool(obj, "clicked", lineno);
            imp.added_to_cart = detail::require_bool(obj, "added_to_cart", lineno);
            imp.converted = detail::require_bool(obj, "converted", lineno);
            if (obj.contains("grade") && !obj["grade"].is_null()) {
                if (!obj["grade"].is_number_integer()) {
                    throw std::runtime_error("line " + std::to_string(lineno) +
                                             ": grade must be an integer or null");
                }
                auto g = grade_from_int(obj["grade"].get<int>());
                if (!g) {
                    throw std::runtime_error("line " + std::to_string(lineno) +
                                             ": grade out of range (expected 0, 1, or 2)");
                }
                imp.grade = *g;
            }
            if (imp.position < 1) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": position must be >= 1");
            }
            if (!imp.funnel_ok()) {
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": impression violates converted => added_to_cart => "
                                         "clicked");
            }
            ds.impressions.push_back(std::move(imp));
        } else {
            throw std::runtime_error("line " + std::to_string(lineno) + ": unknown kind '" +
                                     kind + "'");
        }
    }
    ds.rebuild_index();
    // Referential and uniqueness checks need the whole file.
    const auto report = validate_dataset(ds);
    if (!report.empty()) {
        throw std::runtime_error(path.string() + ": " + report.front().where + ": " +
                                 report.front().message);
    }
    return ds;
}

inline std::string dataset_to_jsonl(const Dataset& ds) {
    std::string out;
    for (const auto& q : ds.queries) {
        nlohmann::json obj{{"kind", "query"},
                           {"id", q.id},
                           {"text", join_tokens(q.text)},
                           {"intent_category", q.intent_category}};
        out += obj.dump();
        out.push_back('\n');
    }
    for (const auto& item : ds.items) {
        nlohmann::json obj{{"kind", "item"},
                           {"id", item.id},
                           {"title", join_tokens(item.title)},
                           {"description", join_tokens(item.description)},
                           {"price", item.price},
                           {"category", item.category},
                           {"brand", item.brand},
                           {"impressions", item.stats.impressions},
                           {"clicks", item.stats.clicks},
                           {"atcs", item.stats.atcs},
                           {"conversions", item.stats.conversions}};
        out += obj.dump();
        out.push_back('\n');
    }
    for (const auto& imp : ds.impressions) {
        nlohmann::json obj{{"kind", "impression"},
                           {"query_id", imp.query_id},
                           {"item_id", imp.item_id},
                           {"position", imp.position},
                           {"clicked", imp.clicked},
                           {"added_to_cart", imp.added_to_cart},
                           {"converted", imp.converted}};
        obj["grade"] = imp.grade ? nlohmann::json(grade_value(*imp.grade)) : nlohmann::json();
        out += obj.dump();
        out.push_back('\n');
    }
    return out;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    atomic_write(path, dataset_to_jsonl(ds));
}

}  // namespace relrank
