#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "relrank/domain.hpp"
#include "relrank/rng.hpp"

namespace relrank {

struct SplitConfig {
    std::uint64_t seed = 7;
    double train_ratio = 0.8;

    void validate() const {
        if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
            throw std::invalid_argument("train_ratio must lie strictly between 0 and 1");
        }
    }
};

// Membership is a pure function of (query_id, seed), so a query and all of
// its impressions land on the same side regardless of dataset order.
inline bool in_train_split(const std::string& query_id, const SplitConfig& cfg) {
    cfg.validate();
    const std::uint64_t h = splitmix64(hash_combine(cfg.seed, stable_hash(query_id)));
    return u64_to_unit(h) < cfg.train_ratio;
}

struct SplitDataset {
    Dataset train;
    Dataset eval;
};

// Queries and their impressions are partitioned; the item catalog is shared
// context and stays whole on both sides.
inline SplitDataset split_dataset(const Dataset& ds, const SplitConfig& cfg) {
    cfg.validate();
    SplitDataset out;
    out.train.items = ds.items;
    out.eval.items = ds.items;
    for (const auto& q : ds.queries) {
        (in_train_split(q.id, cfg) ? out.train : out.eval).queries.push_back(q);
    }
    for (const auto& imp : ds.impressions) {
        (in_train_split(imp.query_id, cfg) ? out.train : out.eval).impressions.push_back(imp);
    }
    if (out.train.queries.empty() || out.eval.queries.empty()) {
        throw std::runtime_error("degenerate split: one side has no queries (seed " +
                                 std::to_string(cfg.seed) + ", ratio " +
                                 std::to_string(cfg.train_ratio) + ")");
    }
    out.train.rebuild_index();
    out.eval.rebuild_index();
    return out;
}

}  // namespace relrank
