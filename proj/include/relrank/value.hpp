#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relrank/metrics.hpp"
#include "relrank/net.hpp"

namespace relrank {

struct ValueWeights {
    double alpha = 0.3;
    double beta = 0.3;
    double gamma = 0.3;

    double relevance_weight() const { return 1.0 - alpha - beta - gamma; }

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0 && beta >= 0.0 && beta <= 1.0 && gamma >= 0.0 &&
              gamma <= 1.0)) {
            throw std::runtime_error("value weights must each lie in [0,1]");
        }
        if (alpha + beta + gamma > 1.0 + 1e-12) {
            throw std::runtime_error(
                "value weights must satisfy alpha + beta + gamma <= 1 (the remainder is the "
                "relevance weight)");
        }
    }
};

// S = a*y_ctr + b*y_atc + g*y_cvr + (1-a-b-g)*s_rel. The relevance scalar
// enters raw on [0,2]; normalize_rel divides it by 2 for experiments that
// want all terms on [0,1].
inline double value_score(const HeadOutputs& outputs, const ValueWeights& w,
                          bool normalize_rel = false) {
    w.validate();
    const double s_rel = scalar_relevance(outputs);
    const double rel_term = normalize_rel ? s_rel / 2.0 : s_rel;
    return w.alpha * outputs.y_ctr + w.beta * outputs.y_atc + w.gamma * outputs.y_cvr +
           w.relevance_weight() * rel_term;
}

struct ScoredItem {
    std::string item_id;
    double score = 0.0;
};

// Descending by score; ties broken ascending by item_id so evaluation is a
// total order.
inline std::vector<ScoredItem> rank_items(std::vector<ScoredItem> scored) {
    for (const auto& s : scored) {
        if (!std::isfinite(s.score)) {
            throw std::runtime_error("non-finite score for item " + s.item_id);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.item_id < b.item_id;
    });
    return scored;
}

struct SweepPoint {
    double relevance_weight = 0.0;
    double ndcg_relevance = 0.0;
    double ndcg_conversion = 0.0;
};

// One candidate's precomputed predictions and labels for the sweep.
struct SweepCandidate {
    std::string item_id;
    double s_rel = 0.0;
    double y_cvr = 0.0;
    int grade = 0;
    bool converted = false;
};

using SweepInput = std::map<std::string, std::vector<SweepCandidate>>;  // by query id

// Scores every pair with w*s_rel + (1-w)*y_cvr per grid point and evaluates
// NDCG@10 against relevance grades and conversion labels.
inline std::vector<SweepPoint> tradeoff_sweep(const SweepInput& input,
                                              const std::vector<double>& grid,
                                              std::size_t k = 10) {
    if (grid.empty()) {
        throw std::runtime_error("sweep grid is empty");
    }
    for (double w : grid) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw std::runtime_error("sweep weights must lie in [0,1]");
        }
    }
    if (input.empty()) {
        throw std::runtime_error("sweep requires a non-empty labeled split");
    }
    std::vector<SweepPoint> points;
    points.reserve(grid.size());
    for (double w : grid) {
        std::vector<std::vector<int>> rel_lists;
        std::vector<std::vector<int>> conv_lists;
        for (const auto& [query_id, candidates] : input) {
            std::vector<ScoredItem> scored;
            scored.reserve(candidates.size());
            for (const auto& c : candidates) {
                scored.push_back({c.item_id, w * c.s_rel + (1.0 - w) * c.y_cvr});
            }
            const auto ranked = rank_items(std::move(scored));
            std::map<std::string, const SweepCandidate*> by_id;
            for (const auto& c : candidates) {
                by_id[c.item_id] = &c;
            }
            std::vector<int> rel_grades;
            std::vector<int> conv_grades;
            rel_grades.reserve(ranked.size());
            conv_grades.reserve(ranked.size());
            for (const auto& r : ranked) {
                const SweepCandidate* c = by_id.at(r.item_id);
                rel_grades.push_back(c->grade);
                conv_grades.push_back(c->converted ? 1 : 0);
            }
            rel_lists.push_back(std::move(rel_grades));
            conv_lists.push_back(std::move(conv_grades));
        }
        SweepPoint p;
        p.relevance_weight = w;
        p.ndcg_relevance = mean_ndcg(rel_lists, k).mean;
        p.ndcg_conversion = mean_ndcg(conv_lists, k).mean;
        points.push_back(p);
    }
    return points;
}

// "lo:hi:step" (inclusive endpoints) or a comma-separated list of weights.
inline std::vector<double> parse_grid(const std::string& spec) {
    auto parse_num = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("invalid grid number '" + s + "'");
        }
        if (pos != s.size()) {
            throw std::runtime_error("invalid grid number '" + s + "'");
        }
        return v;
    };
    std::vector<double> grid;
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            const auto colon = spec.find(':', start);
            parts.push_back(spec.substr(start, colon - start));
            if (colon == std::string::npos) {
                break;
            }
            start = colon + 1;
        }
        if (parts.size() != 3) {
            throw std::runtime_error("grid spec must be lo:hi:step or a comma list, got '" +
                                     spec + "'");
        }
        const double lo = parse_num(parts[0]);
        const double hi = parse_num(parts[1]);
        const double step = parse_num(parts[2]);
        if (!(step > 0.0) || hi < lo) {
            throw std::runtime_error("grid spec requires step > 0 and hi >= lo");
        }
        const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
        for (std::size_t i = 0; i < count; ++i) {
            double w = lo + static_cast<double>(i) * step;
            if (i + 1 == count) {
                w = std::min(w, hi);
            }
            grid.push_back(w);
        }
    } else {
        std::size_t start = 0;
        while (start <= spec.size()) {
            const auto comma = spec.find(',', start);
            const std::string tok =
                spec.substr(start, comma == std::string::npos ? std::string::npos
                                                              : comma - start);
            if (!tok.empty()) {
                grid.push_back(parse_num(tok));
            }
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
    }
    if (grid.empty()) {
        throw std::runtime_error("sweep grid is empty");
    }
    for (double w : grid) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw std::runtime_error("grid weights must lie in [0,1]");
        }
    }
    return grid;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out = "relevance_weight,ndcg_relevance,ndcg_conversion\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", p.relevance_weight,
                      p.ndcg_relevance, p.ndcg_conversion);
        out += buf;
    }
    return out;
}

}  // namespace relrank
