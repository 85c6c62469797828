#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace relrank {

// Mann-Whitney AUC via rank-sum with average ranks for ties: exactly
// (#concordant + 0.5 * #tied) / (#pos * #neg), in O(n log n). Rank sums are
// multiples of 0.5 well below 2^53, so this is bit-identical to the O(n^2)
// pairwise enumeration.
inline double auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("auc: scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool l : labels) {
        n_pos += l ? 1 : 0;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auc: needs at least one positive and one negative label");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        // ranks are 1-based; tied group [i, j) shares the average rank
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) {
                pos_rank_sum += avg_rank;
            }
        }
        i = j;
    }
    const double u = pos_rank_sum -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double gain_from_grade(int grade) {
    return std::exp2(static_cast<double>(grade)) - 1.0;
}

// Position-discounted sum of the first k gains: sum gains[i-1] / log2(i+1).
inline double dcg_at_k(const std::vector<double>& gains, std::size_t k) {
    if (k < 1) {
        throw std::invalid_argument("dcg_at_k: k must be >= 1");
    }
    const std::size_t n = std::min(k, gains.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dcg += gains[i] / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg;
}

inline std::vector<double> grade_gains(const std::vector<int>& grades) {
    std::vector<double> gains;
    gains.reserve(grades.size());
    for (int g : grades) {
        gains.push_back(gain_from_grade(g));
    }
    return gains;
}

// NDCG@k over grades in ranked order, gain 2^r - 1. All-zero grades yield
// 0.0 here; mean_ndcg excludes such queries instead of averaging them.
inline double ndcg_at_k(const std::vector<int>& ranked_grades, std::size_t k) {
    const auto gains = grade_gains(ranked_grades);
    auto ideal = gains;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double idcg = dcg_at_k(ideal, k);
    if (idcg == 0.0) {
        return 0.0;
    }
    return dcg_at_k(gains, k) / idcg;
}

struct MeanNdcg {
    double mean = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // queries with all-zero gains, excluded from the mean
};

inline MeanNdcg mean_ndcg(const std::vector<std::vector<int>>& per_query_ranked_grades,
                          std::size_t k) {
    MeanNdcg result;
    double total = 0.0;
    for (const auto& grades : per_query_ranked_grades) {
        const bool has_gain = std::any_of(grades.begin(), grades.end(),
                                          [](int g) { return g > 0; });
        if (!has_gain) {
            ++result.skipped;
            continue;
        }
        total += ndcg_at_k(grades, k);
        ++result.evaluated;
    }
    if (result.evaluated == 0) {
        throw std::runtime_error("mean_ndcg: no evaluable queries (all gains zero)");
    }
    result.mean = total / static_cast<double>(result.evaluated);
    return result;
}

}  // namespace relrank
