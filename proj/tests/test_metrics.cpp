#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "relrank/metrics.hpp"
#include "relrank/rng.hpp"

using namespace relrank;
using Catch::Matchers::WithinAbs;

namespace {

// reference: enumerate every positive/negative pair
double auc_pairwise(const std::vector<double>& scores, const std::vector<bool>& labels) {
    double num = 0.0;
    std::uint64_t pairs = 0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (!labels[p]) continue;
        for (std::size_t n = 0; n < scores.size(); ++n) {
            if (labels[n]) continue;
            ++pairs;
            if (scores[p] > scores[n]) {
                num += 1.0;
            } else if (scores[p] == scores[n]) {
                num += 0.5;
            }
        }
    }
    return num / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc hits the boundary cases") {
    CHECK(auc({0.9, 0.8, 0.2, 0.1}, {true, true, false, false}) == 1.0);
    CHECK(auc({0.1, 0.2, 0.8, 0.9}, {true, true, false, false}) == 0.0);
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, {true, true, false, false}) == 0.5);
    // positives {0.9, 0.5}, negatives {0.5, 0.1}: three wins plus one tie
    CHECK_THAT(auc({0.9, 0.5, 0.5, 0.1}, {true, false, true, false}),
               WithinAbs(0.875, 1e-15));
}

TEST_CASE("auc rejects degenerate inputs") {
    CHECK_THROWS_WITH(auc({0.1, 0.2}, {true, true}),
                      Catch::Matchers::ContainsSubstring("positive and one negative"));
    CHECK_THROWS_WITH(auc({0.1, 0.2}, {false, false}),
                      Catch::Matchers::ContainsSubstring("positive and one negative"));
    CHECK_THROWS_WITH(auc({0.1}, {true, false}),
                      Catch::Matchers::ContainsSubstring("differ in length"));
}

TEST_CASE("auc is bit-identical to pairwise enumeration under heavy ties") {
    Rng rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(60);
        std::vector<double> scores;
        std::vector<bool> labels;
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse integer grid forces tied groups
            scores.push_back(static_cast<double>(rng.uniform_index(5)) / 4.0);
            const bool l = rng.bernoulli(0.4);
            labels.push_back(l);
            (l ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = true;
        if (!has_neg) labels[labels.size() - 1] = false;
        CHECK(auc(scores, labels) == auc_pairwise(scores, labels));
    }
}

TEST_CASE("gains are 2^grade - 1") {
    CHECK(gain_from_grade(0) == 0.0);
    CHECK(gain_from_grade(1) == 1.0);
    CHECK(gain_from_grade(2) == 3.0);
    CHECK(grade_gains({2, 0, 1}) == std::vector<double>{3.0, 0.0, 1.0});
}

TEST_CASE("dcg discounts by log2 position") {
    // 3/log2(2) + 1/log2(3) + 0 = 3 + 1/log2(3)
    CHECK_THAT(dcg_at_k(grade_gains({2, 1, 0}), 10),
               WithinAbs(3.6309297535714578, 1e-14));
    CHECK(dcg_at_k(grade_gains({0, 0, 0}), 10) == 0.0);
    CHECK(dcg_at_k(grade_gains({2}), 10) == 3.0);
    // truncation: k=1 keeps only the head
    CHECK(dcg_at_k(grade_gains({2, 1, 0}), 1) == 3.0);
    CHECK_THROWS(dcg_at_k({1.0}, 0));
}

TEST_CASE("ndcg normalizes against the ideal ordering") {
    CHECK(ndcg_at_k({2, 1, 0}, 10) == 1.0);
    CHECK_THAT(ndcg_at_k({0, 1, 2}, 10), WithinAbs(0.58688267143572, 1e-10));
    CHECK(ndcg_at_k({0, 0, 0}, 10) == 0.0);
    CHECK(ndcg_at_k({}, 10) == 0.0);
    CHECK(ndcg_at_k({1}, 10) == 1.0);
}

TEST_CASE("ndcg stays in [0,1] and is 1 for sorted grades") {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<int> grades;
        const std::size_t n = 1 + rng.uniform_index(30);
        for (std::size_t i = 0; i < n; ++i) {
            grades.push_back(static_cast<int>(rng.uniform_index(3)));
        }
        const std::size_t k = 1 + rng.uniform_index(12);
        const double v = ndcg_at_k(grades, k);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        std::sort(grades.begin(), grades.end(), std::greater<>());
        const bool any_gain = std::any_of(grades.begin(), grades.end(),
                                          [](int g) { return g > 0; });
        CHECK(ndcg_at_k(grades, k) == (any_gain ? 1.0 : 0.0));
    }
}

TEST_CASE("mean ndcg skips queries with no gain") {
    // query 1 ideal (ndcg 1.0), query 2 half (for k=1: 0/3), query 3 skipped
    const std::vector<std::vector<int>> queries{{2, 1}, {0, 2}, {0, 0}};
    const MeanNdcg m = mean_ndcg(queries, 1);
    CHECK(m.evaluated == 2);
    CHECK(m.skipped == 1);
    CHECK_THAT(m.mean, WithinAbs(0.5, 1e-15));

    const MeanNdcg full = mean_ndcg(queries, 10);
    CHECK(full.evaluated == 2);
    CHECK_THAT(full.mean, WithinAbs((1.0 + ndcg_at_k({0, 2}, 10)) / 2.0, 1e-15));
}

TEST_CASE("mean ndcg with nothing evaluable is an error") {
    CHECK_THROWS_WITH(mean_ndcg({{0, 0}, {0}}, 10),
                      Catch::Matchers::ContainsSubstring("no evaluable queries"));
    CHECK_THROWS_WITH(mean_ndcg({}, 10),
                      Catch::Matchers::ContainsSubstring("no evaluable queries"));
}
