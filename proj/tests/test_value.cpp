#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "relrank/rng.hpp"
#include "relrank/value.hpp"

using namespace relrank;
using Catch::Matchers::WithinAbs;

namespace {

HeadOutputs outs(double ctr, double atc, double cvr, double p1, double p2) {
    HeadOutputs o;
    o.y_ctr = ctr;
    o.y_atc = atc;
    o.y_cvr = cvr;
    o.p_ge1 = p1;
    o.p_ge2 = p2;
    o.s_rel = p1 + p2;
    return o;
}

}  // namespace

TEST_CASE("value score blends the four predictions") {
    const HeadOutputs o = outs(0.5, 0.25, 0.125, 0.75, 0.25);  // s_rel = 1.0
    // pure ctr
    CHECK_THAT(value_score(o, {1.0, 0.0, 0.0}), WithinAbs(0.5, 1e-15));
    // all weight on relevance: raw expected grade, on [0,2]
    CHECK_THAT(value_score(o, {0.0, 0.0, 0.0}), WithinAbs(1.0, 1e-15));
    // mixed
    CHECK_THAT(value_score(o, {0.25, 0.25, 0.25}),
               WithinAbs(0.25 * 0.5 + 0.25 * 0.25 + 0.25 * 0.125 + 0.25 * 1.0, 1e-15));
    // defaults: 0.3/0.3/0.3 with a 0.1 relevance remainder
    const ValueWeights d;
    CHECK_THAT(d.relevance_weight(), WithinAbs(0.1, 1e-15));
    CHECK_THAT(value_score(o, d),
               WithinAbs(0.3 * 0.5 + 0.3 * 0.25 + 0.3 * 0.125 + 0.1 * 1.0, 1e-15));
}

TEST_CASE("normalize_rel halves the relevance term") {
    const HeadOutputs o = outs(0.5, 0.5, 0.5, 0.9, 0.7);  // s_rel = 1.6
    CHECK_THAT(value_score(o, {0.0, 0.0, 0.0}, false), WithinAbs(1.6, 1e-15));
    CHECK_THAT(value_score(o, {0.0, 0.0, 0.0}, true), WithinAbs(0.8, 1e-15));
    CHECK_THAT(value_score(o, {0.5, 0.0, 0.0}, true),
               WithinAbs(0.5 * 0.5 + 0.5 * 0.8, 1e-15));
}

TEST_CASE("value weights are validated") {
    const HeadOutputs o = outs(0.5, 0.5, 0.5, 0.5, 0.25);
    CHECK_THROWS_WITH(value_score(o, {-0.1, 0.5, 0.5}),
                      Catch::Matchers::ContainsSubstring("lie in [0,1]"));
    CHECK_THROWS_WITH(value_score(o, {1.1, 0.0, 0.0}),
                      Catch::Matchers::ContainsSubstring("lie in [0,1]"));
    CHECK_THROWS_WITH(value_score(o, {0.5, 0.4, 0.3}),
                      Catch::Matchers::ContainsSubstring("alpha + beta + gamma <= 1"));
    CHECK_NOTHROW(value_score(o, {0.5, 0.4, 0.1}));  // boundary sums to exactly 1
}

TEST_CASE("auxiliary-only weights ignore the relevance scalar") {
    HeadOutputs a = outs(0.4, 0.3, 0.2, 0.9, 0.8);
    HeadOutputs b = outs(0.4, 0.3, 0.2, 0.1, 0.0);
    const ValueWeights w{0.5, 0.3, 0.2};
    CHECK(value_score(a, w) == value_score(b, w));
}

TEST_CASE("value score is monotone in each prediction") {
    Rng rng(44);
    const ValueWeights w{0.25, 0.3, 0.2};  // every component weight positive
    for (int trial = 0; trial < 200; ++trial) {
        HeadOutputs o = outs(rng.uniform01(), rng.uniform01(), rng.uniform01(),
                             rng.uniform(0.5, 1.0), rng.uniform(0.0, 0.5));
        const double base = value_score(o, w);
        HeadOutputs up = o;
        up.y_ctr = std::min(1.0, o.y_ctr + 0.1);
        CHECK(value_score(up, w) >= base);
        up = o;
        up.p_ge2 = std::min(o.p_ge1, o.p_ge2 + 0.1);
        up.s_rel = up.p_ge1 + up.p_ge2;
        CHECK(value_score(up, w) >= base);
    }
}

TEST_CASE("ranking sorts by score with id tiebreaks") {
    const auto ranked = rank_items({{"b", 1.0}, {"a", 3.0}, {"c", 2.0}});
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].item_id == "a");
    CHECK(ranked[1].item_id == "c");
    CHECK(ranked[2].item_id == "b");

    const auto tied = rank_items({{"z", 1.0}, {"m", 1.0}, {"a", 1.0}});
    CHECK(tied[0].item_id == "a");
    CHECK(tied[1].item_id == "m");
    CHECK(tied[2].item_id == "z");

    CHECK_THROWS_WITH(rank_items({{"x", std::numeric_limits<double>::quiet_NaN()}}),
                      Catch::Matchers::ContainsSubstring("non-finite score for item x"));
    CHECK_THROWS(rank_items({{"x", std::numeric_limits<double>::infinity()}}));
}

TEST_CASE("ranking is invariant to input order") {
    Rng rng(9);
    std::vector<ScoredItem> items;
    for (int i = 0; i < 30; ++i) {
        // coarse scores force ties
        items.push_back({"i" + std::to_string(i),
                         static_cast<double>(rng.uniform_index(8)) / 4.0});
    }
    const auto base = rank_items(items);
    for (int trial = 0; trial < 20; ++trial) {
        rng.shuffle(items);
        const auto again = rank_items(items);
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(again[i].item_id == base[i].item_id);
        }
    }
}

TEST_CASE("positive scaling preserves the ranking") {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScoredItem> items;
        for (int i = 0; i < 10; ++i) {
            items.push_back({"i" + std::to_string(i), rng.uniform(-2.0, 2.0)});
        }
        const double scale = rng.uniform(0.1, 10.0);
        std::vector<ScoredItem> scaled = items;
        for (auto& s : scaled) {
            s.score *= scale;
        }
        const auto a = rank_items(items);
        const auto b = rank_items(scaled);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].item_id == b[i].item_id);
        }
    }
}

TEST_CASE("the tradeoff sweep walks between conversion and relevance") {
    // conv_item converts but is irrelevant; rel_item is relevant, never converts
    SweepInput input;
    input["q1"] = {{"conv", 0.1, 0.9, 0, true}, {"rel", 1.9, 0.1, 2, false},
                   {"mid", 1.0, 0.5, 1, false}};
    input["q2"] = {{"conv", 0.2, 0.8, 0, true}, {"rel", 1.8, 0.2, 2, false}};

    const auto points = tradeoff_sweep(input, parse_grid("0:1:0.1"), 10);
    REQUIRE(points.size() == 11);
    CHECK(points.front().relevance_weight == 0.0);
    CHECK_THAT(points.back().relevance_weight, WithinAbs(1.0, 1e-12));
    // w=0 ranks by y_cvr: conversion NDCG perfect, relevance poor
    CHECK(points.front().ndcg_conversion == 1.0);
    CHECK(points.back().ndcg_relevance == 1.0);
    CHECK(points.back().ndcg_relevance > points.front().ndcg_relevance);
    CHECK(points.front().ndcg_conversion > points.back().ndcg_conversion);
}

TEST_CASE("sweep inputs are validated") {
    SweepInput input;
    input["q"] = {{"a", 1.0, 0.5, 1, false}};
    CHECK_THROWS_WITH(tradeoff_sweep(input, {}), Catch::Matchers::ContainsSubstring("empty"));
    CHECK_THROWS_WITH(tradeoff_sweep(input, {1.5}),
                      Catch::Matchers::ContainsSubstring("lie in [0,1]"));
    CHECK_THROWS_WITH(tradeoff_sweep({}, {0.5}),
                      Catch::Matchers::ContainsSubstring("non-empty labeled split"));
}

TEST_CASE("grid specs parse ranges and lists") {
    const auto range = parse_grid("0:1:0.1");
    REQUIRE(range.size() == 11);
    CHECK(range.front() == 0.0);
    CHECK_THAT(range[5], WithinAbs(0.5, 1e-12));
    CHECK_THAT(range.back(), WithinAbs(1.0, 1e-12));

    const auto single = parse_grid("0.5");
    REQUIRE(single.size() == 1);
    CHECK(single[0] == 0.5);

    const auto list = parse_grid("0,0.25,1");
    REQUIRE(list.size() == 3);
    CHECK(list[1] == 0.25);

    CHECK_THROWS(parse_grid("0:1"));
    CHECK_THROWS(parse_grid("1:0:0.1"));
    CHECK_THROWS(parse_grid("0:1:0"));
    CHECK_THROWS(parse_grid("a,b"));
    CHECK_THROWS(parse_grid(""));
    CHECK_THROWS(parse_grid("0,2"));  // out of range
}

TEST_CASE("sweep points serialize as fixed-precision CSV") {
    const std::string csv = sweep_csv({{0.0, 0.25, 1.0}, {0.5, 0.75, 0.5}});
    CHECK(csv ==
          "relevance_weight,ndcg_relevance,ndcg_conversion\n"
          "0.000000,0.250000,1.000000\n"
          "0.500000,0.750000,0.500000\n");
}
