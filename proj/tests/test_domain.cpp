#include <catch2/catch_amalgamated.hpp>

#include "relrank/domain.hpp"
#include "relrank/synth.hpp"
#include "test_util.hpp"

using namespace relrank;

TEST_CASE("grades keep their ordering and range") {
    CHECK(grade_value(RelevanceGrade::irrelevant) == 0);
    CHECK(grade_value(RelevanceGrade::moderately_relevant) == 1);
    CHECK(grade_value(RelevanceGrade::highly_relevant) == 2);
    CHECK(RelevanceGrade::irrelevant < RelevanceGrade::moderately_relevant);
    CHECK(RelevanceGrade::moderately_relevant < RelevanceGrade::highly_relevant);
    for (int v : {0, 1, 2}) {
        auto g = grade_from_int(v);
        REQUIRE(g.has_value());
        CHECK(grade_value(*g) == v);
    }
    CHECK_FALSE(grade_from_int(-1).has_value());
    CHECK_FALSE(grade_from_int(3).has_value());
    CHECK(grade_max(RelevanceGrade::irrelevant, RelevanceGrade::highly_relevant) ==
          RelevanceGrade::highly_relevant);
    CHECK(grade_min(RelevanceGrade::moderately_relevant, RelevanceGrade::irrelevant) ==
          RelevanceGrade::irrelevant);
}

TEST_CASE("tokenize lowercases, strips punctuation, splits on whitespace") {
    CHECK(tokenize("Fresh WHOLE Milk!") == std::vector<std::string>{"fresh", "whole", "milk"});
    CHECK(tokenize("  a,b  c.d  ") == std::vector<std::string>{"ab", "cd"});
    CHECK(tokenize("2% milk (1 qt)") == std::vector<std::string>{"2", "milk", "1", "qt"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("!!! ...").empty());
    CHECK(join_tokens(tokenize("Fresh WHOLE Milk!")) == "fresh whole milk");
}

namespace {

std::string well_formed_jsonl() {
    return R"({"kind":"query","id":"q1","text":"whole milk","intent_category":"dairy"})"
           "\n"
           R"({"kind":"item","id":"i1","title":"whole milk quart","description":"fresh dairy","price":3.5,"category":"dairy","brand":"b1","impressions":10,"clicks":4,"atcs":2,"conversions":1})"
           "\n"
           R"({"kind":"item","id":"i2","title":"sourdough bread","description":"bakery loaf","price":5.0,"category":"bakery","brand":"b2","impressions":8,"clicks":1,"atcs":0,"conversions":0})"
           "\n"
           R"({"kind":"impression","query_id":"q1","item_id":"i1","position":1,"clicked":true,"added_to_cart":true,"converted":false,"grade":2})"
           "\n"
           R"({"kind":"impression","query_id":"q1","item_id":"i2","position":2,"clicked":false,"added_to_cart":false,"converted":false,"grade":null})"
           "\n";
}

}  // namespace

TEST_CASE("load_dataset accepts a well-formed file") {
    const auto path = testutil::write_file("domain_ok.jsonl", well_formed_jsonl());
    const Dataset ds = load_dataset(path);
    REQUIRE(ds.queries.size() == 1);
    REQUIRE(ds.items.size() == 2);
    REQUIRE(ds.impressions.size() == 2);
    CHECK(ds.queries[0].id == "q1");
    CHECK(ds.items[0].stats.clicks == 4);
    REQUIRE(ds.impressions[0].grade.has_value());
    CHECK(*ds.impressions[0].grade == RelevanceGrade::highly_relevant);
    CHECK_FALSE(ds.impressions[1].grade.has_value());
    CHECK(validate_dataset(ds).empty());
    CHECK(ds.find_query("q1") != nullptr);
    CHECK(ds.find_item("i2") != nullptr);
    CHECK(ds.find_item("nope") == nullptr);
}

TEST_CASE("load_dataset rejects out-of-range grades with the line number") {
    std::string text = well_formed_jsonl();
    const std::string needle = "\"grade\":2";
    text.replace(text.find(needle), needle.size(), "\"grade\":3");
    const auto path = testutil::write_file("domain_badgrade.jsonl", text);
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("grade out of range") &&
                                              Catch::Matchers::ContainsSubstring("line 4"));
}

TEST_CASE("load_dataset rejects impressions referencing unknown items") {
    std::string text = well_formed_jsonl();
    const std::string needle = R"("item_id":"i2")";
    text.replace(text.find(needle), needle.size(), R"("item_id":"i9")");
    const auto path = testutil::write_file("domain_badref.jsonl", text);
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("unknown item"));
}

TEST_CASE("load_dataset rejects funnel violations") {
    std::string text = well_formed_jsonl();
    const std::string needle = R"("clicked":false,"added_to_cart":false,"converted":false)";
    text.replace(text.find(needle), needle.size(),
                 R"("clicked":false,"added_to_cart":false,"converted":true)");
    const auto path = testutil::write_file("domain_funnel.jsonl", text);
    CHECK_THROWS(load_dataset(path));
}

TEST_CASE("load_dataset reports malformed JSON with the line number") {
    const auto path =
        testutil::write_file("domain_parse.jsonl", well_formed_jsonl() + "{not json\n");
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("line 6"));
}

TEST_CASE("validate_dataset reports stats and duplicate-pair violations") {
    Dataset ds;
    ds.queries.push_back({"q1", {"whole", "milk"}, "dairy"});
    Item bad;
    bad.id = "i1";
    bad.title = {"milk"};
    bad.description = {"d"};
    bad.price = 1.0;
    bad.category = "dairy";
    bad.brand = "b";
    bad.stats = {5, 9, 1, 0};  // clicks > impressions
    ds.items.push_back(bad);
    ds.impressions.push_back({"q1", "i1", 1, true, false, false, std::nullopt});
    ds.impressions.push_back({"q1", "i1", 2, false, false, false, std::nullopt});
    const auto violations = validate_dataset(ds);
    REQUIRE_FALSE(violations.empty());
    bool saw_stats = false;
    bool saw_dup = false;
    for (const auto& v : violations) {
        if (v.where.find("i1") != std::string::npos &&
            v.message.find("clicks") != std::string::npos) {
            saw_stats = true;
        }
        if (v.message.find("duplicate") != std::string::npos &&
            v.where.find("q1") != std::string::npos) {
            saw_dup = true;
        }
    }
    CHECK(saw_stats);
    CHECK(saw_dup);
}

TEST_CASE("save then load round-trips a generated dataset") {
    GenConfig cfg;
    cfg.n_queries = 30;
    cfg.n_items = 80;
    cfg.candidates_per_query = 6;
    cfg.seed = 42;
    const Dataset ds = generate_dataset(cfg);
    CHECK(validate_dataset(ds).empty());
    const auto path = testutil::scratch_dir() / "domain_roundtrip.jsonl";
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    CHECK(dataset_equal(ds, back));

    // canonical serialization is stable
    CHECK(dataset_to_jsonl(ds) == dataset_to_jsonl(back));
}

TEST_CASE("missing dataset file error names the path") {
    CHECK_THROWS_WITH(load_dataset("/nonexistent/nowhere.jsonl"),
                      Catch::Matchers::ContainsSubstring("cannot open dataset") &&
                          Catch::Matchers::ContainsSubstring("nowhere.jsonl"));
}
