#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "relrank/train.hpp"

using namespace relrank;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Separable toy data: "match" items share the query token (high bm25 and
// jaccard, funnel positives, grade 2), "miss" items are disjoint and cold.
Dataset toy_dataset(std::size_t n_queries, std::size_t items_per_query, bool with_grades) {
    Dataset ds;
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
        const std::string qid = "q" + std::to_string(qi);
        const std::string tok = "tok" + std::to_string(qi);
        ds.queries.push_back({qid, {tok}, "cat" + std::to_string(qi % 3)});
        for (std::size_t ii = 0; ii < items_per_query; ++ii) {
            const bool match = ii % 2 == 0;
            const std::string iid = qid + "_i" + std::to_string(ii);
            Item item;
            item.id = iid;
            item.title = match ? std::vector<std::string>{tok, "thing"}
                               : std::vector<std::string>{"other", "stuff"};
            item.description = {"desc"};
            item.price = match ? 5.0 : 50.0;
            item.category = match ? "cat" + std::to_string(qi % 3) : "none";
            item.brand = "b";
            item.stats = match ? HistoricalStats{100, 30, 12, 6} : HistoricalStats{100, 2, 0, 0};
            ds.items.push_back(std::move(item));

            Impression imp;
            imp.query_id = qid;
            imp.item_id = iid;
            imp.position = static_cast<int>(ii) + 1;
            imp.clicked = match;
            imp.added_to_cart = match && ii % 4 == 0;
            imp.converted = false;
            if (with_grades) {
                imp.grade = match ? RelevanceGrade::highly_relevant
                                  : RelevanceGrade::irrelevant;
            }
            ds.impressions.push_back(std::move(imp));
        }
    }
    ds.rebuild_index();
    return ds;
}

FeaturizerArtifacts toy_artifacts(const Dataset& ds, std::size_t embed_dims = 4) {
    FeaturizerArtifacts fz;
    fz.config.embed_dims = embed_dims;
    fz.stats = build_corpus_stats(ds.items);
    return fz;
}

}  // namespace

TEST_CASE("engagement loss is binary cross-entropy") {
    CHECK_THAT(loss_engagement(0.5, true), WithinAbs(kLn2, 1e-15));
    CHECK_THAT(loss_engagement(0.5, false), WithinAbs(kLn2, 1e-15));
    CHECK_THAT(loss_engagement(0.1, true), WithinAbs(2.3025850929940455, 1e-14));
    CHECK_THAT(loss_engagement(0.9, false), WithinAbs(2.3025850929940455, 1e-14));
    CHECK_THROWS(loss_engagement(0.0, true));
    CHECK_THROWS(loss_engagement(1.0, false));
}

TEST_CASE("ordinal loss sums both threshold cross-entropies") {
    CHECK_THAT(loss_ordinal(0.5, 0.25, RelevanceGrade::highly_relevant),
               WithinAbs(3.0 * kLn2, 1e-14));
    CHECK_THAT(loss_ordinal(0.5, 0.25, RelevanceGrade::irrelevant),
               WithinAbs(kLn2 + std::log(4.0 / 3.0), 1e-14));
    CHECK_THAT(loss_ordinal(0.5, 0.25, RelevanceGrade::moderately_relevant),
               WithinAbs(kLn2 + std::log(4.0 / 3.0), 1e-14));
    CHECK_THROWS(loss_ordinal(0.25, 0.5, RelevanceGrade::irrelevant));
    CHECK_THROWS(loss_ordinal(0.5, 0.0, RelevanceGrade::irrelevant));
    CHECK_THROWS(loss_ordinal(1.0, 0.5, RelevanceGrade::irrelevant));
}

TEST_CASE("softmax loss is the categorical negative log-likelihood") {
    CHECK_THAT(loss_softmax3({0.0, 0.0, 0.0}, RelevanceGrade::moderately_relevant),
               WithinAbs(1.0986122886681098, 1e-14));
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> logits{rng.uniform(-6, 6), rng.uniform(-6, 6),
                                         rng.uniform(-6, 6)};
        const int g = static_cast<int>(rng.uniform_index(3));
        double z = 0.0;
        for (double l : logits) z += std::exp(l);
        const double expect = -std::log(std::exp(logits[static_cast<std::size_t>(g)]) / z);
        CHECK_THAT(loss_softmax3(logits, *grade_from_int(g)), WithinAbs(expect, 1e-11));
        // shift invariance
        const double c = rng.uniform(-50, 50);
        CHECK_THAT(loss_softmax3({logits[0] + c, logits[1] + c, logits[2] + c},
                                 *grade_from_int(g)),
                   WithinAbs(expect, 1e-10));
    }
    CHECK_THROWS(loss_softmax3({0.0}, RelevanceGrade::irrelevant));
}

TEST_CASE("regression loss is squared error on the grade") {
    CHECK(loss_regression(0.0, RelevanceGrade::irrelevant) == 0.0);
    CHECK(loss_regression(2.0, RelevanceGrade::irrelevant) == 4.0);
    CHECK_THAT(loss_regression(1.5, RelevanceGrade::moderately_relevant),
               WithinAbs(0.25, 1e-15));
}

TEST_CASE("total loss recomposes the per-task pieces") {
    Rng rng(17);
    for (HeadKind head : {HeadKind::ordinal, HeadKind::softmax3, HeadKind::regression}) {
        const ModelParams p = init_params(6, ArchConfig{{8}, {4}}, head, rng.next_u64());
        FeatureVector x;
        for (int i = 0; i < 6; ++i) x.values.push_back(rng.normal());
        const HeadOutputs out = forward(p, x).first;

        Impression imp;
        imp.query_id = "q";
        imp.item_id = "i";
        imp.clicked = true;
        imp.added_to_cart = false;
        imp.converted = false;
        imp.grade = RelevanceGrade::moderately_relevant;

        TrainConfig cfg;
        cfg.w_ctr = 0.5;
        cfg.w_atc = 2.0;
        cfg.w_cvr = 1.0;
        cfg.w_rel = 0.25;
        const TotalLoss tl = total_loss(out, imp, cfg, head);
        CHECK_THAT(tl.l_ctr, WithinAbs(loss_engagement(out.y_ctr, true), 1e-15));
        CHECK_THAT(tl.l_atc, WithinAbs(loss_engagement(out.y_atc, false), 1e-15));
        double expect_rel = 0.0;
        switch (head) {
            case HeadKind::ordinal:
                expect_rel = loss_ordinal(out.p_ge1, out.p_ge2, *imp.grade);
                break;
            case HeadKind::softmax3:
                expect_rel = loss_softmax3(out.rel_raw, *imp.grade);
                break;
            case HeadKind::regression:
                expect_rel = loss_regression(out.rel_raw[0], *imp.grade);
                break;
        }
        CHECK_THAT(tl.l_rel, WithinAbs(expect_rel, 1e-15));
        CHECK_THAT(tl.value,
                   WithinAbs(0.5 * tl.l_ctr + 2.0 * tl.l_atc + 1.0 * tl.l_cvr + 0.25 * tl.l_rel,
                             1e-15));
        // logit seeds are weighted prediction-minus-target
        CHECK_THAT(tl.seeds.d_ctr_logit, WithinAbs(0.5 * (out.y_ctr - 1.0), 1e-15));
        CHECK_THAT(tl.seeds.d_atc_logit, WithinAbs(2.0 * out.y_atc, 1e-15));

        // masking the relevance task zeroes its loss and seeds
        TrainConfig masked = cfg;
        masked.w_rel = 0.0;
        const TotalLoss mtl = total_loss(out, imp, masked, head);
        CHECK(mtl.l_rel == 0.0);
        for (double d : mtl.seeds.d_rel) CHECK(d == 0.0);
        CHECK(mtl.seeds.d_theta1 == 0.0);
        CHECK_THAT(mtl.value,
                   WithinAbs(0.5 * mtl.l_ctr + 2.0 * mtl.l_atc + 1.0 * mtl.l_cvr, 1e-15));

        // relevance loss on an unlabeled impression is a hard error
        Impression unlabeled = imp;
        unlabeled.grade.reset();
        CHECK_THROWS_WITH(total_loss(out, unlabeled, cfg, head),
                          Catch::Matchers::ContainsSubstring("unlabeled impression"));
        CHECK_NOTHROW(total_loss(out, unlabeled, masked, head));
    }
}

TEST_CASE("training is deterministic in the seed") {
    const Dataset ds = toy_dataset(6, 6, true);
    const FeaturizerArtifacts fz = toy_artifacts(ds);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 5;
    const ArchConfig arch{{8}, {4}};
    const FitResult a = fit(ds, fz, cfg, HeadKind::ordinal, arch);
    const FitResult b = fit(ds, fz, cfg, HeadKind::ordinal, arch);
    CHECK(params_to_json(a.params).dump() == params_to_json(b.params).dump());
    REQUIRE(a.log.size() == 3);
    CHECK(a.log[0].total == b.log[0].total);

    TrainConfig other = cfg;
    other.seed = 6;
    const FitResult c = fit(ds, fz, other, HeadKind::ordinal, arch);
    CHECK(params_to_json(a.params).dump() != params_to_json(c.params).dump());
}

TEST_CASE("training drives the loss down on separable data") {
    const Dataset ds = toy_dataset(20, 10, true);
    const FeaturizerArtifacts fz = toy_artifacts(ds);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    cfg.seed = 2;
    const ArchConfig arch{{8}, {4}};
    for (HeadKind head : {HeadKind::ordinal, HeadKind::softmax3, HeadKind::regression}) {
        const FitResult r = fit(ds, fz, cfg, head, arch);
        REQUIRE(r.log.size() == 40);
        CHECK(r.log.back().total < 0.5 * r.log.front().total);
        for (const auto& e : r.log) {
            CHECK(std::isfinite(e.total));
        }
    }
}

TEST_CASE("training refuses impossible requests") {
    const Dataset empty;
    const Dataset ungraded = toy_dataset(3, 4, false);
    const FeaturizerArtifacts fz = toy_artifacts(ungraded);
    TrainConfig cfg;
    CHECK_THROWS_WITH(fit(empty, fz, cfg, HeadKind::ordinal),
                      Catch::Matchers::ContainsSubstring("no impressions"));
    CHECK_THROWS_WITH(fit(ungraded, fz, cfg, HeadKind::ordinal),
                      Catch::Matchers::ContainsSubstring("no impression carries a relevance grade"));

    // engagement-only masking makes the same data trainable
    TrainConfig masked = cfg;
    masked.w_rel = 0.0;
    masked.epochs = 1;
    CHECK_NOTHROW(fit(ungraded, fz, masked, HeadKind::ordinal, ArchConfig{{8}, {4}}));

    TrainConfig bad = cfg;
    bad.w_ctr = -1.0;
    CHECK_THROWS(fit(ungraded, fz, bad, HeadKind::ordinal));
}

TEST_CASE("a runaway learning rate trips the divergence guard") {
    const Dataset ds = toy_dataset(4, 4, true);
    const FeaturizerArtifacts fz = toy_artifacts(ds);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd;
    cfg.learning_rate = 1e300;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    CHECK_THROWS_WITH(fit(ds, fz, cfg, HeadKind::regression, ArchConfig{{8}, {4}}),
                      Catch::Matchers::ContainsSubstring("non-finite training loss"));
}

TEST_CASE("warm starts continue from the given parameters") {
    const Dataset ds = toy_dataset(6, 6, true);
    const FeaturizerArtifacts fz = toy_artifacts(ds);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    const ArchConfig arch{{8}, {4}};
    const FitResult first = fit(ds, fz, cfg, HeadKind::ordinal, arch);
    const FitResult resumed = fit(ds, fz, cfg, HeadKind::ordinal, arch, &first.params);
    CHECK(params_to_json(resumed.params).dump() != params_to_json(first.params).dump());
    CHECK(resumed.params.layout_fingerprint == fz.fingerprint());

    CHECK_THROWS_WITH(fit(ds, fz, cfg, HeadKind::softmax3, arch, &first.params),
                      Catch::Matchers::ContainsSubstring("resume checkpoint has head"));

    FeaturizerArtifacts other = fz;
    other.config.embed_dims = 2;
    CHECK_THROWS_WITH(fit(ds, other, cfg, HeadKind::ordinal, arch, &first.params),
                      Catch::Matchers::ContainsSubstring("fingerprint mismatch at resume"));
}

TEST_CASE("analytic gradients match central differences") {
    TrainConfig cfg;
    cfg.w_ctr = 1.0;
    cfg.w_atc = 0.7;
    cfg.w_cvr = 1.3;
    cfg.w_rel = 0.9;
    for (HeadKind head : {HeadKind::ordinal, HeadKind::softmax3, HeadKind::regression}) {
        cfg.seed = 100 + static_cast<std::uint64_t>(head);
        CHECK(gradient_check(cfg, head, 5) < 1e-6);
    }
}

TEST_CASE("the epoch log serializes as fixed-precision CSV") {
    std::vector<EpochStats> log;
    log.push_back({1, 1.25, 0.5, 0.25, 0.125, 0.375});
    log.push_back({2, 0.5, 0.2, 0.1, 0.05, 0.15});
    const std::string csv = epoch_log_csv(log);
    CHECK(csv ==
          "epoch,total,loss_ctr,loss_atc,loss_cvr,loss_rel\n"
          "1,1.250000,0.500000,0.250000,0.125000,0.375000\n"
          "2,0.500000,0.200000,0.100000,0.050000,0.150000\n");
}
