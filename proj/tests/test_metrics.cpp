#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dermboost/metrics.hpp"
#include "test_support.hpp"

using namespace dermboost;
using Catch::Approx;

TEST_CASE("roc_curve vertices") {
    SECTION("perfect separation") {
        const roc_curve c = compute_roc_curve({{0, 1}, {0.1, 0.9}, {}});
        REQUIRE(c.points.size() == 3);
        CHECK(c.points[0].fpr == 0.0);
        CHECK(c.points[0].tpr == 0.0);
        CHECK(c.points[1].fpr == 0.0);
        CHECK(c.points[1].tpr == 1.0);
        CHECK(c.points[2].fpr == 1.0);
        CHECK(c.points[2].tpr == 1.0);
    }
    SECTION("full tie collapses to one step") {
        const roc_curve c = compute_roc_curve({{0, 1}, {0.5, 0.5}, {}});
        REQUIRE(c.points.size() == 2);
        CHECK(c.points[1].fpr == 1.0);
        CHECK(c.points[1].tpr == 1.0);
    }
    SECTION("hand-enumerated thresholds") {
        const roc_curve c = compute_roc_curve({{0, 0, 1, 1}, {0.3, 0.6, 0.5, 0.9}, {}});
        const std::vector<roc_point> expected{{0, 0}, {0, 0.5}, {0.5, 0.5}, {0.5, 1}, {1, 1}};
        REQUIRE(c.points.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(c.points[i].fpr == Approx(expected[i].fpr));
            CHECK(c.points[i].tpr == Approx(expected[i].tpr));
        }
    }
    SECTION("single-class input is degenerate") {
        CHECK_THROWS_AS(compute_roc_curve({{1, 1}, {0.1, 0.9}, {}}), degenerate_input_error);
        CHECK_THROWS_AS(compute_roc_curve({{0, 0}, {0.1, 0.9}, {}}), degenerate_input_error);
    }
}

TEST_CASE("roc_auc basics") {
    CHECK(roc_auc({{0, 1}, {0.2, 0.8}, {}}) == 1.0);
    CHECK(roc_auc({{0, 1}, {0.5, 0.5}, {}}) == 0.5);
    // 3 of 4 pairs concordant
    const labeled_scores data{{0, 0, 1, 1}, {0.3, 0.6, 0.5, 0.9}, {}};
    CHECK(roc_auc(data) == Approx(0.75).margin(1e-15));
    CHECK(roc_auc(data) ==
          Approx(testsup::pairwise_auc_oracle(data.labels, data.scores)).margin(1e-15));
}

TEST_CASE("partial ROC AUC anchors") {
    CHECK(partial_roc_auc_above_tpr({{0, 1}, {0.2, 0.8}, {}}) == 0.2);  // perfect
    // fully tied scores: diagonal ROC, integral of (x - 0.8) over [0.8, 1]
    CHECK(partial_roc_auc_above_tpr({{0, 1}, {0.5, 0.5}, {}}) == Approx(0.02).margin(1e-12));
    // worst ordering: TPR reaches 0.8 only at FPR 1
    CHECK(partial_roc_auc_above_tpr({{0, 1}, {0.9, 0.1}, {}}) == 0.0);
}

TEST_CASE("top-k retrieval sensitivity") {
    SECTION("group smaller than k captures everything") {
        const labeled_scores d{{0, 1, 0}, {0.9, 0.1, 0.5}, {"P1", "P1", "P1"}};
        CHECK(top_k_retrieval_sensitivity(d, 15) == 1.0);
    }
    SECTION("per-group rankings, k = 15") {
        // P1: 16 lesions, sole malignant scored lowest -> missed.
        // P2: 2 lesions, 1 malignant -> captured.
        labeled_scores d;
        for (int i = 0; i < 16; ++i) {
            d.labels.push_back(i == 15 ? 1 : 0);
            d.scores.push_back(i == 15 ? 0.0 : 1.0 + i);
            d.group_ids.push_back("P1");
        }
        d.labels.push_back(1);
        d.scores.push_back(0.3);
        d.group_ids.push_back("P2");
        d.labels.push_back(0);
        d.scores.push_back(0.9);
        d.group_ids.push_back("P2");
        CHECK(top_k_retrieval_sensitivity(d, 15) == 0.5);
    }
    SECTION("positives ranked first in every group") {
        const labeled_scores d{{1, 0, 0, 1, 0}, {0.9, 0.2, 0.1, 0.8, 0.3},
                               {"A", "A", "A", "B", "B"}};
        CHECK(top_k_retrieval_sensitivity(d, 2) == 1.0);
    }
    SECTION("tie-break prefers the lower record index") {
        // Two tied candidates for the last slot; index 1 (positive) wins.
        const labeled_scores d{{0, 1, 0}, {0.9, 0.5, 0.5}, {"A", "A", "A"}};
        CHECK(top_k_retrieval_sensitivity(d, 2) == 1.0);
    }
    SECTION("errors") {
        CHECK_THROWS_AS(top_k_retrieval_sensitivity({{0, 0}, {0.1, 0.2}, {"A", "A"}}, 15),
                        degenerate_input_error);
        CHECK_THROWS_AS(top_k_retrieval_sensitivity({{0, 1}, {0.1, 0.2}, {"A", "A"}}, 0),
                        argument_error);
        CHECK_THROWS_AS(top_k_retrieval_sensitivity({{0, 1}, {0.1, 0.2}, {}}, 15),
                        argument_error);
    }
}

TEST_CASE("evaluate aggregates OOF, per-fold and mean values") {
    // Fold 0: perfect ordering; fold 1: reversed two-point case.
    labeled_scores d{{1, 0, 1, 0}, {0.9, 0.1, 0.2, 0.8}, {"A", "A", "B", "B"}};
    const std::vector<int> folds{0, 0, 1, 1};
    const metric_report rep = evaluate(d, folds, 15);

    REQUIRE(rep.per_fold.size() == 2);
    const double p0 = *rep.per_fold[0].second.partial_roc_auc;
    const double p1 = *rep.per_fold[1].second.partial_roc_auc;
    CHECK(p0 == 0.2);
    CHECK(p1 == 0.0);
    CHECK(*rep.mean_fold.partial_roc_auc == Approx(0.5 * (p0 + p1)).margin(1e-12));

    // OOF equals the metric applied to all rows at once.
    CHECK(*rep.oof.partial_roc_auc == Approx(partial_roc_auc_above_tpr(d)).margin(1e-15));
    CHECK(*rep.oof.roc_auc == Approx(roc_auc(d)).margin(1e-15));
    CHECK(rep.skipped_folds == 0);
}

TEST_CASE("evaluate excludes unsupported folds from the mean with a warning") {
    // Fold 1 has no positives.
    labeled_scores d{{1, 0, 0, 0}, {0.9, 0.1, 0.2, 0.8}, {"A", "A", "B", "B"}};
    const std::vector<int> folds{0, 0, 1, 1};
    const metric_report rep = evaluate(d, folds, 15);
    CHECK(rep.skipped_folds == 1);
    CHECK_FALSE(rep.per_fold[1].second.roc_auc.has_value());
    CHECK(*rep.mean_fold.roc_auc == *rep.per_fold[0].second.roc_auc);

    CHECK_THROWS_AS(evaluate({{}, {}, {}}, {}, 15), argument_error);
}

TEST_CASE("metric report CSV has 2 + k_folds rows") {
    labeled_scores d{{1, 0, 1, 0}, {0.9, 0.1, 0.2, 0.8}, {}};
    const metric_report rep = evaluate(d, {0, 0, 1, 1}, 15);
    testsup::temp_dir dir("report");
    write_metric_report_csv(rep, dir.file("r.csv"));
    const std::string text = testsup::read_file(dir.file("r.csv"));
    const std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(lines == 1 + 2 + 2);  // header + oof + mean + two folds
    CHECK(text.rfind("scope,fold,roc_auc,partial_roc_auc,top15_sensitivity", 0) == 0);
}

TEST_CASE("rank metrics are invariant under strictly increasing transforms") {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    for (int iter = 0; iter < 50; ++iter) {
        const labeled_scores d = testsup::random_instance(gen, 80);
        labeled_scores t = d;
        const double a = u(gen), b = u(gen) - 1.5;
        const int shape = iter % 3;
        for (double& s : t.scores) {
            if (shape == 0)
                s = a * s + b;
            else if (shape == 1)
                s = std::exp(a * s);
            else
                s = std::atan(s) * a + s * s * s;
        }
        CHECK(roc_auc(t) == Approx(roc_auc(d)).margin(1e-12));
        CHECK(partial_roc_auc_above_tpr(t) ==
              Approx(partial_roc_auc_above_tpr(d)).margin(1e-12));
    }
}

TEST_CASE("partial AUC bounds and relation to full AUC") {
    std::mt19937_64 gen(99);
    for (int iter = 0; iter < 200; ++iter) {
        const labeled_scores d = testsup::random_instance(gen, 60);
        const double pauc = partial_roc_auc_above_tpr(d);
        const double auc = roc_auc(d);
        CHECK(pauc >= 0.0);
        CHECK(pauc <= 0.2 + 1e-15);
        CHECK(pauc <= auc + 1e-12);
    }
}

TEST_CASE("label swap with score negation preserves roc_auc") {
    std::mt19937_64 gen(7);
    for (int iter = 0; iter < 50; ++iter) {
        const labeled_scores d = testsup::random_instance(gen, 60);
        labeled_scores flipped = d;
        for (std::size_t i = 0; i < flipped.labels.size(); ++i) {
            flipped.labels[i] = 1 - flipped.labels[i];
            flipped.scores[i] = -flipped.scores[i];
        }
        CHECK(roc_auc(flipped) == Approx(roc_auc(d)).margin(1e-12));
    }
}

TEST_CASE("top-k with k >= max group size equals recall at threshold -inf") {
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<int> group(0, 5);
    for (int iter = 0; iter < 20; ++iter) {
        labeled_scores d = testsup::random_instance(gen, 60);
        for (std::size_t i = 0; i < d.labels.size(); ++i)
            d.group_ids.push_back("G" + std::to_string(group(gen)));
        CHECK(top_k_retrieval_sensitivity(d, static_cast<int>(d.labels.size())) == 1.0);
    }
}

TEST_CASE("metric oracles agree on random instances (sample)") {
    std::mt19937_64 gen(12345);
    for (int iter = 0; iter < 500; ++iter) {
        const labeled_scores d = testsup::random_instance(gen, 200);
        CHECK(roc_auc(d) ==
              Approx(testsup::pairwise_auc_oracle(d.labels, d.scores)).margin(1e-12));
        CHECK(partial_roc_auc_above_tpr(d) ==
              Approx(testsup::dense_partial_auc_oracle(d.labels, d.scores, 0.8, 200000))
                  .margin(1e-5));
    }
}
