#include <catch2/catch_amalgamated.hpp>

#include "dermboost/dataset.hpp"
#include "test_support.hpp"

using namespace dermboost;

namespace {

feature_schema small_schema() {
    return {{"age", feature_kind::numeric},
            {"size_mm", feature_kind::numeric},
            {"anatom_site_general", feature_kind::categorical}};
}

}  // namespace

TEST_CASE("metadata CSV loads rows, missing cells and NA markers") {
    testsup::temp_dir dir("load");
    testsup::write_file(dir.file("meta.csv"),
                        "isic_id,patient_id,target,anatom_site_general,age,size_mm\n"
                        "ISIC_1,P1,0,arm,44,2.5\n"
                        "ISIC_2,P1,1,leg,,3.5\n"
                        "ISIC_3,P2,0,,NA,1.25\n");
    const dataset data = load_metadata_csv(dir.file("meta.csv"), small_schema());
    REQUIRE(data.size() == 3);
    CHECK(data.records()[0].numeric[0] == 44.0);
    CHECK_FALSE(data.records()[1].numeric[0].has_value());  // empty cell
    CHECK_FALSE(data.records()[2].numeric[0].has_value());  // literal NA
    CHECK(data.records()[1].label == 1);
    CHECK_FALSE(data.records()[2].site.has_value());
    CHECK(data.records()[2].categorical[0] == std::nullopt);
}

TEST_CASE("metadata CSV schema and parse errors") {
    testsup::temp_dir dir("badload");

    SECTION("missing patient_id header") {
        testsup::write_file(dir.file("meta.csv"), "isic_id,target,age,size_mm,anatom_site_general\n");
        REQUIRE_THROWS_MATCHES(load_metadata_csv(dir.file("meta.csv"), small_schema()),
                               schema_error,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("patient_id")));
    }

    SECTION("non-binary target cites the row") {
        std::string body = "isic_id,patient_id,target,anatom_site_general,age,size_mm\n";
        for (int i = 1; i <= 6; ++i)
            body += "ISIC_" + std::to_string(i) + ",P1,0,arm,1,1\n";
        body += "ISIC_7,P1,2,arm,1,1\n";
        testsup::write_file(dir.file("meta.csv"), body);
        REQUIRE_THROWS_MATCHES(
            load_metadata_csv(dir.file("meta.csv"), small_schema()), parse_error,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("row 7")));
    }

    SECTION("duplicate record id") {
        testsup::write_file(dir.file("meta.csv"),
                            "isic_id,patient_id,target,anatom_site_general,age,size_mm\n"
                            "ISIC_1,P1,0,arm,1,1\n"
                            "ISIC_1,P2,0,arm,1,1\n");
        REQUIRE_THROWS_AS(load_metadata_csv(dir.file("meta.csv"), small_schema()),
                          integrity_error);
    }
}

TEST_CASE("load-save-load round trip preserves the dataset") {
    const dataset data = generate_synthetic_dataset({20, 2, 5, 0.2, 1.0, 42});
    testsup::temp_dir dir("roundtrip");
    save_metadata_csv(data, dir.file("meta.csv"));
    const dataset again = load_metadata_csv(dir.file("meta.csv"), data.schema());
    REQUIRE(again == data);

    save_metadata_csv(again, dir.file("meta2.csv"));
    CHECK(testsup::read_file(dir.file("meta.csv")) == testsup::read_file(dir.file("meta2.csv")));
}

TEST_CASE("prediction CSV loading") {
    testsup::temp_dir dir("preds");

    SECTION("name derives from the file stem") {
        testsup::write_file(dir.file("convnext_oof.csv"),
                            "isic_id,score\nA,0.5\nB,0.25\nC,1\nD,-0.5\nE,2.5\n");
        const prediction_column col = load_predictions_csv(dir.file("convnext_oof.csv"));
        CHECK(col.name == "convnext_oof");
        CHECK(col.scores.size() == 5);
        CHECK(col.scores.at("D") == -0.5);
    }

    SECTION("NaN score is a parse error") {
        testsup::write_file(dir.file("p.csv"), "isic_id,score\nA,NaN\n");
        REQUIRE_THROWS_AS(load_predictions_csv(dir.file("p.csv")), parse_error);
    }

    SECTION("duplicate id is an integrity error") {
        testsup::write_file(dir.file("p.csv"), "isic_id,score\nA,0.5\nA,0.7\n");
        REQUIRE_THROWS_AS(load_predictions_csv(dir.file("p.csv")), integrity_error);
    }
}

TEST_CASE("join_predictions policies") {
    dataset data(small_schema());
    for (int i = 0; i < 4; ++i) {
        lesion_record rec;
        rec.record_id = "R" + std::to_string(i);
        rec.patient_id = "P0";
        rec.label = i == 0 ? 1 : 0;
        rec.numeric = {1.0, 2.0};
        rec.categorical = {std::string("arm")};
        data.add_record(rec);
    }

    prediction_column full{"m", {{"R0", 0.1}, {"R1", 0.2}, {"R2", 0.3}, {"R3", 0.4}}};
    prediction_column partial{"m", {{"R0", 0.1}, {"R1", 0.2}, {"R2", 0.3}}};

    SECTION("strict total join appends one numeric feature") {
        const join_result r = join_predictions(data, {full}, join_policy::strict);
        REQUIRE(r.dropped == 0);
        REQUIRE(r.data.size() == 4);
        CHECK(r.data.numeric_index("m") >= 0);
        CHECK(r.data.records()[3].numeric.back() == 0.4);
    }

    SECTION("strict join with a missing id fails and names it") {
        REQUIRE_THROWS_MATCHES(
            join_predictions(data, {partial}, join_policy::strict), join_error,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("R3")));
    }

    SECTION("drop_missing removes uncovered records and reports the count") {
        const join_result r = join_predictions(data, {partial}, join_policy::drop_missing);
        CHECK(r.dropped == 1);
        CHECK(r.data.size() == 3);
    }

    SECTION("empty column list is the identity") {
        const join_result r = join_predictions(data, {}, join_policy::strict);
        CHECK(r.data == data);
    }
}

TEST_CASE("synthetic generation is deterministic and seed-sensitive") {
    const synth_params params{100, 3, 8, 0.02, 2.0, 7};
    const dataset a = generate_synthetic_dataset(params);
    const dataset b = generate_synthetic_dataset(params);
    REQUIRE(a == b);

    testsup::temp_dir dir("synth");
    save_metadata_csv(a, dir.file("a.csv"));
    save_metadata_csv(b, dir.file("b.csv"));
    CHECK(testsup::read_file(dir.file("a.csv")) == testsup::read_file(dir.file("b.csv")));

    synth_params other = params;
    other.seed = 8;
    CHECK_FALSE(generate_synthetic_dataset(other) == a);
}

TEST_CASE("synthetic generation arguments and shape") {
    REQUIRE_THROWS_AS(generate_synthetic_dataset({0, 1, 3, 0.1, 1.0, 0}), argument_error);
    REQUIRE_THROWS_AS(generate_synthetic_dataset({10, 4, 3, 0.1, 1.0, 0}), argument_error);

    const dataset data = generate_synthetic_dataset({200, 3, 8, 0.1, 2.0, 11});
    std::size_t missing = 0, cells = 0, positives = 0;
    for (const auto& rec : data.records()) {
        positives += static_cast<std::size_t>(rec.label);
        for (const auto& v : rec.numeric) {
            ++cells;
            if (!v) ++missing;
        }
    }
    const double missing_rate = static_cast<double>(missing) / static_cast<double>(cells);
    CHECK(missing_rate > 0.03);
    CHECK(missing_rate < 0.07);
    const double rate = static_cast<double>(positives) / static_cast<double>(data.size());
    CHECK(rate > 0.05);
    CHECK(rate < 0.16);
}
