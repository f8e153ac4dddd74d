#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "interpret3c/analysis.hpp"
#include "interpret3c/common.hpp"

#include <filesystem>
#include <fstream>

using namespace i3c;
using namespace i3c::analysis;
using clustering::ClusterAssignment;
using features::FeatureCube;
using gating::MaskMatrix;

namespace {

struct Fixture {
    FeatureCube cube;
    MaskMatrix masks;
    ClusterAssignment assignment;
    std::map<std::string, int> labels;
};

Fixture small_fixture() {
    Fixture fx;
    fx.cube.student_ids = {"s0", "s1", "s2", "s3", "s4", "s5"};
    fx.cube.feature_names = {"fa", "fb"};
    fx.cube.weeks_used = 2;
    fx.cube.scaled = true;
    // week means per (student, feature) chosen by hand
    fx.cube.values = {
        1, 1, 0, 0, // s0: fa mean 1, fb mean 0
        2, 2, 1, 1, // s1
        3, 3, 0, 0, // s2
        4, 4, 2, 2, // s3
        0, 0, 5, 5, // s4
        0, 0, 7, 7, // s5
    };
    fx.masks.student_ids = fx.cube.student_ids;
    fx.masks.feature_names = fx.cube.feature_names;
    fx.masks.values = {1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0};
    fx.assignment.ids = fx.cube.student_ids;
    fx.assignment.labels = {0, 0, 0, 0, 1, 1};
    fx.assignment.n_clusters = 2;
    fx.labels = {{"s0", 1}, {"s1", 1}, {"s2", 0}, {"s3", 1}, {"s4", 0}, {"s5", 0}};
    return fx;
}

} // namespace

TEST_CASE("importance percentages count mask bits per cluster") {
    auto fx = small_fixture();
    auto imp = importance_by_cluster(fx.masks, fx.assignment);
    // cluster 0 members s0..s3, feature fa masks (1,1,0,0) -> 0.5
    CHECK(imp[0][0] == doctest::Approx(0.5));
    CHECK(imp[0][1] == doctest::Approx(0.5));
    CHECK(imp[1][0] == doctest::Approx(0.5));
    CHECK(imp[1][1] == doctest::Approx(0.5));
}

TEST_CASE("a feature selected by nobody scores zero everywhere") {
    auto fx = small_fixture();
    std::fill(fx.masks.values.begin(), fx.masks.values.end(), 0);
    auto imp = importance_by_cluster(fx.masks, fx.assignment);
    for (const auto& row : imp)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("type-7 quantiles with linear interpolation") {
    std::vector<double> vals = {1, 2, 3, 4};
    CHECK(quantile_linear(vals, 0.25) == doctest::Approx(1.75));
    CHECK(quantile_linear(vals, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_linear(vals, 0.75) == doctest::Approx(3.25));
    CHECK(quantile_linear(vals, 0.0) == 1.0);
    CHECK(quantile_linear(vals, 1.0) == 4.0);
}

TEST_CASE("value distributions collapse weeks and summarize per cluster") {
    auto fx = small_fixture();
    auto dist = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Mean);
    // cluster 0, feature fa: week means {1,2,3,4}
    CHECK(dist.per_cluster[0][0].min == doctest::Approx(1.0));
    CHECK(dist.per_cluster[0][0].q25 == doctest::Approx(1.75));
    CHECK(dist.per_cluster[0][0].median == doctest::Approx(2.5));
    CHECK(dist.per_cluster[0][0].q75 == doctest::Approx(3.25));
    CHECK(dist.per_cluster[0][0].max == doctest::Approx(4.0));
    // overall pools all six students
    CHECK(dist.overall[0].max == doctest::Approx(4.0));
    CHECK(dist.overall[0].min == doctest::Approx(0.0));
}

TEST_CASE("single-member cluster repeats its value at every summary point") {
    auto fx = small_fixture();
    fx.assignment.labels = {0, 0, 0, 0, 0, 1};
    auto dist = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Mean);
    const auto& s = dist.per_cluster[1][1]; // s5's fb mean = 7
    CHECK(s.min == 7.0);
    CHECK(s.q25 == 7.0);
    CHECK(s.median == 7.0);
    CHECK(s.q75 == 7.0);
    CHECK(s.max == 7.0);
}

TEST_CASE("all-zero cluster values give all-zero quartiles") {
    auto fx = small_fixture();
    for (size_t s = 0; s < 4; ++s)
        for (int w = 0; w < 2; ++w) fx.cube.at(s, 1, w) = 0.0;
    auto dist = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Mean);
    CHECK(dist.per_cluster[0][1].q25 == 0.0);
    CHECK(dist.per_cluster[0][1].q75 == 0.0);
}

TEST_CASE("week collapse modes") {
    auto fx = small_fixture();
    auto sum = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Sum);
    CHECK(sum.per_cluster[0][0].max == doctest::Approx(8.0)); // s3: 4+4
    auto last = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Last);
    CHECK(last.per_cluster[0][0].max == doctest::Approx(4.0));
    CHECK(collapse_from_string("mean") == Collapse::Mean);
    CHECK_THROWS_AS(collapse_from_string("median"), ConfigError);
}

TEST_CASE("outcome rates per cluster plus pooled identity") {
    auto fx = small_fixture();
    auto rates = outcome_rates(fx.assignment, fx.labels);
    CHECK(rates.pass_rate[0] == doctest::Approx(0.75)); // 3 of 4
    CHECK(rates.pass_rate[1] == doctest::Approx(0.0));
    CHECK(rates.fraction[0] + rates.fraction[1] == doctest::Approx(1.0).epsilon(1e-12));
    double pooled = rates.pass_rate[0] * rates.fraction[0] + rates.pass_rate[1] * rates.fraction[1];
    CHECK(pooled == doctest::Approx(rates.overall_pass_rate));

    fx.labels.erase("s5");
    CHECK_THROWS_AS(outcome_rates(fx.assignment, fx.labels), LabelMismatch);
}

TEST_CASE("cluster {pass, pass, fail} scores two thirds") {
    ClusterAssignment a;
    a.ids = {"x", "y", "z"};
    a.labels = {0, 0, 0};
    a.n_clusters = 1;
    std::map<std::string, int> labels = {{"x", 1}, {"y", 1}, {"z", 0}};
    CHECK(outcome_rates(a, labels).pass_rate[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("value distributions ignore student order") {
    auto fx = small_fixture();
    Fixture shuffled = fx;
    const std::vector<size_t> perm = {5, 2, 0, 4, 1, 3};
    for (size_t i = 0; i < perm.size(); ++i) {
        shuffled.cube.student_ids[i] = fx.cube.student_ids[perm[i]];
        shuffled.assignment.ids[i] = fx.assignment.ids[perm[i]];
        shuffled.assignment.labels[i] = fx.assignment.labels[perm[i]];
        for (size_t f = 0; f < 2; ++f)
            for (int w = 0; w < 2; ++w) shuffled.cube.at(i, f, w) = fx.cube.at(perm[i], f, w);
    }
    auto d1 = value_distributions_by_cluster(fx.cube, fx.assignment, Collapse::Mean);
    auto d2 = value_distributions_by_cluster(shuffled.cube, shuffled.assignment, Collapse::Mean);
    for (int c = 0; c < 2; ++c)
        for (size_t f = 0; f < 2; ++f) {
            CHECK(d1.per_cluster[c][f].median == doctest::Approx(d2.per_cluster[c][f].median));
            CHECK(d1.per_cluster[c][f].q25 == doctest::Approx(d2.per_cluster[c][f].q25));
        }
}

TEST_CASE("overall extrema equal the extrema over clusters") {
    auto fx = small_fixture();
    auto report = build_report(fx.cube, fx.masks, fx.assignment, &fx.labels);
    for (size_t f = 0; f < 2; ++f) {
        double min_over = report.clusters[0].features[f].min;
        double max_over = report.clusters[0].features[f].max;
        for (const auto& c : report.clusters) {
            min_over = std::min(min_over, c.features[f].min);
            max_over = std::max(max_over, c.features[f].max);
        }
        CHECK(report.overall.features[f].min == doctest::Approx(min_over));
        CHECK(report.overall.features[f].max == doctest::Approx(max_over));
    }
    // fractions sum to one
    double total = 0;
    for (const auto& c : report.clusters) total += c.fraction;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("report export/import round-trip and CSV shapes") {
    auto fx = small_fixture();
    auto report = build_report(fx.cube, fx.masks, fx.assignment, &fx.labels);
    auto dir = std::filesystem::temp_directory_path() / "i3c_report_test";
    std::filesystem::remove_all(dir);
    export_report(report, dir.string());

    auto back = import_report((dir / "report.json").string());
    CHECK(back == report);

    auto count_lines = [](const std::string& path) {
        std::ifstream in(path);
        std::string line;
        size_t n = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++n;
        return n;
    };
    // header + (n_clusters + 1 overall block) * n_features
    CHECK(count_lines((dir / "report_values.csv").string()) == 1 + (2 + 1) * 2);
    CHECK(count_lines((dir / "report_importance.csv").string()) == 1 + (2 + 1) * 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("missing labels leave pass rates out of the report") {
    auto fx = small_fixture();
    auto report = build_report(fx.cube, fx.masks, fx.assignment, nullptr);
    CHECK(!report.overall.pass_rate.has_value());
    for (const auto& c : report.clusters) CHECK(!c.pass_rate.has_value());

    auto dir = std::filesystem::temp_directory_path() / "i3c_report_nolabel";
    std::filesystem::remove_all(dir);
    export_report(report, dir.string());
    auto back = import_report((dir / "report.json").string());
    CHECK(back == report);
    std::filesystem::remove_all(dir);
}

TEST_CASE("wide mask matrices report exactly the ever-selected features as nonzero") {
    // 45 features, 8 of them selected by someone: the paper-shaped sanity check
    const size_t S = 20, F = 45;
    MaskMatrix masks;
    ClusterAssignment assignment;
    for (size_t s = 0; s < S; ++s) {
        masks.student_ids.push_back("s" + std::to_string(s));
        assignment.ids.push_back("s" + std::to_string(s));
        assignment.labels.push_back(static_cast<int>(s % 3));
    }
    assignment.n_clusters = 3;
    for (size_t f = 0; f < F; ++f) masks.feature_names.push_back("f" + std::to_string(f));
    masks.values.assign(S * F, 0);
    Rng rng(61);
    const std::vector<size_t> ever = {0, 3, 7, 11, 19, 23, 31, 44};
    for (size_t s = 0; s < S; ++s)
        for (size_t f : ever)
            if (rng.bernoulli(0.6)) masks.at(s, f) = 1;
    for (size_t f : ever) { // make sure each is selected at least once
        masks.at(f % S, f) = 1;
    }
    auto imp = importance_by_cluster(masks, assignment);
    size_t nonzero = 0;
    for (size_t f = 0; f < F; ++f) {
        double total = 0;
        for (int c = 0; c < 3; ++c) total += imp[c][f];
        if (total > 0) ++nonzero;
    }
    CHECK(nonzero == ever.size());
}
