#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "interpret3c/clustering.hpp"
#include "interpret3c/common.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>

using namespace i3c;
using namespace i3c::clustering;
using features::FeatureCube;
using gating::MaskMatrix;

namespace {

FeatureCube two_student_cube(std::vector<double> a, std::vector<double> b) {
    FeatureCube cube;
    cube.student_ids = {"a", "b"};
    cube.feature_names = {"f"};
    cube.weeks_used = static_cast<int>(a.size());
    cube.scaled = true;
    cube.values = a;
    cube.values.insert(cube.values.end(), b.begin(), b.end());
    return cube;
}

MaskMatrix masks_for(const FeatureCube& cube, std::vector<uint8_t> values) {
    MaskMatrix m;
    m.student_ids = cube.student_ids;
    m.feature_names = cube.feature_names;
    m.values = std::move(values);
    return m;
}

SimilarityMatrix block_similarity(const std::vector<size_t>& sizes) {
    size_t n = 0;
    for (size_t s : sizes) n += s;
    SimilarityMatrix s;
    for (size_t i = 0; i < n; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "s%03zu", i);
        s.ids.push_back(buf);
    }
    s.values.assign(n * n, 0.0);
    size_t offset = 0;
    for (size_t block : sizes) {
        for (size_t i = offset; i < offset + block; ++i)
            for (size_t j = offset; j < offset + block; ++j) s.values[i * n + j] = 1.0;
        offset += block;
    }
    return s;
}

} // namespace

TEST_CASE("masked distances impute zeros for gated-off students") {
    auto cube = two_student_cube({3, 4}, {7, 7});

    SUBCASE("both masked off: distance zero") {
        auto d = masked_feature_distance(cube, masks_for(cube, {0, 0}), 0);
        CHECK(d.at(0, 1) == 0.0);
    }
    SUBCASE("one present: distance is the present norm") {
        auto d = masked_feature_distance(cube, masks_for(cube, {1, 0}), 0);
        CHECK(d.at(0, 1) == doctest::Approx(5.0)); // ||(3,4)||
        CHECK(d.at(1, 0) == d.at(0, 1));
        CHECK(d.at(0, 0) == 0.0);
    }
    SUBCASE("both present: plain euclidean") {
        auto c2 = two_student_cube({1, 0}, {0, 1});
        auto d = masked_feature_distance(c2, masks_for(c2, {1, 1}), 0);
        CHECK(d.at(0, 1) == doctest::Approx(std::sqrt(2.0)));
    }
}

TEST_CASE("distance averaging is the entrywise mean over active features") {
    DistanceMatrix m1{{"a", "b"}, {0, 2, 2, 0}};
    DistanceMatrix m2{{"a", "b"}, {0, 4, 4, 0}};
    std::vector<DistanceMatrix> both = {m1, m2};
    CHECK(average_distance(both).at(0, 1) == doctest::Approx(3.0));

    std::vector<DistanceMatrix> one = {m1};
    CHECK(average_distance(one).values == m1.values);

    DistanceMatrix m0{{"a", "b"}, {0, 0, 0, 0}};
    DistanceMatrix m3{{"a", "b"}, {0, 3, 3, 0}};
    DistanceMatrix m6{{"a", "b"}, {0, 6, 6, 0}};
    std::vector<DistanceMatrix> three = {m0, m3, m6};
    CHECK(average_distance(three).at(0, 1) == doctest::Approx(3.0));

    CHECK_THROWS_AS(average_distance(std::span<const DistanceMatrix>{}), EmptyActiveSet);
}

TEST_CASE("gaussian kernel values") {
    const double sigma = 1.7;
    DistanceMatrix d{{"a", "b", "c"}, {0, 0, sigma, 0, 0, 2 * sigma, sigma, 2 * sigma, 0}};
    auto s = gaussian_similarity(d, sigma);
    CHECK(s.at(0, 1) == 1.0);                                       // d = 0
    CHECK(s.at(0, 2) == doctest::Approx(0.60653065971263342));      // e^{-1/2}
    CHECK(s.at(1, 2) == doctest::Approx(0.13533528323661270));      // e^{-2}
    CHECK(s.at(0, 0) == 1.0);
    CHECK(s.bandwidth == sigma);
}

TEST_CASE("median bandwidth uses strictly positive off-diagonal entries") {
    DistanceMatrix d{{"a", "b", "c"}, {0, 1, 3, 1, 0, 0, 3, 0, 0}};
    auto s = gaussian_similarity(d, std::nullopt);
    CHECK(s.bandwidth == doctest::Approx(2.0)); // median of {1, 3}

    DistanceMatrix zeros{{"a", "b"}, {0, 0, 0, 0}};
    CHECK_THROWS_AS(gaussian_similarity(zeros, std::nullopt), DegenerateBandwidth);
}

TEST_CASE("kernel is strictly order-reversing") {
    Rng rng(31);
    DistanceMatrix d;
    d.ids = {"a", "b", "c", "d"};
    d.values.assign(16, 0.0);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = i + 1; j < 4; ++j) {
            double v = rng.uniform(0.5, 5);
            d.values[i * 4 + j] = v;
            d.values[j * 4 + i] = v;
        }
    auto s = gaussian_similarity(d, std::nullopt);
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = i + 1; j < 4; ++j)
            for (size_t k = 0; k < 4; ++k)
                for (size_t l = k + 1; l < 4; ++l)
                    if (d.at(i, j) < d.at(k, l)) CHECK(s.at(i, j) > s.at(k, l));
}

TEST_CASE("jacobi eigensolver on hand-checked matrices") {
    SUBCASE("identity") {
        std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        auto e = symmetric_eigen(eye, 3, 3);
        for (double v : e.eigenvalues) CHECK(v == doctest::Approx(1.0));
    }
    SUBCASE("diagonal") {
        std::vector<double> d = {2, 0, 0, 0, 1, 0, 0, 0, 3};
        auto e = symmetric_eigen(d, 3, 3);
        CHECK(e.eigenvalues[0] == doctest::Approx(1.0));
        CHECK(e.eigenvalues[1] == doctest::Approx(2.0));
        CHECK(e.eigenvalues[2] == doctest::Approx(3.0));
        // eigenvector of eigenvalue 1 is e_1
        CHECK(std::abs(e.vectors[1 * 3 + 0]) == doctest::Approx(1.0));
    }
    SUBCASE("2x2 with known spectrum") {
        std::vector<double> m = {2, 1, 1, 2};
        auto e = symmetric_eigen(m, 2, 2);
        CHECK(e.eigenvalues[0] == doctest::Approx(1.0));
        CHECK(e.eigenvalues[1] == doctest::Approx(3.0));
        const double inv_rt2 = 1.0 / std::sqrt(2.0);
        CHECK(std::abs(e.vectors[0 * 2 + 0]) == doctest::Approx(inv_rt2));
        // eigenvector of 1 is (1,-1)/sqrt(2): components have opposite signs
        CHECK(e.vectors[0 * 2 + 0] * e.vectors[1 * 2 + 0] < 0);
        CHECK(e.vectors[0 * 2 + 1] * e.vectors[1 * 2 + 1] > 0);
    }
}

TEST_CASE("eigen pairs satisfy residual and orthonormality bounds") {
    Rng rng(37);
    const size_t n = 24;
    std::vector<double> a(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j <= i; ++j) {
            double v = rng.uniform(-2, 2);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    auto e = symmetric_eigen(a, n, n);
    double norm_inf = 0;
    for (size_t i = 0; i < n; ++i) {
        double row = 0;
        for (size_t j = 0; j < n; ++j) row += std::abs(a[i * n + j]);
        norm_inf = std::max(norm_inf, row);
    }
    for (size_t j = 0; j < n; ++j) {
        double worst = 0;
        for (size_t i = 0; i < n; ++i) {
            double av = 0;
            for (size_t k = 0; k < n; ++k) av += a[i * n + k] * e.vectors[k * n + j];
            worst = std::max(worst, std::abs(av - e.eigenvalues[j] * e.vectors[i * n + j]));
        }
        CHECK(worst <= 1e-8 * std::max(1.0, norm_inf));
    }
    for (size_t j = 0; j < n; ++j)
        for (size_t k = j; k < n; ++k) {
            double dot = 0;
            for (size_t i = 0; i < n; ++i) dot += e.vectors[i * n + j] * e.vectors[i * n + k];
            CHECK(std::abs(dot - (j == k ? 1.0 : 0.0)) <= 1e-8);
        }
    // ascending order
    for (size_t j = 1; j < n; ++j) CHECK(e.eigenvalues[j] >= e.eigenvalues[j - 1]);
}

TEST_CASE("eigengap recovers the block count of perfect block-diagonal similarities") {
    auto s3 = block_similarity({4, 5, 6});
    CHECK(eigengap_select(s3, 3, 10).chosen == 3);
    auto s5 = block_similarity({4, 4, 5, 5, 6});
    CHECK(eigengap_select(s5, 3, 10).chosen == 5);
}

TEST_CASE("two blocks clamp to the allowed range with diagnostics") {
    auto s2 = block_similarity({6, 7});
    auto diag = eigengap_select(s2, 3, 10);
    CHECK(diag.chosen >= 3);
    CHECK(diag.chosen <= 10);
    CHECK(diag.unrestricted_max == 2); // the true gap sits at k = 2
}

TEST_CASE("eigengap preconditions") {
    auto s = block_similarity({4, 5});
    CHECK_THROWS_AS(eigengap_select(s, 2, 10), OutOfRange); // n_min must exceed 2
    CHECK_THROWS_AS(eigengap_select(s, 5, 3), OutOfRange);
    CHECK_THROWS_AS(eigengap_select(s, 3, 9), OutOfRange); // n_max must stay below n
}

TEST_CASE("spectral clustering recovers two disconnected cliques exactly") {
    auto s = block_similarity({5, 5});
    auto assignment = spectral_cluster(s, 2, 123);
    auto components = oracle::connected_components(s.values, 10);
    CHECK(adjusted_rand_index(assignment.labels, components) == doctest::Approx(1.0));
}

TEST_CASE("spectral clustering separates three planted blobs") {
    Rng rng(41);
    std::vector<double> points;
    std::vector<int> plant;
    const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 15; ++i) {
            points.push_back(centers[c][0] + rng.gaussian());
            points.push_back(centers[c][1] + rng.gaussian());
            plant.push_back(c);
        }
    const size_t n = plant.size();
    DistanceMatrix d;
    for (size_t i = 0; i < n; ++i) d.ids.push_back("p" + std::to_string(100 + i));
    d.values.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double dx = points[2 * i] - points[2 * j];
            double dy = points[2 * i + 1] - points[2 * j + 1];
            double v = std::sqrt(dx * dx + dy * dy);
            d.values[i * n + j] = v;
            d.values[j * n + i] = v;
        }
    auto s = gaussian_similarity(d, std::nullopt);
    auto assignment = spectral_cluster(s, 3, 7);
    CHECK(adjusted_rand_index(assignment.labels, plant) >= 0.95);

    SUBCASE("eigengap agrees on three clusters") {
        CHECK(eigengap_select(s, 3, 10).chosen == 3);
    }
}

TEST_CASE("n one below the student count still yields non-empty clusters") {
    Rng rng(43);
    const size_t n = 8;
    DistanceMatrix d;
    d.values.assign(n * n, 0.0);
    std::vector<double> xs(n);
    for (size_t i = 0; i < n; ++i) {
        d.ids.push_back("q" + std::to_string(i));
        xs[i] = static_cast<double>(i) * 2.0 + rng.uniform(0, 0.5);
    }
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            double v = std::abs(xs[i] - xs[j]);
            d.values[i * n + j] = v;
            d.values[j * n + i] = v;
        }
    auto s = gaussian_similarity(d, std::nullopt);
    auto assignment = spectral_cluster(s, static_cast<int>(n) - 1, 5);
    std::vector<size_t> sizes(assignment.n_clusters, 0);
    for (int label : assignment.labels) sizes[label] += 1;
    for (size_t c : sizes) CHECK(c >= 1);
}

TEST_CASE("masked distances and their average satisfy pseudo-metric axioms") {
    Rng rng(47);
    const size_t S = 30;
    FeatureCube cube;
    for (size_t s = 0; s < S; ++s) cube.student_ids.push_back("s" + std::to_string(100 + s));
    cube.feature_names = {"f0", "f1", "f2"};
    cube.weeks_used = 4;
    cube.scaled = true;
    cube.values.resize(S * 3 * 4);
    for (auto& v : cube.values) v = rng.uniform(0, 1);
    MaskMatrix masks;
    masks.student_ids = cube.student_ids;
    masks.feature_names = cube.feature_names;
    masks.values.resize(S * 3);
    for (auto& v : masks.values) v = rng.bernoulli(0.6) ? 1 : 0;

    std::vector<DistanceMatrix> per_feature;
    for (size_t f = 0; f < 3; ++f) per_feature.push_back(masked_feature_distance(cube, masks, f));
    DistanceMatrix avg = average_distance(per_feature);

    auto check_metric = [&](const DistanceMatrix& d) {
        for (size_t i = 0; i < S; ++i) {
            CHECK(d.at(i, i) == 0.0);
            for (size_t j = 0; j < S; ++j) {
                CHECK(d.at(i, j) == d.at(j, i));
                CHECK(d.at(i, j) >= 0.0);
            }
        }
        for (size_t i = 0; i < S; ++i)
            for (size_t j = 0; j < S; ++j)
                for (size_t k = 0; k < S; ++k)
                    CHECK(d.at(i, j) <= d.at(i, k) + d.at(k, j) + 1e-9);
    };
    for (const auto& d : per_feature) check_metric(d);
    check_metric(avg);
}

TEST_CASE("spectral clustering is reproducible and permutation-consistent") {
    auto s = block_similarity({4, 6, 8});
    // soften the blocks so k-means has actual work to do
    Rng rng(53);
    for (size_t i = 0; i < s.n(); ++i)
        for (size_t j = i + 1; j < s.n(); ++j) {
            double v = std::max(0.01, s.at(i, j) - rng.uniform(0, 0.2));
            s.at(i, j) = v;
            s.at(j, i) = v;
        }
    auto a1 = spectral_cluster(s, 3, 99);
    auto a2 = spectral_cluster(s, 3, 99);
    CHECK(a1.labels == a2.labels);

    // permute students; relabeling must land on the same partition
    const size_t n = s.n();
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n;
    SimilarityMatrix sp;
    sp.ids.resize(n);
    sp.values.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        sp.ids[i] = s.ids[perm[i]];
        for (size_t j = 0; j < n; ++j) sp.values[i * n + j] = s.at(perm[i], perm[j]);
    }
    auto ap = spectral_cluster(sp, 3, 99);
    for (size_t i = 0; i < n; ++i) CHECK(ap.labels[i] == a1.labels[perm[i]]);
}

TEST_CASE("kmeans recovers well-separated points and respects seeding") {
    std::vector<double> pts = {0.0, 0.1, 0.05, 10.0, 10.1, 9.95};
    auto r1 = kmeans(pts, 6, 1, 2, 77);
    CHECK(r1.labels[0] == r1.labels[1]);
    CHECK(r1.labels[1] == r1.labels[2]);
    CHECK(r1.labels[3] == r1.labels[4]);
    CHECK(r1.labels[0] != r1.labels[3]);
    auto r2 = kmeans(pts, 6, 1, 2, 77);
    CHECK(r1.labels == r2.labels);
}

TEST_CASE("adjusted rand index on hand partitions") {
    std::vector<int> a = {0, 0, 1, 1};
    std::vector<int> same = {1, 1, 0, 0};
    CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
    CHECK(adjusted_rand_index(a, same) == doctest::Approx(1.0)); // label names are irrelevant
    std::vector<int> coarse = {0, 0, 0, 0};
    CHECK(adjusted_rand_index(coarse, a) == doctest::Approx(0.0));
}

TEST_CASE("square csv and assignment files round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "i3c_cluster_io";
    std::filesystem::create_directories(dir);
    Rng rng(59);
    std::vector<std::string> ids = {"x", "y", "z"};
    std::vector<double> vals(9);
    for (auto& v : vals) v = rng.gaussian();
    save_square_csv((dir / "m.csv").string(), ids, vals);
    auto [ids2, vals2] = load_square_csv((dir / "m.csv").string());
    CHECK(ids2 == ids);
    CHECK(vals2 == vals);

    ClusterAssignment a;
    a.ids = ids;
    a.labels = {1, 0, 1};
    a.n_clusters = 2;
    a.save((dir / "a.csv").string());
    auto back = ClusterAssignment::load((dir / "a.csv").string());
    CHECK(back.ids == a.ids);
    CHECK(back.labels == a.labels);
    CHECK(back.n_clusters == 2);
    std::filesystem::remove_all(dir);
}
