#include "interpret3c/clustering.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace i3c::clustering {

DistanceMatrix masked_feature_distance(const features::FeatureCube& cube,
                                       const gating::MaskMatrix& masks, size_t feature,
                                       int threads) {
    if (cube.student_ids != masks.student_ids || cube.feature_names != masks.feature_names)
        throw AlignmentError("masked_feature_distance: cube and masks disagree");
    if (feature >= cube.n_features())
        throw OutOfRange("masked_feature_distance: feature index out of range");
    const size_t n = cube.n_students();
    const int W = cube.weeks_used;

    DistanceMatrix d;
    d.ids = cube.student_ids;
    d.values.assign(n * n, 0.0);
    // Upper triangle first (write-disjoint rows), mirrored afterwards so the
    // matrix is symmetric bit-exactly regardless of thread count.
    parallel_for(n, threads, [&](size_t a) {
        const bool a_on = masks.at(a, feature) != 0;
        auto xa = cube.series(a, feature);
        for (size_t b = a + 1; b < n; ++b) {
            const bool b_on = masks.at(b, feature) != 0;
            auto xb = cube.series(b, feature);
            double sq = 0;
            for (int w = 0; w < W; ++w) {
                double va = a_on ? xa[w] : 0.0;
                double vb = b_on ? xb[w] : 0.0;
                double diff = va - vb;
                sq += diff * diff;
            }
            d.at(a, b) = std::sqrt(sq);
        }
    });
    for (size_t a = 0; a < n; ++a)
        for (size_t b = a + 1; b < n; ++b) d.at(b, a) = d.at(a, b);
    return d;
}

DistanceMatrix average_distance(std::span<const DistanceMatrix> matrices) {
    if (matrices.empty()) throw EmptyActiveSet("average_distance: no active features");
    const auto& first = matrices.front();
    DistanceMatrix out;
    out.ids = first.ids;
    out.values.assign(first.values.size(), 0.0);
    for (const auto& m : matrices) {
        if (m.ids != first.ids || m.values.size() != first.values.size())
            throw AlignmentError("average_distance: matrices disagree on students");
        for (size_t i = 0; i < m.values.size(); ++i) out.values[i] += m.values[i];
    }
    const double inv = 1.0 / static_cast<double>(matrices.size());
    for (auto& v : out.values) v *= inv;
    return out;
}

SimilarityMatrix gaussian_similarity(const DistanceMatrix& d, std::optional<double> sigma) {
    double bw;
    if (sigma) {
        if (*sigma <= 0) throw InvalidSpec("gaussian_similarity: sigma must be positive");
        bw = *sigma;
    } else {
        std::vector<double> positive;
        for (size_t i = 0; i < d.n(); ++i)
            for (size_t j = i + 1; j < d.n(); ++j)
                if (d.at(i, j) > 0) positive.push_back(d.at(i, j));
        if (positive.empty())
            throw DegenerateBandwidth("gaussian_similarity: no positive distances for the median");
        std::sort(positive.begin(), positive.end());
        size_t mid = positive.size() / 2;
        bw = positive.size() % 2 ? positive[mid] : 0.5 * (positive[mid - 1] + positive[mid]);
    }
    SimilarityMatrix s;
    s.ids = d.ids;
    s.bandwidth = bw;
    s.values.assign(d.values.size(), 0.0);
    const double denom = 2.0 * bw * bw;
    for (size_t i = 0; i < d.n(); ++i) {
        s.at(i, i) = 1.0;
        for (size_t j = i + 1; j < d.n(); ++j) {
            double v = std::exp(-d.at(i, j) * d.at(i, j) / denom);
            s.at(i, j) = v;
            s.at(j, i) = v;
        }
    }
    return s;
}

EigenDecomposition symmetric_eigen(std::span<const double> matrix, size_t n, size_t k_needed) {
    if (matrix.size() != n * n) throw ShapeMismatch("symmetric_eigen: matrix size mismatch");
    if (k_needed > n) throw ShapeMismatch("symmetric_eigen: more pairs requested than dimension");

    std::vector<double> a(n * n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) a[i * n + j] = 0.5 * (matrix[i * n + j] + matrix[j * n + i]);
    std::vector<double> v(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double fro = 0;
    for (double x : a) fro += x * x;
    fro = std::sqrt(fro);
    const double tol = 1e-14 * std::max(1.0, fro);

    const int max_sweeps = 100;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double off = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) off += 2.0 * a[i * n + j] * a[i * n + j];
        if (std::sqrt(off) <= tol) {
            converged = true;
            break;
        }
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (apq == 0.0) continue;
                double app = a[p * n + p];
                double aqq = a[q * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = tau >= 0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                    : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                // A <- J^T A J with J rotating the (p,q) plane.
                for (size_t i = 0; i < n; ++i) {
                    double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (size_t i = 0; i < n; ++i) {
                    double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for (size_t i = 0; i < n; ++i) {
                    double vip = v[i * n + p], viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    if (!converged) {
        // last chance: off-diagonal may have hit tolerance on the final sweep
        double off = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) off += 2.0 * a[i * n + j] * a[i * n + j];
        if (std::sqrt(off) > tol)
            throw ConvergenceFailure("symmetric_eigen: Jacobi did not converge in 100 sweeps");
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return a[x * n + x] < a[y * n + y]; });

    EigenDecomposition e;
    e.n = n;
    e.eigenvalues.resize(n);
    e.vectors.assign(n * n, 0.0);
    for (size_t j = 0; j < n; ++j) {
        e.eigenvalues[j] = a[order[j] * n + order[j]];
        for (size_t i = 0; i < n; ++i) e.vectors[i * n + j] = v[i * n + order[j]];
    }
    return e;
}

std::vector<double> normalized_laplacian(const SimilarityMatrix& s) {
    const size_t n = s.n();
    std::vector<double> degree(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) degree[i] += s.at(i, j);
    std::vector<double> inv_sqrt(n);
    for (size_t i = 0; i < n; ++i) {
        if (degree[i] <= 0) throw InvalidSpec("normalized_laplacian: non-positive degree");
        inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
    }
    std::vector<double> l(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            l[i * n + j] = (i == j ? 1.0 : 0.0) - s.at(i, j) * inv_sqrt[i] * inv_sqrt[j];
    return l;
}

EigengapDiagnostics eigengap_select(const SimilarityMatrix& s, int n_min, int n_max) {
    const size_t n = s.n();
    if (!(2 < n_min && n_min <= n_max && static_cast<size_t>(n_max) < n))
        throw OutOfRange("eigengap_select: need 2 < n_min <= n_max < students");
    auto lap = normalized_laplacian(s);
    EigenDecomposition e = symmetric_eigen(lap, n, static_cast<size_t>(n_max) + 1);

    EigengapDiagnostics diag;
    diag.n_min = n_min;
    diag.n_max = n_max;
    diag.eigenvalues.assign(e.eigenvalues.begin(), e.eigenvalues.begin() + n_max + 1);
    // gaps[k-1] = lambda_{k+1} - lambda_k with 1-based eigenvalue indexing
    diag.gaps.resize(n_max);
    for (int k = 1; k <= n_max; ++k) diag.gaps[k - 1] = e.eigenvalues[k] - e.eigenvalues[k - 1];

    auto argmax_in = [&](int lo, int hi) {
        int best = lo;
        for (int k = lo; k <= hi; ++k)
            if (diag.gaps[k - 1] > diag.gaps[best - 1]) best = k;
        return best;
    };
    diag.chosen = argmax_in(n_min, n_max);
    diag.unrestricted_max = argmax_in(1, n_max);
    return diag;
}

namespace {

double sq_dist(std::span<const double> points, size_t dim, size_t i, const double* center) {
    const double* x = points.data() + i * dim;
    double sq = 0;
    for (size_t d = 0; d < dim; ++d) {
        double diff = x[d] - center[d];
        sq += diff * diff;
    }
    return sq;
}

struct LloydOutcome {
    std::vector<int> labels;
    double wcss = std::numeric_limits<double>::infinity();
    bool valid = false;
};

LloydOutcome kmeans_once(std::span<const double> points, size_t n, size_t dim, int k, Rng& rng,
                         int max_iter, double tol) {
    // k-means++ seeding
    std::vector<double> centers(static_cast<size_t>(k) * dim);
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    size_t first = rng.uniform_index(n);
    std::copy_n(points.data() + first * dim, dim, centers.begin());
    for (size_t i = 0; i < n; ++i) mind[i] = sq_dist(points, dim, i, centers.data());
    for (int c = 1; c < k; ++c) {
        double total = std::accumulate(mind.begin(), mind.end(), 0.0);
        size_t pick;
        if (total <= 0) {
            pick = rng.uniform_index(n);
        } else {
            double r = rng.uniform() * total;
            double acc = 0;
            pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                acc += mind[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        double* center = centers.data() + static_cast<size_t>(c) * dim;
        std::copy_n(points.data() + pick * dim, dim, center);
        for (size_t i = 0; i < n; ++i) mind[i] = std::min(mind[i], sq_dist(points, dim, i, center));
    }

    LloydOutcome out;
    out.labels.assign(n, 0);
    std::vector<double> next(static_cast<size_t>(k) * dim);
    std::vector<size_t> counts(k);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points, dim, i, centers.data());
            for (int c = 1; c < k; ++c) {
                double dd = sq_dist(points, dim, i, centers.data() + static_cast<size_t>(c) * dim);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            out.labels[i] = best;
        }
        std::fill(next.begin(), next.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (size_t i = 0; i < n; ++i) {
            counts[out.labels[i]] += 1;
            const double* x = points.data() + i * dim;
            double* c = next.data() + static_cast<size_t>(out.labels[i]) * dim;
            for (size_t d = 0; d < dim; ++d) c[d] += x[d];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) return out; // invalid restart
            double inv = 1.0 / static_cast<double>(counts[c]);
            for (size_t d = 0; d < dim; ++d) next[static_cast<size_t>(c) * dim + d] *= inv;
        }
        double shift_sq = 0;
        for (int c = 0; c < k; ++c)
            shift_sq = std::max(shift_sq, sq_dist(std::span<const double>(next), dim,
                                                  static_cast<size_t>(c),
                                                  centers.data() + static_cast<size_t>(c) * dim));
        centers = next;
        if (shift_sq <= tol * tol) break;
    }
    out.wcss = 0;
    for (size_t i = 0; i < n; ++i)
        out.wcss += sq_dist(points, dim, i, centers.data() + static_cast<size_t>(out.labels[i]) * dim);
    out.valid = true;
    return out;
}

} // namespace

KmeansResult kmeans(std::span<const double> points, size_t n, size_t dim, int k, uint64_t seed,
                    int restarts, int max_iter, double center_shift_tol) {
    if (k < 1 || static_cast<size_t>(k) > n) throw InvalidSpec("kmeans: k out of range");
    if (points.size() != n * dim) throw ShapeMismatch("kmeans: point buffer size mismatch");
    Rng rng = Rng::derive(seed, 11);
    LloydOutcome best;
    for (int r = 0; r < restarts; ++r) {
        LloydOutcome attempt = kmeans_once(points, n, dim, k, rng, max_iter, center_shift_tol);
        if (attempt.valid && attempt.wcss < best.wcss) best = std::move(attempt);
    }
    if (!best.valid)
        throw EmptyCluster("kmeans: every restart converged with an empty cluster");
    return {std::move(best.labels), best.wcss};
}

namespace {

// Stable output labels: ascending cluster size, ties by smallest member id.
std::vector<int> relabel(const std::vector<int>& labels, const std::vector<std::string>& ids, int k) {
    struct Info {
        size_t size = 0;
        std::string min_id;
        int old_label = 0;
    };
    std::vector<Info> info(k);
    for (int c = 0; c < k; ++c) info[c].old_label = c;
    for (size_t i = 0; i < labels.size(); ++i) {
        Info& in = info[labels[i]];
        if (in.size == 0 || ids[i] < in.min_id) in.min_id = ids[i];
        in.size += 1;
    }
    std::sort(info.begin(), info.end(), [](const Info& a, const Info& b) {
        if (a.size != b.size) return a.size < b.size;
        return a.min_id < b.min_id;
    });
    std::vector<int> remap(k);
    for (int c = 0; c < k; ++c) remap[info[c].old_label] = c;
    std::vector<int> out(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
    return out;
}

} // namespace

ClusterAssignment spectral_cluster(const SimilarityMatrix& s, int n_clusters, uint64_t seed) {
    const size_t n = s.n();
    if (!(n_clusters >= 2 && static_cast<size_t>(n_clusters) < n))
        throw OutOfRange("spectral_cluster: need 2 <= n_clusters < students");
    auto lap = normalized_laplacian(s);
    EigenDecomposition e = symmetric_eigen(lap, n, static_cast<size_t>(n_clusters));

    // Embedding: n smallest eigenvectors, rows normalized to the unit sphere.
    const size_t k = static_cast<size_t>(n_clusters);
    std::vector<double> embedding(n * k);
    for (size_t i = 0; i < n; ++i) {
        double norm_sq = 0;
        for (size_t j = 0; j < k; ++j) {
            double v = e.vectors[i * n + j];
            embedding[i * k + j] = v;
            norm_sq += v * v;
        }
        if (norm_sq > 0) {
            double inv = 1.0 / std::sqrt(norm_sq);
            for (size_t j = 0; j < k; ++j) embedding[i * k + j] *= inv;
        }
    }
    KmeansResult km = kmeans(embedding, n, k, n_clusters, seed);

    ClusterAssignment out;
    out.ids = s.ids;
    out.labels = relabel(km.labels, s.ids, n_clusters);
    out.n_clusters = n_clusters;
    return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ShapeMismatch("adjusted_rand_index: length mismatch");
    const size_t n = a.size();
    if (n == 0) return 1.0;
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows, cols;
    for (size_t i = 0; i < n; ++i) {
        cells[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    auto comb2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_cells = 0, sum_rows = 0, sum_cols = 0;
    for (const auto& [_, c] : cells) sum_cells += comb2(c);
    for (const auto& [_, c] : rows) sum_rows += comb2(c);
    for (const auto& [_, c] : cols) sum_cols += comb2(c);
    double total = comb2(static_cast<double>(n));
    double expected = sum_rows * sum_cols / total;
    double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0; // both partitions trivial
    return (sum_cells - expected) / (max_index - expected);
}

void save_square_csv(const std::string& path, const std::vector<std::string>& ids,
                     std::span<const double> values) {
    if (values.size() != ids.size() * ids.size())
        throw ShapeMismatch("save_square_csv: size mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    std::vector<std::string> header = {"student_id"};
    header.insert(header.end(), ids.begin(), ids.end());
    csv::write_row(out, header);
    for (size_t i = 0; i < ids.size(); ++i) {
        std::vector<std::string> row = {ids[i]};
        for (size_t j = 0; j < ids.size(); ++j)
            row.push_back(format_double(values[i * ids.size() + j]));
        csv::write_row(out, row);
    }
}

std::pair<std::vector<std::string>, std::vector<double>> load_square_csv(const std::string& path) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    if (header.empty() || header[0] != "student_id")
        throw MalformedRow(path + ": expected student_id header");
    std::vector<std::string> ids(header.begin() + 1, header.end());
    std::vector<double> values;
    values.reserve(ids.size() * ids.size());
    if (rows.size() != ids.size()) throw MalformedRow(path + ": row count mismatch");
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].fields.size() != header.size() || trim(rows[i].fields[0]) != ids[i])
            throw MalformedRow(path + ": malformed row " + std::to_string(rows[i].line_number));
        for (size_t j = 1; j < rows[i].fields.size(); ++j)
            values.push_back(parse_double(rows[i].fields[j], path));
    }
    return {std::move(ids), std::move(values)};
}

void EigengapDiagnostics::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    csv::write_row(out, {"k", "lambda_k", "gap", "chosen"});
    for (int k = 1; k <= n_max; ++k)
        csv::write_row(out, {std::to_string(k), format_double(eigenvalues[k - 1]),
                             format_double(gaps[k - 1]), k == chosen ? "1" : "0"});
    csv::write_row(out, {std::to_string(n_max + 1), format_double(eigenvalues[n_max]), "", "0"});
}

void ClusterAssignment::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    csv::write_row(out, {"student_id", "cluster"});
    for (size_t i = 0; i < ids.size(); ++i)
        csv::write_row(out, {ids[i], std::to_string(labels[i])});
}

ClusterAssignment ClusterAssignment::load(const std::string& path) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    if (header != std::vector<std::string>{"student_id", "cluster"})
        throw MalformedRow(path + ": expected student_id,cluster header");
    ClusterAssignment a;
    int max_label = -1;
    for (const auto& row : rows) {
        if (row.fields.size() != 2) throw MalformedRow(path + ": expected 2 columns");
        a.ids.push_back(trim(row.fields[0]));
        int label = static_cast<int>(parse_long(row.fields[1], "cluster"));
        if (label < 0) throw MalformedRow(path + ": negative cluster label");
        a.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    a.n_clusters = max_label + 1;
    return a;
}

} // namespace i3c::clustering
