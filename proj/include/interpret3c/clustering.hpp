#pragma once

#include "interpret3c/features.hpp"
#include "interpret3c/gating_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace i3c::clustering {

struct DistanceMatrix {
    std::vector<std::string> ids;
    std::vector<double> values; // n x n, symmetric, zero diagonal

    size_t n() const { return ids.size(); }
    double at(size_t i, size_t j) const { return values[i * ids.size() + j]; }
    double& at(size_t i, size_t j) { return values[i * ids.size() + j]; }
};

struct SimilarityMatrix {
    std::vector<std::string> ids;
    std::vector<double> values; // entries in (0,1], unit diagonal
    double bandwidth = 0;       // sigma actually used

    size_t n() const { return ids.size(); }
    double at(size_t i, size_t j) const { return values[i * ids.size() + j]; }
    double& at(size_t i, size_t j) { return values[i * ids.size() + j]; }
};

struct EigenDecomposition {
    size_t n = 0;
    std::vector<double> eigenvalues; // ascending
    std::vector<double> vectors;     // n x n row-major, column j = eigenvector j
};

struct EigengapDiagnostics {
    std::vector<double> eigenvalues; // first n_max + 1 Laplacian eigenvalues
    std::vector<double> gaps;        // gaps[k-1] = lambda_{k+1} - lambda_k, k = 1..n_max
    int n_min = 3;
    int n_max = 10;
    int chosen = 0;          // argmax gap restricted to [n_min, n_max]
    int unrestricted_max = 0; // argmax gap over [1, n_max]

    void save(const std::string& path) const; // eigengap.csv
};

struct ClusterAssignment {
    std::vector<std::string> ids;
    std::vector<int> labels; // 0 .. n_clusters-1, every cluster non-empty
    int n_clusters = 0;
    EigengapDiagnostics diagnostics;

    void save(const std::string& path) const; // assignments.csv
    static ClusterAssignment load(const std::string& path);
};

// Per-feature Euclidean distances with zero imputation for masked-off students.
DistanceMatrix masked_feature_distance(const features::FeatureCube& cube,
                                       const gating::MaskMatrix& masks, size_t feature,
                                       int threads = 1);

// Entrywise mean over the active feature set.
DistanceMatrix average_distance(std::span<const DistanceMatrix> matrices);

// S = exp(-d^2 / (2 sigma^2)); sigma = nullopt resolves to the median of
// strictly positive off-diagonal distances.
SimilarityMatrix gaussian_similarity(const DistanceMatrix& d, std::optional<double> sigma);

// Cyclic Jacobi on the symmetrized input; all eigenpairs, ascending.
EigenDecomposition symmetric_eigen(std::span<const double> matrix, size_t n, size_t k_needed);

// I - Dg^{-1/2} S Dg^{-1/2}
std::vector<double> normalized_laplacian(const SimilarityMatrix& s);

EigengapDiagnostics eigengap_select(const SimilarityMatrix& s, int n_min = 3, int n_max = 10);

ClusterAssignment spectral_cluster(const SimilarityMatrix& s, int n_clusters, uint64_t seed);

// Lloyd iterations with k-means++ seeding; restarts that converge with an
// empty cluster are discarded, EmptyCluster only if every restart fails.
struct KmeansResult {
    std::vector<int> labels;
    double wcss = 0;
};
KmeansResult kmeans(std::span<const double> points, size_t n, size_t dim, int k, uint64_t seed,
                    int restarts = 20, int max_iter = 300, double center_shift_tol = 1e-10);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

void save_square_csv(const std::string& path, const std::vector<std::string>& ids,
                     std::span<const double> values);
std::pair<std::vector<std::string>, std::vector<double>> load_square_csv(const std::string& path);

} // namespace i3c::clustering
