#pragma once

// Test-only reference implementations, deliberately written as straight-line
// scalar code so they share nothing with the library's vectorized paths.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace oracle {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-gate scalar LSTM, hidden size 2, scalar input, separate weight arrays.
struct ScalarLstm2 {
    double wi[2], wf[2], wg[2], wo[2];          // input weights per unit
    double ui[2][2], uf[2][2], ug[2][2], uo[2][2]; // recurrent weights [unit][prev]
    double bi[2], bf[2], bg[2], bo[2];

    // Returns the final hidden state after consuming xs left to right.
    std::array<double, 2> run(std::span<const double> xs) const {
        double h[2] = {0, 0}, c[2] = {0, 0};
        for (double x : xs) {
            double nh[2], nc[2];
            for (int j = 0; j < 2; ++j) {
                double i_g = sigmoid(wi[j] * x + ui[j][0] * h[0] + ui[j][1] * h[1] + bi[j]);
                double f_g = sigmoid(wf[j] * x + uf[j][0] * h[0] + uf[j][1] * h[1] + bf[j]);
                double g_g = std::tanh(wg[j] * x + ug[j][0] * h[0] + ug[j][1] * h[1] + bg[j]);
                double o_g = sigmoid(wo[j] * x + uo[j][0] * h[0] + uo[j][1] * h[1] + bo[j]);
                nc[j] = f_g * c[j] + i_g * g_g;
                nh[j] = o_g * std::tanh(nc[j]);
            }
            h[0] = nh[0];
            h[1] = nh[1];
            c[0] = nc[0];
            c[1] = nc[1];
        }
        return {h[0], h[1]};
    }
};

// Connected components over positive similarity entries.
inline std::vector<int> connected_components(std::span<const double> s, size_t n) {
    std::vector<int> comp(n, -1);
    int next = 0;
    std::vector<size_t> stack;
    for (size_t start = 0; start < n; ++start) {
        if (comp[start] >= 0) continue;
        comp[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            size_t i = stack.back();
            stack.pop_back();
            for (size_t j = 0; j < n; ++j) {
                if (i == j || comp[j] >= 0) continue;
                if (s[i * n + j] > 0) {
                    comp[j] = next;
                    stack.push_back(j);
                }
            }
        }
        ++next;
    }
    return comp;
}

// Normalized cut of a bipartition given by side[i] in {0,1}; volumes include
// the diagonal.
inline double normalized_cut(std::span<const double> s, size_t n, std::span<const int> side) {
    double cut = 0, vol0 = 0, vol1 = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double w = s[i * n + j];
            if (side[i] == 0) vol0 += w;
            else vol1 += w;
            if (i < j && side[i] != side[j]) cut += w;
        }
    }
    if (vol0 == 0 || vol1 == 0) return std::numeric_limits<double>::infinity();
    return cut / vol0 + cut / vol1;
}

// Exhaustive minimum over all nontrivial bipartitions (n <= ~20).
inline double min_normalized_cut(std::span<const double> s, size_t n) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> side(n, 0);
    // fix node 0 on side 0 to halve the enumeration
    for (unsigned long mask = 1; mask < (1ul << (n - 1)); ++mask) {
        for (size_t i = 1; i < n; ++i) side[i] = (mask >> (i - 1)) & 1;
        best = std::min(best, normalized_cut(s, n, side));
    }
    return best;
}

} // namespace oracle
