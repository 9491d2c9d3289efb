#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "proxyrec/errors.hpp"
#include "proxyrec/rng.hpp"

namespace proxyrec {

namespace detail {

// Leading eigenvector of X^T X / m for mean-centered X, by power iteration.
// Returns the explained variance (eigenvalue); direction written in place.
inline double power_iteration_direction(const std::vector<std::vector<double>>& x,
                                        std::vector<double>& direction, double tol,
                                        int max_iters, Rng& rng) {
    const std::size_t m = x.size();
    const std::size_t d = x[0].size();
    std::vector<double> v(d);
    double norm = 0;
    for (auto& c : v) {
        c = rng.gaussian();
        norm += c * c;
    }
    norm = std::sqrt(norm);
    for (auto& c : v) c /= norm;

    std::vector<double> w(d);
    double lambda = 0;
    for (int iter = 0; iter < max_iters; ++iter) {
        std::fill(w.begin(), w.end(), 0.0);
        for (const auto& row : x) {
            double proj = 0;
            for (std::size_t j = 0; j < d; ++j) proj += row[j] * v[j];
            for (std::size_t j = 0; j < d; ++j) w[j] += proj * row[j];
        }
        double wn = 0;
        for (double c : w) wn += c * c;
        wn = std::sqrt(wn);
        if (wn == 0.0) break;  // no variance along any remaining direction
        double diff = 0, diff_flip = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double nj = w[j] / wn;
            diff += (nj - v[j]) * (nj - v[j]);
            diff_flip += (nj + v[j]) * (nj + v[j]);
            v[j] = nj;
        }
        lambda = wn / static_cast<double>(m);
        if (std::sqrt(std::min(diff, diff_flip)) < tol) break;
    }
    direction = v;
    return lambda;
}

}  // namespace detail

struct PcaResult {
    std::vector<std::array<double, 2>> coords;  // m x 2 projected coordinates
    std::array<std::vector<double>, 2> directions;
    std::array<double, 2> variances{0.0, 0.0};
    bool degenerate = false;  // zero-variance input
};

// Mean-center, then extract the top-2 principal directions by power
// iteration with deflation.
inline PcaResult pca_project(const std::vector<std::vector<double>>& vectors,
                             double tol = 1e-9, int max_iters = 10000) {
    if (vectors.size() < 2) throw ContractError("pca_project: need at least 2 rows");
    const std::size_t m = vectors.size();
    const std::size_t d = vectors[0].size();
    for (const auto& row : vectors)
        if (row.size() != d) throw ShapeError("pca_project: ragged input");

    std::vector<double> mean(d, 0.0);
    for (const auto& row : vectors)
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (auto& c : mean) c /= static_cast<double>(m);
    std::vector<std::vector<double>> centered(vectors);
    double total_var = 0;
    for (auto& row : centered)
        for (std::size_t j = 0; j < d; ++j) {
            row[j] -= mean[j];
            total_var += row[j] * row[j];
        }

    PcaResult result;
    result.coords.assign(m, {0.0, 0.0});
    result.directions[0].assign(d, 0.0);
    result.directions[1].assign(d, 0.0);
    if (total_var / static_cast<double>(m) < 1e-18) {
        result.degenerate = true;
        return result;
    }

    Rng rng(0x9ca);
    for (int comp = 0; comp < 2; ++comp) {
        result.variances[comp] = detail::power_iteration_direction(
            centered, result.directions[comp], tol, max_iters, rng);
        for (std::size_t i = 0; i < m; ++i) {
            double proj = 0;
            for (std::size_t j = 0; j < d; ++j)
                proj += centered[i][j] * result.directions[comp][j];
            result.coords[i][comp] = proj;
            // deflate
            for (std::size_t j = 0; j < d; ++j)
                centered[i][j] -= proj * result.directions[comp][j];
        }
    }
    return result;
}

// Spectral norm (largest singular value) via power iteration on A^T A.
inline double spectral_norm(const std::vector<std::vector<double>>& a, double tol = 1e-12,
                            int max_iters = 10000) {
    if (a.empty() || a[0].empty()) throw ContractError("spectral_norm: empty matrix");
    const std::size_t d = a[0].size();
    Rng rng(0x5eed);
    std::vector<double> v(d);
    double norm = 0;
    for (auto& c : v) {
        c = rng.gaussian();
        norm += c * c;
    }
    norm = std::sqrt(norm);
    for (auto& c : v) c /= norm;

    double sigma2 = 0;
    std::vector<double> w(d);
    for (int iter = 0; iter < max_iters; ++iter) {
        std::fill(w.begin(), w.end(), 0.0);
        for (const auto& row : a) {
            double proj = 0;
            for (std::size_t j = 0; j < d; ++j) proj += row[j] * v[j];
            for (std::size_t j = 0; j < d; ++j) w[j] += proj * row[j];
        }
        double wn = 0;
        for (double c : w) wn += c * c;
        wn = std::sqrt(wn);
        if (wn == 0.0) return 0.0;
        double diff = 0, diff_flip = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double nj = w[j] / wn;
            diff += (nj - v[j]) * (nj - v[j]);
            diff_flip += (nj + v[j]) * (nj + v[j]);
            v[j] = nj;
        }
        sigma2 = wn;
        if (std::sqrt(std::min(diff, diff_flip)) < tol) break;
    }
    return std::sqrt(sigma2);
}

}  // namespace proxyrec
