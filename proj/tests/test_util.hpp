#pragma once

// Shared helpers for the unit and acceptance suites: random instance
// generators and the dense-matrix oracle (the synthesis operator
// materialized column by column, against which the fast paths are checked).

#include <Eigen/Dense>
#include <vector>

#include "cdl/core.hpp"
#include "cdl/ops.hpp"

namespace testutil {

template <typename T>
cdl::Image<T> random_image(cdl::Rng& rng, int h, int w, double scale = 1.0) {
    cdl::Image<T> x(h, w);
    for (T& v : x.data) v = T(scale * rng.normal());
    return x;
}

template <typename T>
cdl::CoeffMap<T> random_coeffs(cdl::Rng& rng, int m, int h, int w, double scale = 1.0) {
    cdl::CoeffMap<T> z(m, h, w);
    for (T& v : z.data) v = T(scale * rng.normal());
    return z;
}

template <typename T>
cdl::FilterBank<T> random_bank(cdl::Rng& rng, int m, int q, int s, double scale = 1.0) {
    cdl::FilterBank<T> bank(m, q, s);
    for (T& v : bank.weights) v = T(scale * rng.normal());
    return bank;
}

// Single centered unit tap; synthesis/analysis with it at stride 1 is the
// identity.
template <typename T>
cdl::FilterBank<T> delta_bank(int m, int q, int s) {
    cdl::FilterBank<T> bank(m, q, s);
    const int c = (q - 1) / 2;
    for (int j = 0; j < m; ++j) bank(j, c, c) = T(1);
    return bank;
}

template <typename T>
Eigen::VectorXd flatten(const std::vector<T>& v) {
    Eigen::VectorXd out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = double(v[i]);
    return out;
}

// Materializes the synthesis operator W Delta_s for a grid of the given
// dims by pushing every basis coefficient map through conv_synthesis.
template <typename T>
Eigen::MatrixXd dense_synthesis_matrix(const cdl::FilterBank<T>& bank, int grid_h, int grid_w) {
    const int rows = grid_h * bank.stride * grid_w * bank.stride;
    const int cols = bank.num_filters * grid_h * grid_w;
    Eigen::MatrixXd mat(rows, cols);
    int col = 0;
    for (int j = 0; j < bank.num_filters; ++j) {
        for (int u = 0; u < grid_h; ++u) {
            for (int v = 0; v < grid_w; ++v, ++col) {
                cdl::CoeffMap<T> basis(bank.num_filters, grid_h, grid_w);
                basis(j, u, v) = T(1);
                mat.col(col) = flatten(cdl::conv_synthesis(basis, bank).data);
            }
        }
    }
    return mat;
}

template <typename T>
double dot(const std::vector<T>& a, const std::vector<T>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
    return acc;
}

template <typename T>
double norm(const std::vector<T>& a) {
    return std::sqrt(dot(a, a));
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace testutil
