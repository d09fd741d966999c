#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cdl/core.hpp"

// Blind noise-level estimation. The wavelet estimator is the classic
// median-absolute-deviation of the finest diagonal subband; the PCA
// estimator finds the smallest eigenvalue of the covariance of weak-texture
// patches, with a Marchenko-Pastur edge correction for the finite sample.

namespace cdl {

// sigma_hat = median(|HH|) / 0.6745 with an orthonormal one-level 2D Haar
// transform; odd trailing row/column is ignored.
template <typename T>
T estimate_mad(const Image<T>& x) {
    const int hh = x.height / 2, hw = x.width / 2;
    if (hh < 1 || hw < 1) throw contract_error("estimate_mad: image must be at least 2x2");
    std::vector<T> mags;
    mags.reserve(size_t(hh) * hw);
    for (int i = 0; i < hh; ++i)
        for (int j = 0; j < hw; ++j) {
            const T d = (x(2 * i, 2 * j) - x(2 * i, 2 * j + 1) - x(2 * i + 1, 2 * j) +
                         x(2 * i + 1, 2 * j + 1)) /
                        T(2);
            mags.push_back(std::abs(d));
        }
    auto mid = mags.begin() + ptrdiff_t(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    return *mid / T(0.6745);
}

namespace detail {

constexpr int kPcaPatch = 7;                  // patch side
constexpr int kPcaDim = kPcaPatch * kPcaPatch;
constexpr size_t kPcaMaxPatches = 10000;      // raster-subsampled cap
constexpr double kPcaTailFraction = 0.25;     // initial weak-texture share
constexpr double kPcaVarFactor = 3.0;         // selection threshold on variance
constexpr int kPcaIters = 10;
constexpr size_t kPcaMinSelected = 4 * size_t(kPcaDim);

}  // namespace detail

// Weak-texture PCA estimator. Returns the estimated sigma; if the image is
// too small or the selection collapses, falls back to the wavelet estimate
// and reports it through used_fallback.
template <typename T>
T estimate_pca(const Image<T>& x, bool* used_fallback = nullptr) {
    using detail::kPcaDim;
    using detail::kPcaPatch;
    if (used_fallback) *used_fallback = false;
    const int nr = x.height - kPcaPatch + 1, nc = x.width - kPcaPatch + 1;
    if (nr < 1 || nc < 1 || size_t(nr) * size_t(nc) < detail::kPcaMinSelected) {
        if (used_fallback) *used_fallback = true;
        return estimate_mad(x);
    }

    // gather patches, raster-subsampled to the cap
    const size_t total = size_t(nr) * size_t(nc);
    const size_t step = (total + detail::kPcaMaxPatches - 1) / detail::kPcaMaxPatches;
    std::vector<Eigen::VectorXd> patches;
    std::vector<double> variances;
    patches.reserve(total / step + 1);
    for (size_t idx = 0; idx < total; idx += step) {
        const int r = int(idx / size_t(nc)), c = int(idx % size_t(nc));
        Eigen::VectorXd p(kPcaDim);
        for (int a = 0; a < kPcaPatch; ++a)
            for (int b = 0; b < kPcaPatch; ++b)
                p(a * kPcaPatch + b) = double(x(r + a, c + b));
        const double mu = p.mean();
        variances.push_back((p.array() - mu).square().sum() / double(kPcaDim - 1));
        patches.push_back(std::move(p));
    }
    const size_t n = patches.size();

    // start from the lowest-variance tail
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return variances[a] < variances[b]; });
    std::vector<size_t> sel(order.begin(),
                            order.begin() + ptrdiff_t(std::max(
                                detail::kPcaMinSelected,
                                size_t(double(n) * detail::kPcaTailFraction))));
    if (sel.size() > n) sel.resize(n);

    double sigma2 = 0.0;
    for (int it = 0; it < detail::kPcaIters; ++it) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(kPcaDim);
        for (size_t i : sel) mu += patches[i];
        mu /= double(sel.size());
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kPcaDim, kPcaDim);
        for (size_t i : sel) {
            const Eigen::VectorXd d = patches[i] - mu;
            cov.noalias() += d * d.transpose();
        }
        cov /= double(sel.size() - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
        const double lambda_min = std::max(0.0, eig.eigenvalues()(0));

        // finite-sample bias: the smallest noise eigenvalue sits at the
        // Marchenko-Pastur lower edge sigma^2 (1 - sqrt(d/n))^2, shifted up
        // by the Tracy-Widom mean fluctuation (~1.21 at this scaling)
        const double ns = double(sel.size());
        const double edge_x = std::sqrt(double(kPcaDim) / ns);
        const double edge = (1.0 - edge_x) * (1.0 - edge_x);
        const double tw_shift = 1.21 * std::pow(ns, -2.0 / 3.0) *
                                std::pow(1.0 - edge_x, 4.0 / 3.0) / std::cbrt(edge_x);
        sigma2 = lambda_min / (edge + tw_shift);

        std::vector<size_t> next;
        for (size_t i = 0; i < n; ++i)
            if (variances[i] <= detail::kPcaVarFactor * sigma2) next.push_back(i);
        if (next.size() < detail::kPcaMinSelected) {
            if (used_fallback) *used_fallback = true;
            return estimate_mad(x);
        }
        if (next == sel) break;
        sel = std::move(next);
    }
    return T(std::sqrt(sigma2));
}

// Donoho's universal threshold sigma * sqrt(2 log n).
template <typename T>
T universal_threshold(T sigma, size_t n) {
    if (sigma < T(0)) throw contract_error("universal_threshold: sigma must be >= 0");
    if (n < 2) throw contract_error("universal_threshold: n must be >= 2");
    return sigma * T(std::sqrt(2.0 * std::log(double(n))));
}

}  // namespace cdl
