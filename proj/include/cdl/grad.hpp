#pragma once

#include <cmath>
#include <vector>

#include "cdl/core.hpp"
#include "cdl/model.hpp"
#include "cdl/ops.hpp"

// Reverse-mode gradients through the unrolled network. The soft-threshold
// derivative is taken as 0 on |u| <= tau (the subgradient choice made by
// the zero branch) and 1 elsewhere.

namespace cdl {

// Sum of squared error over pixels; training averages this over a batch.
template <typename T>
T sample_loss(const Image<T>& xhat, const Image<T>& x) {
    if (xhat.height != x.height || xhat.width != x.width)
        throw contract_error("sample_loss: shape mismatch");
    T acc = T(0);
    for (size_t i = 0; i < x.size(); ++i) {
        const T r = xhat.data[i] - x.data[i];
        acc += r * r;
    }
    return acc;
}

template <typename T>
ModelParams<T> zero_like(const ModelParams<T>& p) {
    ModelParams<T> z;
    z.A.reserve(p.A.size());
    z.B.reserve(p.B.size());
    for (const auto& b : p.A) z.A.emplace_back(b.num_filters, b.filter_size, b.stride);
    for (const auto& b : p.B) z.B.emplace_back(b.num_filters, b.filter_size, b.stride);
    z.D = FilterBank<T>(p.D.num_filters, p.D.filter_size, p.D.stride);
    for (const auto& row : p.thr) z.thr.emplace_back(row.size(), T(0));
    return z;
}

// Backpropagates d(sum squared error)/d(params) for one sample, adding into
// grad. The tape must come from forward_tape on the same (p, cfg, y, sigma).
template <typename T>
void backward(const ModelParams<T>& p, const ModelConfig& cfg, const Image<T>& y,
              const Image<T>& x, const ForwardTape<T>& tape, T sigma, ModelParams<T>& grad) {
    validate_params(p, cfg);
    validate_params(grad, cfg);
    const int K = cfg.num_layers;
    if (int(tape.post.size()) != K) throw contract_error("backward: tape depth mismatch");
    if (tape.recon.height != x.height || tape.recon.width != x.width)
        throw contract_error("backward: target shape mismatch");
    const auto taus = thresholds_at(p, cfg, sigma);

    // g_xhat = 2 (xhat - x)
    Image<T> g_img(x.height, x.width);
    for (size_t i = 0; i < x.size(); ++i)
        g_img.data[i] = T(2) * (tape.recon.data[i] - x.data[i]);

    {
        FilterBank<T> gD =
            conv_weight_grad(tape.post.back(), g_img, cfg.filter_size, cfg.stride);
        for (size_t i = 0; i < gD.weights.size(); ++i) grad.D.weights[i] += gD.weights[i];
    }
    CoeffMap<T> g_z = conv_analysis(g_img, p.D);

    for (int k = K - 1; k >= 0; --k) {
        const CoeffMap<T>& u = tape.pre[size_t(k)];
        const std::vector<T>& tau = taus[size_t(k)];
        // g_u = 1{|u| > tau} * g_z; threshold grad collects -sign(u) on the
        // same active set
        CoeffMap<T> g_u(g_z.channels, g_z.height, g_z.width);
        const size_t plane = g_u.plane();
        for (int j = 0; j < g_u.channels; ++j) {
            const T* uj = u.channel(j);
            const T* gj = g_z.channel(j);
            T* out = g_u.channel(j);
            T gtau = T(0);
            for (size_t i = 0; i < plane; ++i) {
                if (std::abs(uj[i]) > tau[size_t(j)]) {
                    out[i] = gj[i];
                    gtau -= (uj[i] > T(0) ? gj[i] : -gj[i]);
                }
            }
            grad.thr[size_t(k)][size_t(j)] += cfg.adaptive ? sigma * gtau : gtau;
        }

        // u^k = z^{k-1} - A^k^T r^k
        FilterBank<T> gA = conv_weight_grad(g_u, tape.resid[size_t(k)], cfg.filter_size,
                                            cfg.stride);
        for (size_t i = 0; i < gA.weights.size(); ++i)
            grad.A[size_t(k)].weights[i] -= gA.weights[i];

        if (k == 0) break;  // z^{-1} = 0: no B^0 or upstream gradient

        Image<T> g_r = conv_synthesis(g_u, p.A[size_t(k)]);
        for (T& v : g_r.data) v = -v;

        // r^k = B^k z^{k-1} - y
        const CoeffMap<T>& z_prev = tape.post[size_t(k - 1)];
        FilterBank<T> gB = conv_weight_grad(z_prev, g_r, cfg.filter_size, cfg.stride);
        for (size_t i = 0; i < gB.weights.size(); ++i)
            grad.B[size_t(k)].weights[i] += gB.weights[i];

        CoeffMap<T> back = conv_analysis(g_r, p.B[size_t(k)]);
        for (size_t i = 0; i < g_u.size(); ++i) g_z.data[i] = g_u.data[i] + back.data[i];
    }
}

// Forward + backward for one (noisy, clean) pair; returns the sample loss
// and accumulates gradients.
template <typename T>
T loss_and_gradient(const ModelParams<T>& p, const ModelConfig& cfg, const Image<T>& y,
                    const Image<T>& x, T sigma, ModelParams<T>& grad) {
    ForwardTape<T> tape = forward_tape(p, cfg, y, sigma);
    backward(p, cfg, y, x, tape, sigma, grad);
    return sample_loss(tape.recon, x);
}

}  // namespace cdl
