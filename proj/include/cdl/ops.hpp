#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "cdl/core.hpp"

// Strided convolutional analysis/synthesis and the pointwise primitives
// built on them. Synthesis applies a bank W to a coefficient map after
// zero-filling by the stride (W @ Delta_s); analysis is the exact
// transpose of that linear map (Delta_s^T @ W^T), including the zero-pad
// "same" boundary handling. Both walk the identical set of (tap, pixel)
// index pairs, so <Wz, x> == <z, W^T x> up to rounding.
//
// Conventions:
//   - filters are q x q with center offset c = (q-1)/2
//   - image dims must be divisible by the stride (callers reflect-pad)
//   - coefficient grids are (H/s) x (W/s)

namespace cdl {

namespace detail {

template <typename T>
void require_finite(const std::vector<T>& v, const char* what) {
    if (!all_finite(v)) throw numeric_error(std::string(what) + ": non-finite input");
}

inline void require_stride_compat(int h, int w, int s, const char* what) {
    if (h % s != 0 || w % s != 0)
        throw contract_error(std::string(what) + ": image dims must be multiples of the stride");
}

// Valid tap interval [a0, a1) at grid position u: taps that land inside
// the image along one axis.
inline void tap_range(int u, int s, int c, int q, int n, int& a0, int& a1) {
    a0 = std::max(0, c - u * s);
    a1 = std::min(q, n - u * s + c);
}

// Valid grid interval [v0, v1) for tap b: grid positions whose tap lands
// inside an axis of length n with grid length n/s.
inline void grid_range(int b, int c, int s, int n, int& v0, int& v1) {
    v0 = std::max(0, (c - b + s - 1) / s);
    const int hi = n - 1 - b + c;
    v1 = hi < 0 ? 0 : std::min(n / s, hi / s + 1);
}

// Sum over grid positions of the per-position valid tap count, one axis.
inline long long tap_count_1d(int n, int q, int s) {
    const int c = (q - 1) / 2;
    long long total = 0;
    for (int u = 0; u < n / s; ++u) {
        int a0, a1;
        tap_range(u, s, c, q, n, a0, a1);
        total += std::max(0, a1 - a0);
    }
    return total;
}

// Stride-1 correlation stencil with the kernel size fixed at compile time:
// out[u][v] += sum_{a,b} w[a*Q+b] * x[u+a-c][v+b-c], zero-padded "same"
// boundaries. Interior columns run in 8-wide blocks so the tap loop turns
// into packed FMAs; borders and partial-support rows take the scalar path.
template <int Q, typename T>
void corr_s1(const T* x, int H, int W, const T* w, T* out) {
    constexpr int C = (Q - 1) / 2;
    for (int u = 0; u < H; ++u) {
        const int a0 = std::max(0, C - u), a1 = std::min(Q, H - u + C);
        T* orow = out + size_t(u) * W;
        const int il = std::min(C, W), ir = std::max(W - C, il);
        auto edge = [&](int v0, int v1) {
            for (int v = v0; v < v1; ++v) {
                const int b0 = std::max(0, C - v), b1 = std::min(Q, W - v + C);
                T acc = 0;
                for (int a = a0; a < a1; ++a) {
                    const T* xr = x + size_t(u + a - C) * W + v - C;
                    for (int b = b0; b < b1; ++b) acc += w[a * Q + b] * xr[b];
                }
                orow[v] += acc;
            }
        };
        edge(0, il);
        int v = il;
        if (a0 == 0 && a1 == Q) {
            for (; v + 8 <= ir; v += 8) {
                T acc[8] = {};
                for (int a = 0; a < Q; ++a) {
                    const T* xr = x + size_t(u + a - C) * W + v - C;
                    for (int b = 0; b < Q; ++b) {
                        const T wa = w[a * Q + b];
#pragma omp simd
                        for (int l = 0; l < 8; ++l) acc[l] += wa * xr[b + l];
                    }
                }
                for (int l = 0; l < 8; ++l) orow[v + l] += acc[l];
            }
        }
        for (; v < ir; ++v) {
            T acc = 0;
            for (int a = a0; a < a1; ++a) {
                const T* xr = x + size_t(u + a - C) * W + v - C;
                for (int b = 0; b < Q; ++b) acc += w[a * Q + b] * xr[b];
            }
            orow[v] += acc;
        }
        edge(ir, W);
    }
}

// Picks the specialized stencil for the common odd kernel sizes; returns
// false when the caller must fall back to the generic strided loops.
template <typename T>
bool corr_s1_dispatch(const T* x, int H, int W, int q, const T* w, T* out) {
    switch (q) {
        case 3: corr_s1<3>(x, H, W, w, out); return true;
        case 5: corr_s1<5>(x, H, W, w, out); return true;
        case 7: corr_s1<7>(x, H, W, w, out); return true;
        default: return false;
    }
}

}  // namespace detail

// Multiply-accumulate count of one analysis or synthesis application on an
// h x w image (the two directions touch the same index pairs).
inline long long conv_mac_count(int height, int width, int num_filters, int filter_size, int stride) {
    return (long long)num_filters * detail::tap_count_1d(height, filter_size, stride) *
           detail::tap_count_1d(width, filter_size, stride);
}

// W Delta_s z: zero-fill by the stride, then sum per-channel convolutions
// into a single image of dims (z.height*s, z.width*s).
template <typename T>
Image<T> conv_synthesis(const CoeffMap<T>& z, const FilterBank<T>& bank) {
    if (z.channels != bank.num_filters)
        throw contract_error("conv_synthesis: channel count does not match filter count");
    detail::require_finite(z.data, "conv_synthesis");
    detail::require_finite(bank.weights, "conv_synthesis");

    const int q = bank.filter_size, s = bank.stride, c = (q - 1) / 2;
    const int H = z.height * s, W = z.width * s;
    Image<T> out(H, W);
    if (s == 1 && q % 2 == 1) {
        // stride-1 synthesis is correlation with the flipped kernel
        std::vector<T> wf(size_t(q) * q);
        bool handled = true;
        for (int j = 0; j < z.channels && handled; ++j) {
            const T* w = bank.filter(j);
            for (size_t i = 0; i < wf.size(); ++i) wf[i] = w[wf.size() - 1 - i];
            handled = detail::corr_s1_dispatch(z.channel(j), H, W, q, wf.data(), out.data.data());
        }
        if (handled) return out;
        for (T& v : out.data) v = T(0);
    }
    for (int j = 0; j < z.channels; ++j) {
        const T* zc = z.channel(j);
        for (int u = 0; u < z.height; ++u) {
            const T* zrow = zc + size_t(u) * z.width;
            int a0, a1;
            detail::tap_range(u, s, c, q, H, a0, a1);
            for (int a = a0; a < a1; ++a) {
                T* orow = out.row(u * s + a - c);
                for (int b = 0; b < q; ++b) {
                    const T w = bank(j, a, b);
                    int v0, v1;
                    detail::grid_range(b, c, s, W, v0, v1);
                    const int off = b - c;
                    for (int v = v0; v < v1; ++v) orow[v * s + off] += w * zrow[v];
                }
            }
        }
    }
    return out;
}

// Delta_s^T W^T x: correlate with each filter and keep every s-th output.
// Exact adjoint of conv_synthesis.
template <typename T>
CoeffMap<T> conv_analysis(const Image<T>& x, const FilterBank<T>& bank) {
    detail::require_stride_compat(x.height, x.width, bank.stride, "conv_analysis");
    detail::require_finite(x.data, "conv_analysis");
    detail::require_finite(bank.weights, "conv_analysis");

    const int q = bank.filter_size, s = bank.stride, c = (q - 1) / 2;
    const int Hs = x.height / s, Ws = x.width / s;
    CoeffMap<T> out(bank.num_filters, Hs, Ws);
    if (s == 1 && q % 2 == 1) {
        bool handled = true;
        for (int j = 0; j < bank.num_filters && handled; ++j)
            handled = detail::corr_s1_dispatch(x.data.data(), x.height, x.width, q,
                                               bank.filter(j), out.channel(j));
        if (handled) return out;
    }
    for (int j = 0; j < bank.num_filters; ++j) {
        T* oc = out.channel(j);
        for (int u = 0; u < Hs; ++u) {
            T* orow = oc + size_t(u) * Ws;
            int a0, a1;
            detail::tap_range(u, s, c, q, x.height, a0, a1);
            for (int a = a0; a < a1; ++a) {
                const T* xrow = x.row(u * s + a - c);
                for (int b = 0; b < q; ++b) {
                    const T w = bank(j, a, b);
                    int v0, v1;
                    detail::grid_range(b, c, s, x.width, v0, v1);
                    const int off = b - c;
                    for (int v = v0; v < v1; ++v) orow[v] += w * xrow[v * s + off];
                }
            }
        }
    }
    return out;
}

// Gradient of <g, conv_synthesis(z, W)> with respect to the bank weights:
// grad[j][a][b] = sum_{u,v} z[j][u][v] * g[u*s+a-c][v*s+b-c].
// Equivalently the weight gradient of conv_analysis with (z, g) swapped
// roles (coefficient-domain factor, image-domain factor).
template <typename T>
FilterBank<T> conv_weight_grad(const CoeffMap<T>& z, const Image<T>& g, int filter_size, int stride) {
    if (g.height != z.height * stride || g.width != z.width * stride)
        throw contract_error("conv_weight_grad: image dims do not match grid * stride");
    detail::require_finite(z.data, "conv_weight_grad");
    detail::require_finite(g.data, "conv_weight_grad");

    const int q = filter_size, s = stride, c = (q - 1) / 2;
    FilterBank<T> grad(z.channels, q, s);
    for (int j = 0; j < z.channels; ++j) {
        const T* zc = z.channel(j);
        for (int u = 0; u < z.height; ++u) {
            const T* zrow = zc + size_t(u) * z.width;
            int a0, a1;
            detail::tap_range(u, s, c, q, g.height, a0, a1);
            for (int a = a0; a < a1; ++a) {
                const T* grow = g.row(u * s + a - c);
                for (int b = 0; b < q; ++b) {
                    int v0, v1;
                    detail::grid_range(b, c, s, g.width, v0, v1);
                    const int off = b - c;
                    T acc = 0;
                    int v = v0;
                    if (s == 1) {
                        // split the reduction into fixed lanes so it packs
                        T lane[8] = {};
                        for (; v + 8 <= v1; v += 8) {
#pragma omp simd
                            for (int l = 0; l < 8; ++l) lane[l] += zrow[v + l] * grow[v + l + off];
                        }
                        acc = ((lane[0] + lane[4]) + (lane[2] + lane[6])) +
                              ((lane[1] + lane[5]) + (lane[3] + lane[7]));
                    }
                    for (; v < v1; ++v) acc += zrow[v] * grow[v * s + off];
                    grad(j, a, b) += acc;
                }
            }
        }
    }
    return grad;
}

// Delta_s: place grid entries at stride multiples of an s-times larger grid.
template <typename T>
CoeffMap<T> zero_fill(const CoeffMap<T>& z, int s) {
    if (s <= 0) throw contract_error("zero_fill: stride must be positive");
    CoeffMap<T> out(z.channels, z.height * s, z.width * s);
    for (int j = 0; j < z.channels; ++j)
        for (int u = 0; u < z.height; ++u)
            for (int v = 0; v < z.width; ++v) out(j, u * s, v * s) = z(j, u, v);
    return out;
}

// Delta_s^T: keep entries at stride multiples. Left inverse of zero_fill.
template <typename T>
CoeffMap<T> subsample(const CoeffMap<T>& z, int s) {
    if (s <= 0) throw contract_error("subsample: stride must be positive");
    if (z.height % s != 0 || z.width % s != 0)
        throw contract_error("subsample: grid dims must be multiples of the stride");
    CoeffMap<T> out(z.channels, z.height / s, z.width / s);
    for (int j = 0; j < z.channels; ++j)
        for (int u = 0; u < out.height; ++u)
            for (int v = 0; v < out.width; ++v) out(j, u, v) = z(j, u * s, v * s);
    return out;
}

// Element-wise soft-thresholding with a per-channel threshold vector.
template <typename T>
CoeffMap<T> soft_threshold(const CoeffMap<T>& z, const std::vector<T>& tau) {
    if (int(tau.size()) != z.channels)
        throw contract_error("soft_threshold: threshold vector length must equal channel count");
    for (T t : tau)
        if (!(t >= T(0))) throw contract_error("soft_threshold: negative threshold");

    CoeffMap<T> out(z.channels, z.height, z.width);
    for (int j = 0; j < z.channels; ++j) {
        const T t = tau[j];
        const T* src = z.channel(j);
        T* dst = out.channel(j);
        const size_t n = z.plane();
        for (size_t i = 0; i < n; ++i) {
            const T v = src[i];
            const T m = std::abs(v) - t;
            dst[i] = m > T(0) ? (v > T(0) ? m : -m) : T(0);
        }
    }
    return out;
}

// Uniform threshold across channels.
template <typename T>
CoeffMap<T> soft_threshold(const CoeffMap<T>& z, T tau) {
    return soft_threshold(z, std::vector<T>(size_t(z.channels), tau));
}

template <typename T>
T filter_norm(const FilterBank<T>& bank, int j) {
    double acc = 0.0;
    const T* f = bank.filter(j);
    for (size_t i = 0; i < bank.taps(); ++i) acc += double(f[i]) * double(f[i]);
    return T(std::sqrt(acc));
}

// Euclidean projection onto the per-filter unit ball: filters with
// ||d||_2 > 1 are rescaled to unit norm, the rest pass through.
template <typename T>
FilterBank<T> project_unit_ball(const FilterBank<T>& bank) {
    detail::require_finite(bank.weights, "project_unit_ball");
    FilterBank<T> out = bank;
    for (int j = 0; j < bank.num_filters; ++j) {
        const T norm = filter_norm(out, j);
        if (norm > T(1)) {
            T* f = out.filter(j);
            const T inv = T(1) / norm;
            for (size_t i = 0; i < out.taps(); ++i) f[i] *= inv;
        }
    }
    return out;
}

namespace detail {

template <typename T>
double norm2(const std::vector<T>& v) {
    double acc = 0.0;
    for (const T& x : v) acc += double(x) * double(x);
    return std::sqrt(acc);
}

inline int round_up(int n, int mult) { return ((n + mult - 1) / mult) * mult; }

}  // namespace detail

// Largest singular value of the synthesis operator W Delta_s, estimated by
// power iteration on its Gram map z -> analysis(synthesis(z)). The domain
// dims default to a canonical size large enough to see the full filter
// support; pass explicit dims to match an externally materialized operator.
// Deterministic: the start vector comes from a fixed seed.
template <typename T>
T spectral_norm(const FilterBank<T>& bank, int iters = 50, T tol = T(1e-6), int height = 0,
                int width = 0) {
    if (iters < 1) throw contract_error("spectral_norm: iters must be >= 1");
    if (height == 0) height = detail::round_up(std::max(16, 2 * bank.filter_size), bank.stride);
    if (width == 0) width = height;
    detail::require_stride_compat(height, width, bank.stride, "spectral_norm");

    CoeffMap<T> z(bank.num_filters, height / bank.stride, width / bank.stride);
    Rng rng(0x5eed5eedull);
    for (T& v : z.data) v = T(rng.normal());

    T sigma = T(0);
    for (int it = 0; it < iters; ++it) {
        const double nz = detail::norm2(z.data);
        if (nz == 0.0) return T(0);
        for (T& v : z.data) v = T(double(v) / nz);
        CoeffMap<T> next = conv_analysis(conv_synthesis(z, bank), bank);
        const double lambda = detail::norm2(next.data);  // ||A^T A z|| with ||z|| = 1
        const T est = T(std::sqrt(lambda));
        if (it > 0 && std::abs(double(est) - double(sigma)) <= double(tol) * std::max(1.0, double(est))) {
            return est;
        }
        sigma = est;
        z = std::move(next);
    }
    return sigma;
}

}  // namespace cdl
