#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdl/core.hpp"
#include "cdl/ops.hpp"

// The unrolled denoising network: K soft-thresholding layers with untied
// analysis/update filter banks, a final synthesis dictionary, and either
// fixed thresholds or thresholds proportional to the noise level.

namespace cdl {

struct ModelConfig {
    int num_filters = 32;   // M, channels per layer
    int filter_size = 7;    // q, square kernels
    int stride = 1;         // s
    int num_layers = 20;    // K
    bool adaptive = false;  // thresholds scale with the noise level

    bool operator==(const ModelConfig&) const = default;

    static ModelConfig small_preset() { return ModelConfig{32, 7, 1, 20, false}; }
    static ModelConfig big_preset() { return ModelConfig{169, 7, 2, 30, false}; }

    void validate() const {
        if (num_filters < 1) throw contract_error("ModelConfig: num_filters must be >= 1");
        if (filter_size < 1) throw contract_error("ModelConfig: filter_size must be >= 1");
        if (stride < 1) throw contract_error("ModelConfig: stride must be >= 1");
        if (num_layers < 1) throw contract_error("ModelConfig: num_layers must be >= 1");
    }
};

// Learnable state. thr holds per-layer, per-channel threshold parameters:
// the effective threshold in adaptive mode is thr[k][j] * sigma.
template <typename T>
struct ModelParams {
    std::vector<FilterBank<T>> A;     // analysis banks, one per layer
    std::vector<FilterBank<T>> B;     // update (re-synthesis) banks, one per layer
    FilterBank<T> D;                  // output synthesis dictionary
    std::vector<std::vector<T>> thr;  // num_layers x num_filters

    bool operator==(const ModelParams&) const = default;

    int num_layers() const { return int(A.size()); }

    // Deterministic iteration over every learnable array; the order defines
    // the serialization layout and the optimizer slot mapping.
    template <typename F>
    void for_each_array(F&& f) {
        for (size_t k = 0; k < A.size(); ++k) f("A." + std::to_string(k), A[k].weights);
        for (size_t k = 0; k < B.size(); ++k) f("B." + std::to_string(k), B[k].weights);
        f(std::string("D"), D.weights);
        for (size_t k = 0; k < thr.size(); ++k) f("thr." + std::to_string(k), thr[k]);
    }
    template <typename F>
    void for_each_array(F&& f) const {
        for (size_t k = 0; k < A.size(); ++k) f("A." + std::to_string(k), A[k].weights);
        for (size_t k = 0; k < B.size(); ++k) f("B." + std::to_string(k), B[k].weights);
        f(std::string("D"), D.weights);
        for (size_t k = 0; k < thr.size(); ++k) f("thr." + std::to_string(k), thr[k]);
    }
};

template <typename T>
void validate_params(const ModelParams<T>& p, const ModelConfig& cfg) {
    cfg.validate();
    const size_t K = size_t(cfg.num_layers);
    if (p.A.size() != K || p.B.size() != K || p.thr.size() != K)
        throw contract_error("validate_params: layer count mismatch");
    auto check_bank = [&](const FilterBank<T>& b, const char* name) {
        if (b.num_filters != cfg.num_filters || b.filter_size != cfg.filter_size ||
            b.stride != cfg.stride)
            throw contract_error(std::string("validate_params: bank geometry mismatch in ") + name);
    };
    for (const auto& b : p.A) check_bank(b, "A");
    for (const auto& b : p.B) check_bank(b, "B");
    check_bank(p.D, "D");
    for (const auto& row : p.thr)
        if (row.size() != size_t(cfg.num_filters))
            throw contract_error("validate_params: threshold row size mismatch");
}

// All banks start as one spectrally-normalized Gaussian bank (so the first
// layer is a sane proximal step), thresholds at 1e-2. In adaptive mode the
// stored multiplier is chosen so the effective threshold equals 1e-2 at
// sigma_mid, the midpoint of the training noise range.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, uint64_t seed, T sigma_mid = T(0)) {
    cfg.validate();
    if (cfg.adaptive && !(sigma_mid > T(0)))
        throw contract_error("init_params: adaptive mode needs sigma_mid > 0");

    FilterBank<T> base(cfg.num_filters, cfg.filter_size, cfg.stride);
    Rng rng(seed);
    for (T& w : base.weights) w = T(rng.normal());
    const T norm = spectral_norm(base);
    if (norm > T(0))
        for (T& w : base.weights) w /= norm;

    ModelParams<T> p;
    p.A.assign(size_t(cfg.num_layers), base);
    p.B.assign(size_t(cfg.num_layers), base);
    p.D = base;
    const T thr0 = cfg.adaptive ? T(1e-2) / sigma_mid : T(1e-2);
    p.thr.assign(size_t(cfg.num_layers), std::vector<T>(size_t(cfg.num_filters), thr0));
    return p;
}

// Effective per-layer thresholds for a given noise level.
template <typename T>
std::vector<std::vector<T>> thresholds_at(const ModelParams<T>& p, const ModelConfig& cfg,
                                          T sigma) {
    if (cfg.adaptive && sigma < T(0))
        throw contract_error("thresholds_at: sigma must be >= 0 in adaptive mode");
    std::vector<std::vector<T>> taus = p.thr;
    if (cfg.adaptive)
        for (auto& row : taus)
            for (T& t : row) t *= sigma;
    return taus;
}

// Everything the backward pass needs: residuals r^k = B^k z^k - y (with
// r^0 = -y since z^0 = 0), pre-threshold activations u^k, and layer outputs
// z^k, plus the reconstruction.
template <typename T>
struct ForwardTape {
    std::vector<Image<T>> resid;
    std::vector<CoeffMap<T>> pre;
    std::vector<CoeffMap<T>> post;
    Image<T> recon;
};

template <typename T>
ForwardTape<T> forward_tape(const ModelParams<T>& p, const ModelConfig& cfg, const Image<T>& y,
                            T sigma = T(0)) {
    validate_params(p, cfg);
    detail::require_stride_compat(y.height, y.width, cfg.stride, "forward");
    if (!all_finite(y.data)) throw numeric_error("forward: non-finite input");

    const auto taus = thresholds_at(p, cfg, sigma);
    const int K = cfg.num_layers;
    ForwardTape<T> tape;
    tape.resid.reserve(size_t(K));
    tape.pre.reserve(size_t(K));
    tape.post.reserve(size_t(K));

    CoeffMap<T> z(cfg.num_filters, y.height / cfg.stride, y.width / cfg.stride);
    for (int k = 0; k < K; ++k) {
        Image<T> r(y.height, y.width);
        if (k == 0) {
            for (size_t i = 0; i < y.size(); ++i) r.data[i] = -y.data[i];
        } else {
            r = conv_synthesis(z, p.B[size_t(k)]);
            for (size_t i = 0; i < y.size(); ++i) r.data[i] -= y.data[i];
        }
        CoeffMap<T> step = conv_analysis(r, p.A[size_t(k)]);
        CoeffMap<T> u = z;
        for (size_t i = 0; i < u.size(); ++i) u.data[i] -= step.data[i];
        z = soft_threshold(u, taus[size_t(k)]);
        if (!all_finite(z.data))
            throw numeric_error("forward: non-finite activation at layer " + std::to_string(k));
        tape.resid.push_back(std::move(r));
        tape.pre.push_back(std::move(u));
        tape.post.push_back(z);
    }
    tape.recon = conv_synthesis(z, p.D);
    if (!all_finite(tape.recon.data)) throw numeric_error("forward: non-finite reconstruction");
    return tape;
}

template <typename T>
Image<T> forward(const ModelParams<T>& p, const ModelConfig& cfg, const Image<T>& y,
                 T sigma = T(0)) {
    return forward_tape(p, cfg, y, sigma).recon;
}

// Multiply-accumulate count for one forward pass at the given input size.
// Layer 0 skips its update convolution (z^0 = 0), so the network performs
// exactly 2K convolutions including the final synthesis.
inline uint64_t complexity_estimate(const ModelConfig& cfg, int height, int width) {
    cfg.validate();
    if (height < 1 || width < 1 || height % cfg.stride || width % cfg.stride)
        throw contract_error("complexity_estimate: dims must be positive multiples of stride");
    const uint64_t per_conv =
        conv_mac_count(height, width, cfg.num_filters, cfg.filter_size, cfg.stride);
    return 2 * uint64_t(cfg.num_layers) * per_conv;
}

// Mosaic of the filters for visual inspection: each tile min-max normalized
// to [0,1], tiles separated by a one-pixel 0.5 border.
template <typename T>
Image<T> render_filter_grid(const FilterBank<T>& bank) {
    const int q = bank.filter_size;
    int grid = 1;
    while (grid * grid < bank.num_filters) ++grid;
    const int rows = (bank.num_filters + grid - 1) / grid;
    Image<T> img(rows * q + (rows - 1), grid * q + (grid - 1));
    for (T& v : img.data) v = T(0.5);
    for (int j = 0; j < bank.num_filters; ++j) {
        const T* w = bank.filter(j);
        T lo = w[0], hi = w[0];
        for (int i = 1; i < q * q; ++i) {
            lo = std::min(lo, w[i]);
            hi = std::max(hi, w[i]);
        }
        const T scale = hi > lo ? T(1) / (hi - lo) : T(0);
        const int r0 = (j / grid) * (q + 1), c0 = (j % grid) * (q + 1);
        for (int a = 0; a < q; ++a)
            for (int b = 0; b < q; ++b)
                img(r0 + a, c0 + b) = hi > lo ? (w[a * q + b] - lo) * scale : T(0.5);
    }
    return img;
}

}  // namespace cdl
