#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cdl/core.hpp"
#include "cdl/ops.hpp"

// Classical sparse coding and dictionary learning: iterative
// soft-thresholding for the convolutional LASSO and an alternating
// sparse-code / projected-gradient dictionary update. These are the
// reference solvers the unrolled network is validated against.

namespace cdl {

template <typename T>
struct LassoConfig {
    T lambda = T(0.1);     // l1 penalty
    T step_size = T(1);    // eta; constant unless a schedule is given
    std::vector<T> step_schedule;  // optional per-iteration eta, last entry repeats
    int max_iters = 100;
    T tol = T(1e-6);       // relative iterate-change stopping criterion

    void validate() const {
        if (lambda < T(0)) throw contract_error("LassoConfig: lambda must be >= 0");
        if (!(step_size > T(0))) throw contract_error("LassoConfig: step_size must be > 0");
        if (max_iters < 1) throw contract_error("LassoConfig: max_iters must be >= 1");
        if (!(tol > T(0))) throw contract_error("LassoConfig: tol must be > 0");
    }
};

template <typename T>
struct IstaResult {
    CoeffMap<T> z;
    int iters = 0;
    bool step_size_warning = false;  // step exceeded 1 / ||D Delta_s||^2
    std::vector<T> objective;        // LASSO objective at z^0, z^1, ...
};

// 0.5 ||Dz - y||^2 + lambda ||z||_1
template <typename T>
T lasso_objective(const CoeffMap<T>& z, const Image<T>& y, const FilterBank<T>& dict, T lambda) {
    if (lambda < T(0)) throw contract_error("lasso_objective: lambda must be >= 0");
    Image<T> recon = conv_synthesis(z, dict);
    if (recon.height != y.height || recon.width != y.width)
        throw contract_error("lasso_objective: reconstruction dims do not match signal");
    double fid = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double r = double(recon.data[i]) - double(y.data[i]);
        fid += r * r;
    }
    double l1 = 0.0;
    for (const T& v : z.data) l1 += std::abs(double(v));
    return T(0.5 * fid + double(lambda) * l1);
}

// ISTA from z = 0:  z <- ST(z - eta D^T (Dz - y), eta lambda).
// The objective is non-increasing whenever eta <= 1/||D Delta_s||^2; a
// larger step only raises a warning flag.
template <typename T>
IstaResult<T> ista(const Image<T>& y, const FilterBank<T>& dict, const LassoConfig<T>& cfg) {
    cfg.validate();
    detail::require_stride_compat(y.height, y.width, dict.stride, "ista");

    IstaResult<T> res;
    const T op_norm = spectral_norm(dict, 50, T(1e-6), y.height, y.width);
    const double step_bound = op_norm > T(0) ? 1.0 / (double(op_norm) * double(op_norm)) : 1e300;
    res.step_size_warning = double(cfg.step_size) > step_bound * (1.0 + 1e-9);

    CoeffMap<T> z(dict.num_filters, y.height / dict.stride, y.width / dict.stride);
    res.objective.push_back(lasso_objective(z, y, dict, cfg.lambda));

    auto eta_at = [&](int k) -> T {
        if (cfg.step_schedule.empty()) return cfg.step_size;
        const size_t idx = std::min(size_t(k), cfg.step_schedule.size() - 1);
        return cfg.step_schedule[idx];
    };

    for (int k = 0; k < cfg.max_iters; ++k) {
        const T eta = eta_at(k);
        Image<T> resid = conv_synthesis(z, dict);
        for (size_t i = 0; i < resid.size(); ++i) resid.data[i] -= y.data[i];
        CoeffMap<T> grad = conv_analysis(resid, dict);

        CoeffMap<T> next = z;
        for (size_t i = 0; i < next.size(); ++i) next.data[i] -= eta * grad.data[i];
        next = soft_threshold(next, eta * cfg.lambda);
        if (!all_finite(next.data))
            throw numeric_error("ista: non-finite iterate at iteration " + std::to_string(k));

        double delta = 0.0, base = 0.0;
        for (size_t i = 0; i < z.size(); ++i) {
            const double d = double(next.data[i]) - double(z.data[i]);
            delta += d * d;
            base += double(z.data[i]) * double(z.data[i]);
        }
        z = std::move(next);
        res.iters = k + 1;
        res.objective.push_back(lasso_objective(z, y, dict, cfg.lambda));
        if (std::sqrt(delta) <= double(cfg.tol) * std::max(std::sqrt(base), 1e-30)) break;
    }
    res.z = std::move(z);
    return res;
}

template <typename T>
struct DictLearnResult {
    FilterBank<T> dict;
    std::vector<T> objective;  // summed LASSO objective per outer iteration
};

// Standard-normal filters scaled to unit spectral norm; feasible by
// construction (each column norm is bounded by the operator norm).
template <typename T>
FilterBank<T> init_dictionary(int num_filters, int filter_size, int stride, uint64_t seed) {
    FilterBank<T> dict(num_filters, filter_size, stride);
    Rng rng(seed);
    for (T& w : dict.weights) w = T(rng.normal());
    const T norm = spectral_norm(dict);
    if (norm > T(0))
        for (T& w : dict.weights) w /= norm;
    return project_unit_ball(dict);
}

// Alternating minimization: full ISTA solves with the dictionary fixed,
// then one projected gradient step on 0.5 sum_i ||D z_i - y_i||^2.
template <typename T>
DictLearnResult<T> dict_learn(const std::vector<Image<T>>& dataset, const LassoConfig<T>& cfg,
                              FilterBank<T> dict, int outer_iters, T dict_lr,
                              const std::function<void(int, const FilterBank<T>&)>& on_iter = {}) {
    if (dataset.empty()) throw contract_error("dict_learn: dataset must be non-empty");
    if (outer_iters < 0) throw contract_error("dict_learn: outer_iters must be >= 0");
    if (!(dict_lr > T(0))) throw contract_error("dict_learn: dict_lr must be > 0");

    DictLearnResult<T> res;
    for (int outer = 0; outer < outer_iters; ++outer) {
        std::vector<CoeffMap<T>> codes;
        codes.reserve(dataset.size());
        double obj = 0.0;
        for (const Image<T>& y : dataset) {
            IstaResult<T> fit = ista(y, dict, cfg);
            obj += double(fit.objective.back());
            codes.push_back(std::move(fit.z));
        }
        if (!std::isfinite(obj))
            throw numeric_error("dict_learn: objective diverged at outer iteration " +
                                std::to_string(outer));
        res.objective.push_back(T(obj));

        FilterBank<T> grad(dict.num_filters, dict.filter_size, dict.stride);
        for (size_t i = 0; i < dataset.size(); ++i) {
            Image<T> resid = conv_synthesis(codes[i], dict);
            for (size_t k = 0; k < resid.size(); ++k) resid.data[k] -= dataset[i].data[k];
            FilterBank<T> g = conv_weight_grad(codes[i], resid, dict.filter_size, dict.stride);
            for (size_t k = 0; k < grad.weights.size(); ++k) grad.weights[k] += g.weights[k];
        }
        for (size_t k = 0; k < dict.weights.size(); ++k)
            dict.weights[k] -= dict_lr * grad.weights[k];
        dict = project_unit_ball(dict);
        if (on_iter) on_iter(outer, dict);
    }
    res.dict = std::move(dict);
    return res;
}

// Convenience overload seeding the dictionary internally.
template <typename T>
DictLearnResult<T> dict_learn(const std::vector<Image<T>>& dataset, const LassoConfig<T>& cfg,
                              int num_filters, int filter_size, int stride, int outer_iters,
                              T dict_lr, uint64_t seed) {
    return dict_learn(dataset, cfg, init_dictionary<T>(num_filters, filter_size, stride, seed),
                      outer_iters, dict_lr);
}

}  // namespace cdl
