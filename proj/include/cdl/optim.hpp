#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cdl/grad.hpp"
#include "cdl/model.hpp"
#include "cdl/ops.hpp"

// Adam with bias correction, followed by projection back onto the
// constraint set (unit-ball filters, nonnegative thresholds) after every
// step.

namespace cdl {

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    void validate() const {
        if (!(lr > T(0))) throw contract_error("AdamConfig: lr must be > 0");
        if (beta1 < T(0) || beta1 >= T(1) || beta2 < T(0) || beta2 >= T(1))
            throw contract_error("AdamConfig: betas must lie in [0, 1)");
        if (!(eps > T(0))) throw contract_error("AdamConfig: eps must be > 0");
    }
};

template <typename T>
struct OptimizerState {
    ModelParams<T> m;  // first moment
    ModelParams<T> v;  // second moment
    int64_t step = 0;

    static OptimizerState init(const ModelParams<T>& p) {
        return OptimizerState{zero_like(p), zero_like(p), 0};
    }
};

namespace detail {

template <typename T>
std::vector<std::vector<T>*> array_slots(ModelParams<T>& p) {
    std::vector<std::vector<T>*> slots;
    p.for_each_array([&](const std::string&, std::vector<T>& v) { slots.push_back(&v); });
    return slots;
}

template <typename T>
std::vector<const std::vector<T>*> array_slots(const ModelParams<T>& p) {
    std::vector<const std::vector<T>*> slots;
    p.for_each_array([&](const std::string&, const std::vector<T>& v) { slots.push_back(&v); });
    return slots;
}

}  // namespace detail

template <typename T>
void adam_step(ModelParams<T>& p, const ModelParams<T>& grad, OptimizerState<T>& st,
               const AdamConfig<T>& cfg) {
    cfg.validate();
    auto ps = detail::array_slots(p);
    auto gs = detail::array_slots(grad);
    auto ms = detail::array_slots(st.m);
    auto vs = detail::array_slots(st.v);
    if (ps.size() != gs.size() || ps.size() != ms.size() || ps.size() != vs.size())
        throw contract_error("adam_step: parameter/state structure mismatch");

    st.step += 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, T(st.step));
    const T bc2 = T(1) - std::pow(cfg.beta2, T(st.step));
    for (size_t s = 0; s < ps.size(); ++s) {
        std::vector<T>& w = *ps[s];
        const std::vector<T>& g = *gs[s];
        std::vector<T>& m = *ms[s];
        std::vector<T>& v = *vs[s];
        if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size())
            throw contract_error("adam_step: array size mismatch");
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
            w[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    }
}

// Nearest feasible point: each filter of every bank inside the unit ball,
// thresholds clamped to be nonnegative.
template <typename T>
void project_constraints(ModelParams<T>& p) {
    for (auto& bank : p.A) bank = project_unit_ball(bank);
    for (auto& bank : p.B) bank = project_unit_ball(bank);
    p.D = project_unit_ball(p.D);
    for (auto& row : p.thr)
        for (T& t : row)
            if (t < T(0)) t = T(0);
}

}  // namespace cdl
