#pragma once

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cdl/core.hpp"
#include "cdl/metrics.hpp"
#include "cdl/model.hpp"
#include "cdl/noise.hpp"

// Inference plumbing: the single-image denoising pipeline (pad, center,
// estimate, run, restore) and the benchmark runner with counter-based noise
// so reports are reproducible and order-independent.

namespace cdl {

enum class SigmaMode {
    none,      // fixed-threshold models only
    numeric,   // caller supplies sigma
    auto_mad,  // wavelet estimate
    auto_pca,  // patch-PCA estimate
};

template <typename T>
struct DenoiseResult {
    Image<T> out;         // same dims as the input, not clamped
    T sigma_used = T(0);  // 0 under SigmaMode::none
    bool pca_fallback = false;
};

// Input is a [0,1]-scaled noisy image of any size. Order matters: pad to a
// stride multiple, subtract the mean, estimate sigma on what the network will
// actually see, run, add the mean back, crop to the original frame.
template <typename T>
DenoiseResult<T> denoise_image(const ModelParams<T>& p, const ModelConfig& cfg, const Image<T>& y,
                               SigmaMode mode, T sigma = T(0)) {
    if (cfg.adaptive && mode == SigmaMode::none)
        throw contract_error("denoise_image: adaptive model needs a noise level (numeric or auto)");
    if (mode == SigmaMode::numeric && !(sigma >= T(0)))
        throw contract_error("denoise_image: numeric sigma must be >= 0");

    Image<T> centered = reflect_pad_to_multiple(y, cfg.stride);
    const T mu = mean_of(centered);
    add_scalar(centered, -mu);

    DenoiseResult<T> res;
    switch (mode) {
        case SigmaMode::none: res.sigma_used = T(0); break;
        case SigmaMode::numeric: res.sigma_used = sigma; break;
        case SigmaMode::auto_mad: res.sigma_used = estimate_mad(centered); break;
        case SigmaMode::auto_pca:
            res.sigma_used = estimate_pca(centered, &res.pca_fallback);
            break;
    }

    Image<T> recon = forward(p, cfg, centered, res.sigma_used);
    add_scalar(recon, mu);
    res.out = crop(recon, y.height, y.width);
    return res;
}

enum class EvalEstimator { ground_truth, mad, pca };

inline const char* to_string(EvalEstimator e) {
    switch (e) {
        case EvalEstimator::ground_truth: return "gt";
        case EvalEstimator::mad: return "mad";
        case EvalEstimator::pca: return "pca";
    }
    return "?";
}

struct EvalRecord {
    std::string image;
    double sigma = 0;        // test noise level, 8-bit scale
    double psnr_noisy = 0;   // dB, raw noisy input vs clean
    double psnr_out = 0;     // dB, clamped output vs clean
    double sigma_used = 0;   // what the network was told, 8-bit scale
    double elapsed_ms = 0;   // excluded from the machine-readable report
};

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

// The noise realization depends only on (seed, image name, sigma), never on
// evaluation order or on the model, so runs pair up across checkpoints.
template <typename T>
Image<T> eval_noisy_version(const Image<T>& clean, const std::string& name, double sigma8,
                            uint64_t seed) {
    Rng rng(mix_seed(seed, detail::fnv1a(name), uint64_t(std::llround(sigma8 * 4096.0))));
    Image<T> y = clean;
    const T s = T(sigma8 / 255.0);
    for (auto& v : y.data) v += s * T(rng.normal());
    return y;
}

template <typename T>
std::vector<EvalRecord> run_eval(const ModelParams<T>& p, const ModelConfig& cfg,
                                 const std::vector<std::pair<std::string, Image<T>>>& dataset,
                                 const std::vector<double>& sigmas8, EvalEstimator est,
                                 uint64_t seed) {
    if (dataset.empty()) throw contract_error("run_eval: dataset is empty");
    std::vector<EvalRecord> records;
    for (const double s8 : sigmas8) {
        if (!(s8 > 0)) throw contract_error("run_eval: sigma values must be > 0");
        for (const auto& [name, clean] : dataset) {
            const Image<T> y = eval_noisy_version(clean, name, s8, seed);
            const auto t0 = std::chrono::steady_clock::now();
            DenoiseResult<T> dn;
            switch (est) {
                case EvalEstimator::ground_truth:
                    dn = denoise_image(p, cfg, y, SigmaMode::numeric, T(s8 / 255.0));
                    break;
                case EvalEstimator::mad:
                    dn = denoise_image(p, cfg, y, SigmaMode::auto_mad);
                    break;
                case EvalEstimator::pca:
                    dn = denoise_image(p, cfg, y, SigmaMode::auto_pca);
                    break;
            }
            const auto t1 = std::chrono::steady_clock::now();
            EvalRecord r;
            r.image = name;
            r.sigma = s8;
            r.psnr_noisy = psnr(clean, y);
            r.psnr_out = psnr(clean, clamp01(dn.out));
            r.sigma_used = double(dn.sigma_used) * 255.0;
            r.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            records.push_back(std::move(r));
        }
    }
    return records;
}

inline double mean_psnr(const std::vector<EvalRecord>& records, double sigma8) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : records)
        if (r.sigma == sigma8) {
            acc += r.psnr_out;
            ++n;
        }
    if (!n) throw contract_error("mean_psnr: no records at that sigma");
    return acc / n;
}

// Machine-readable report: one record per line, comma-separated, header row.
// Timing stays out so reruns with the same seed are byte-identical.
inline std::string format_report(const std::vector<EvalRecord>& records,
                                 const std::string& model_id, EvalEstimator est) {
    std::ostringstream out;
    out << "model,estimator,image,sigma,psnr_noisy,psnr_denoised,sigma_used\n";
    out << std::setprecision(6) << std::fixed;
    for (const auto& r : records)
        out << model_id << ',' << to_string(est) << ',' << r.image << ',' << r.sigma << ','
            << r.psnr_noisy << ',' << r.psnr_out << ',' << r.sigma_used << '\n';
    return out.str();
}

}  // namespace cdl
