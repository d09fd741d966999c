#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdl/core.hpp"

// Deterministic synthetic grayscale scenes: smooth gradients, piecewise
// constant shapes with occasional soft edges, and low-frequency oriented
// textures, quantized to 8-bit levels like camera data. Used as the test
// and benchmark corpus.

namespace cdl {

template <typename T>
Image<T> synth_scene(int height, int width, uint64_t seed) {
    if (height < 1 || width < 1) throw contract_error("synth_scene: dims must be positive");
    Rng rng(seed);
    Image<T> img(height, width);

    // oriented linear gradient background
    const double theta = rng.uniform(0.0, 6.28318530717958648);
    const double gx = std::cos(theta), gy = std::sin(theta);
    const double base = rng.uniform(0.25, 0.75);
    const double slope = rng.uniform(0.05, 0.3);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const double t = (gy * r / height + gx * c / width);
            img(r, c) = T(base + slope * (t - 0.5));
        }

    // filled shapes: rectangles and discs, some with soft borders
    const int shapes = 3 + int(rng.uniform_int(6));
    for (int sidx = 0; sidx < shapes; ++sidx) {
        const double level = rng.uniform(0.1, 0.9);
        const double soft = rng.uniform() < 0.3 ? rng.uniform(1.0, 3.0) : 0.0;
        if (rng.uniform_int(2)) {
            const int h = 1 + int(rng.uniform_int(uint64_t(std::max(1, height / 2))));
            const int w = 1 + int(rng.uniform_int(uint64_t(std::max(1, width / 2))));
            const int r0 = int(rng.uniform_int(uint64_t(std::max(1, height - h))));
            const int c0 = int(rng.uniform_int(uint64_t(std::max(1, width - w))));
            for (int r = r0; r < std::min(height, r0 + h); ++r)
                for (int c = c0; c < std::min(width, c0 + w); ++c) {
                    if (soft > 0.0) {
                        const double dr = std::min(r - r0, r0 + h - 1 - r);
                        const double dc = std::min(c - c0, c0 + w - 1 - c);
                        const double a = std::min(1.0, std::min(dr, dc) / soft + 0.2);
                        img(r, c) = T((1 - a) * double(img(r, c)) + a * level);
                    } else {
                        img(r, c) = T(level);
                    }
                }
        } else {
            const double rad = rng.uniform(0.05, 0.25) * std::min(height, width);
            const double cy = rng.uniform(0.0, double(height));
            const double cx = rng.uniform(0.0, double(width));
            for (int r = std::max(0, int(cy - rad - 3)); r < std::min(height, int(cy + rad + 3)); ++r)
                for (int c = std::max(0, int(cx - rad - 3)); c < std::min(width, int(cx + rad + 3)); ++c) {
                    const double dist = std::hypot(r - cy, c - cx);
                    if (dist < rad) {
                        const double a = soft > 0.0 ? std::min(1.0, (rad - dist) / soft) : 1.0;
                        img(r, c) = T((1 - a) * double(img(r, c)) + a * level);
                    }
                }
        }
    }

    // oriented sinusoid textures blended into horizontal bands: one coarse,
    // one finer grating like fabric or foliage
    const int textures = 1 + int(rng.uniform_int(2));
    for (int tidx = 0; tidx < textures; ++tidx) {
        const double phi = rng.uniform(0.0, 6.28318530717958648);
        const bool fine = tidx > 0 || rng.uniform() < 0.4;
        // fine gratings run a few pixels per cycle regardless of image size
        const double cycles =
            fine ? rng.uniform(0.15, 0.3) * std::min(width, height) : rng.uniform(2.0, 6.0);
        const double amp = fine ? rng.uniform(0.02, 0.06) : rng.uniform(0.03, 0.1);
        const double band0 = rng.uniform(0.0, 0.6);
        const double band1 = band0 + rng.uniform(0.25, 0.4);
        const double kx = std::cos(phi) * cycles * 6.28318530717958648 / width;
        const double ky = std::sin(phi) * cycles * 6.28318530717958648 / height;
        for (int r = int(band0 * height); r < std::min(height, int(band1 * height)); ++r)
            for (int c = 0; c < width; ++c)
                img(r, c) = T(double(img(r, c)) + amp * std::sin(ky * r + kx * c));
    }

    // quantize to 8-bit levels
    for (T& v : img.data) {
        double q = std::round(std::clamp(double(v), 0.0, 1.0) * 255.0) / 255.0;
        v = T(q);
    }
    return img;
}

template <typename T>
std::vector<Image<T>> synth_corpus(int count, int height, int width, uint64_t seed) {
    std::vector<Image<T>> out;
    out.reserve(size_t(count));
    for (int i = 0; i < count; ++i)
        out.push_back(synth_scene<T>(height, width, mix_seed(seed, uint64_t(i))));
    return out;
}

// Structure-light variant: gradient plus large soft discs only. Useful when
// a test needs signal content that provably stays out of the fine scales.
template <typename T>
Image<T> synth_smooth_scene(int height, int width, uint64_t seed) {
    if (height < 1 || width < 1) throw contract_error("synth_smooth_scene: dims must be positive");
    Rng rng(seed);
    Image<T> img(height, width);
    const double theta = rng.uniform(0.0, 6.28318530717958648);
    const double gx = std::cos(theta), gy = std::sin(theta);
    const double base = rng.uniform(0.3, 0.7);
    const double slope = rng.uniform(0.05, 0.25);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            img(r, c) = T(base + slope * (gy * r / height + gx * c / width - 0.5));
    const int discs = 1 + int(rng.uniform_int(2));
    for (int i = 0; i < discs; ++i) {
        const double level = rng.uniform(0.2, 0.8);
        const double rad = rng.uniform(0.2, 0.4) * std::min(height, width);
        const double soft = rng.uniform(6.0, 12.0);
        const double cy = rng.uniform(0.0, double(height)), cx = rng.uniform(0.0, double(width));
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c) {
                const double dist = std::hypot(r - cy, c - cx);
                if (dist < rad + soft) {
                    const double a = std::clamp((rad + soft - dist) / soft, 0.0, 1.0);
                    img(r, c) = T((1 - a) * double(img(r, c)) + a * level);
                }
            }
    }
    for (T& v : img.data) v = T(std::round(std::clamp(double(v), 0.0, 1.0) * 255.0) / 255.0);
    return img;
}

// Texture-heavy variant: strong few-pixel gratings over most of the frame,
// the regime where fine-scale wavelet statistics stop looking like noise.
template <typename T>
Image<T> synth_textured_scene(int height, int width, uint64_t seed) {
    Image<T> img = synth_scene<T>(height, width, seed);
    Rng rng(mix_seed(seed, 0x7478ull));
    for (int tidx = 0; tidx < 3; ++tidx) {
        const double phi = rng.uniform(0.0, 6.28318530717958648);
        const double cycles = rng.uniform(0.18, 0.35) * std::min(width, height);
        const double amp = rng.uniform(0.07, 0.13);
        const double band0 = 0.3 * tidx;
        const double band1 = band0 + 0.38;
        const double kx = std::cos(phi) * cycles * 6.28318530717958648 / width;
        const double ky = std::sin(phi) * cycles * 6.28318530717958648 / height;
        for (int r = int(band0 * height); r < std::min(height, int(band1 * height)); ++r)
            for (int c = 0; c < width; ++c)
                img(r, c) = T(double(img(r, c)) + amp * std::sin(ky * r + kx * c));
    }
    for (T& v : img.data) v = T(std::round(std::clamp(double(v), 0.0, 1.0) * 255.0) / 255.0);
    return img;
}

}  // namespace cdl
