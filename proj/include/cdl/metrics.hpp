#pragma once

#include <cmath>
#include <limits>

#include "cdl/core.hpp"

namespace cdl {

template <typename T>
double mse(const Image<T>& a, const Image<T>& b) {
    if (a.height != b.height || a.width != b.width)
        throw contract_error("mse: image dimensions differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / double(a.data.size());
}

// Peak 1: images live on the [0,1] intensity scale. Identical images report
// +infinity.
template <typename T>
double psnr(const Image<T>& x, const Image<T>& x_hat) {
    const double m = mse(x, x_hat);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

template <typename T>
Image<T> clamp01(Image<T> img) {
    for (auto& v : img.data) v = std::clamp(v, T(0), T(1));
    return img;
}

}  // namespace cdl
