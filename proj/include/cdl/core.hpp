#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Core value types shared by every module: single-channel images,
// multi-channel coefficient maps at stride resolution, and convolution
// filter banks. All data is stored row-major (channel-major for maps).

namespace cdl {

// Precondition / argument violations (bad shapes, negative thresholds, ...).
struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or diverging computations.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable files, malformed formats, bad configs.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename T>
struct Image {
    int height = 0;
    int width = 0;
    std::vector<T> data;  // row-major, height*width

    Image() = default;
    Image(int h, int w, T fill = T(0)) : height(h), width(w), data(size_t(h) * w, fill) {
        if (h <= 0 || w <= 0) throw contract_error("Image: dims must be positive");
    }

    size_t size() const { return data.size(); }
    T* row(int r) { return data.data() + size_t(r) * width; }
    const T* row(int r) const { return data.data() + size_t(r) * width; }
    T& operator()(int r, int c) { return data[size_t(r) * width + c]; }
    T operator()(int r, int c) const { return data[size_t(r) * width + c]; }
};

template <typename T>
struct CoeffMap {
    int channels = 0;
    int height = 0;  // coefficient-grid rows (image rows / stride)
    int width = 0;   // coefficient-grid cols
    std::vector<T> data;  // channel-major, then row-major

    CoeffMap() = default;
    CoeffMap(int m, int h, int w, T fill = T(0))
        : channels(m), height(h), width(w), data(size_t(m) * h * w, fill) {
        if (m <= 0 || h <= 0 || w <= 0) throw contract_error("CoeffMap: dims must be positive");
    }

    size_t size() const { return data.size(); }
    size_t plane() const { return size_t(height) * width; }
    T* channel(int j) { return data.data() + size_t(j) * plane(); }
    const T* channel(int j) const { return data.data() + size_t(j) * plane(); }
    T& operator()(int j, int r, int c) { return data[(size_t(j) * height + r) * width + c]; }
    T operator()(int j, int r, int c) const { return data[(size_t(j) * height + r) * width + c]; }
};

// M square filters with a common stride. A bank represents any of the
// learned operators: applied as synthesis (coefficients -> image) or as
// analysis (image -> coefficients, the exact transpose).
template <typename T>
struct FilterBank {
    int num_filters = 0;
    int filter_size = 0;  // filters are filter_size x filter_size
    int stride = 1;
    std::vector<T> weights;  // filter-major, row-major taps

    FilterBank() = default;
    FilterBank(int m, int q, int s, T fill = T(0))
        : num_filters(m), filter_size(q), stride(s), weights(size_t(m) * q * q, fill) {
        if (m <= 0 || q <= 0 || s <= 0) throw contract_error("FilterBank: dims must be positive");
    }

    bool operator==(const FilterBank&) const = default;

    size_t taps() const { return size_t(filter_size) * filter_size; }
    T* filter(int j) { return weights.data() + size_t(j) * taps(); }
    const T* filter(int j) const { return weights.data() + size_t(j) * taps(); }
    T& operator()(int j, int a, int b) { return weights[(size_t(j) * filter_size + a) * filter_size + b]; }
    T operator()(int j, int a, int b) const { return weights[(size_t(j) * filter_size + a) * filter_size + b]; }
};

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (const T& x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Mixes independent stream identifiers into one seed. Used for the
// counter-based noise streams so realizations depend only on
// (seed, image index, sigma), never on evaluation order.
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
    return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

// Deterministic RNG. Gaussian sampling is done by explicit Box-Muller on
// 53-bit uniforms instead of std::normal_distribution, whose output
// sequence is implementation-defined.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) {
        // modulo bias is < 2^-40 for the sizes used here
        return gen_() % n;
    }

    // standard normal
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::mt19937_64 gen_;
};

// Reflect-pads an image so both dims become multiples of `multiple`.
// Mirror indexing repeats the edge sample (pad row i maps to row H-1-i).
template <typename T>
Image<T> reflect_pad_to_multiple(const Image<T>& x, int multiple) {
    if (multiple <= 0) throw contract_error("reflect_pad_to_multiple: multiple must be positive");
    int ph = (multiple - x.height % multiple) % multiple;
    int pw = (multiple - x.width % multiple) % multiple;
    if (ph == 0 && pw == 0) return x;
    if (ph >= x.height || pw >= x.width)
        throw contract_error("reflect_pad_to_multiple: image smaller than stride");
    Image<T> out(x.height + ph, x.width + pw);
    for (int r = 0; r < out.height; ++r) {
        int sr = r < x.height ? r : 2 * x.height - 1 - r;
        for (int c = 0; c < out.width; ++c) {
            int sc = c < x.width ? c : 2 * x.width - 1 - c;
            out(r, c) = x(sr, sc);
        }
    }
    return out;
}

// Top-left crop back to the pre-padding size.
template <typename T>
Image<T> crop(const Image<T>& x, int height, int width) {
    if (height > x.height || width > x.width)
        throw contract_error("crop: requested size exceeds image");
    Image<T> out(height, width);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) out(r, c) = x(r, c);
    return out;
}

template <typename T>
T mean_of(const Image<T>& x) {
    double acc = 0.0;
    for (const T& v : x.data) acc += double(v);
    return T(acc / double(x.size()));
}

template <typename T>
void add_scalar(Image<T>& x, T c) {
    for (T& v : x.data) v += c;
}

}  // namespace cdl
