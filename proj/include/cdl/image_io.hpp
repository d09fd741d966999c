#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "cdl/core.hpp"

// Binary PGM (P5) reader/writer, 8-bit grayscale only. Loading maps bytes to
// [0,1] by /255; saving clamps to [0,1] and rounds back. Clamping happens
// nowhere else in the library.

namespace cdl {

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            tok.push_back(char(c));
            while ((c = in.get()) != EOF && !std::isspace(c) && c != '#') tok.push_back(char(c));
            if (c == '#')
                while ((c = in.get()) != EOF && c != '\n') {
                }
            return tok;
        }
    }
    return tok;
}

inline int pgm_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = pgm_token(in);
    size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &pos);
    } catch (...) {
        pos = 0;
    }
    if (tok.empty() || pos != tok.size() || v < 0)
        throw data_error(path + ": malformed PGM header (" + what + ")");
    return v;
}

}  // namespace detail

inline Image<uint8_t> read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error(path + ": cannot open");
    const std::string magic = detail::pgm_token(in);
    if (magic != "P5")
        throw data_error(path + ": not a binary PGM (magic '" + magic + "', expected P5)");
    const int w = detail::pgm_int(in, path, "width");
    const int h = detail::pgm_int(in, path, "height");
    const int maxval = detail::pgm_int(in, path, "maxval");
    if (w < 1 || h < 1) throw data_error(path + ": empty image");
    if (maxval > 255)
        throw data_error(path + ": maxval " + std::to_string(maxval) +
                         " means 16-bit samples; only 8-bit PGM is supported");
    if (maxval < 1) throw data_error(path + ": maxval must be >= 1");
    // pgm_int consumed the single whitespace byte after maxval already
    Image<uint8_t> img(h, w);
    in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
    if (in.gcount() != std::streamsize(img.data.size()))
        throw data_error(path + ": truncated pixel data");
    return img;
}

inline void write_pgm(const std::string& path, const Image<uint8_t>& img) {
    if (img.height < 1 || img.width < 1) throw contract_error("write_pgm: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error(path + ": cannot open for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
    if (!out) throw data_error(path + ": write failed");
}

template <typename T = double>
Image<T> load_image(const std::string& path) {
    const Image<uint8_t> raw = read_pgm(path);
    Image<T> img(raw.height, raw.width);
    for (size_t i = 0; i < raw.data.size(); ++i) img.data[i] = T(raw.data[i]) / T(255);
    return img;
}

template <typename T>
void save_image(const std::string& path, const Image<T>& img) {
    Image<uint8_t> raw(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(double(img.data[i]), 0.0, 1.0);
        raw.data[i] = uint8_t(std::lround(v * 255.0));
    }
    write_pgm(path, raw);
}

}  // namespace cdl
