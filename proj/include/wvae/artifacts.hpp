#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "wvae/classifier.hpp"
#include "wvae/common.hpp"
#include "wvae/vae.hpp"

// Versioned binary parameter files, PGM image dumps, and config echoing.
// Params layout: "WVAE" magic, u32 version, u32 array count, then per array
// u32 rows, u32 cols and row-major 64-bit little-endian floats.

namespace wvae {

namespace detail {

inline void put_u32le(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("truncated params file: " + path);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

inline void put_f64le(std::ostream& out, double v) {
    uint64_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw FormatError("truncated params file: " + path);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace detail

inline void save_param_arrays(const std::vector<const Matrix*>& arrays, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write params file: " + path);
    out.write("WVAE", 4);
    detail::put_u32le(out, kFormatVersion);
    detail::put_u32le(out, static_cast<uint32_t>(arrays.size()));
    for (const auto* m : arrays) {
        detail::put_u32le(out, static_cast<uint32_t>(m->rows()));
        detail::put_u32le(out, static_cast<uint32_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->rows(); ++i)
            for (Eigen::Index j = 0; j < m->cols(); ++j) detail::put_f64le(out, (*m)(i, j));
    }
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Matrix> load_param_arrays(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open params file: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "WVAE")
        throw FormatError("params file magic mismatch: " + path);
    const uint32_t version = detail::get_u32le(in, path);
    if (version != static_cast<uint32_t>(kFormatVersion))
        throw FormatError("params file version mismatch: " + path + " has v" +
                          std::to_string(version));
    const uint32_t count = detail::get_u32le(in, path);
    std::vector<Matrix> arrays;
    arrays.reserve(count);
    for (uint32_t k = 0; k < count; ++k) {
        const uint32_t rows = detail::get_u32le(in, path);
        const uint32_t cols = detail::get_u32le(in, path);
        Matrix m(rows, cols);
        for (uint32_t i = 0; i < rows; ++i)
            for (uint32_t j = 0; j < cols; ++j) m(i, j) = detail::get_f64le(in, path);
        arrays.push_back(std::move(m));
    }
    return arrays;
}

inline void save_vae_params(const VaeParams& p, const std::string& path) {
    std::vector<const Matrix*> arrays;
    for (const auto* group : {&p.enc, &p.dec})
        for (const auto& l : *group) {
            arrays.push_back(&l.W);
            arrays.push_back(&l.b);
        }
    save_param_arrays(arrays, path);
}

inline VaeParams load_vae_params(const std::string& path) {
    const auto arrays = load_param_arrays(path);
    if (arrays.size() != 12)
        throw FormatError("params file is not a VAE checkpoint (expected 12 arrays, got " +
                          std::to_string(arrays.size()) + "): " + path);
    VaeParams p;
    p.enc = {{arrays[0], arrays[1]}, {arrays[2], arrays[3]}, {arrays[4], arrays[5]}};
    p.dec = {{arrays[6], arrays[7]}, {arrays[8], arrays[9]}, {arrays[10], arrays[11]}};
    p.input = static_cast<int>(p.enc[0].W.rows());
    p.h1 = static_cast<int>(p.enc[0].W.cols());
    p.h2 = static_cast<int>(p.enc[1].W.cols());
    p.m = static_cast<int>(p.enc[2].W.cols() / 2);
    if (p.input != kImageDim || p.enc[2].W.cols() != 2 * p.m ||
        p.dec[0].W.rows() != p.m || p.dec[2].W.cols() != p.input)
        throw FormatError("params file has inconsistent VAE shapes: " + path);
    return p;
}

inline void save_classifier_params(const ClassifierParams& p, const std::string& path) {
    std::vector<const Matrix*> arrays;
    for (const auto& l : p.layers) {
        arrays.push_back(&l.W);
        arrays.push_back(&l.b);
    }
    save_param_arrays(arrays, path);
}

inline ClassifierParams load_classifier_params(const std::string& path) {
    const auto arrays = load_param_arrays(path);
    if (arrays.size() != 6)
        throw FormatError("params file is not a classifier checkpoint: " + path);
    ClassifierParams p;
    p.layers = {{arrays[0], arrays[1]}, {arrays[2], arrays[3]}, {arrays[4], arrays[5]}};
    if (p.layers[0].W.rows() != ClassifierParams::kIn ||
        p.layers[2].W.cols() != ClassifierParams::kOut)
        throw FormatError("params file has inconsistent classifier shapes: " + path);
    return p;
}

// Binary PGM, bit-exact: "P5\n28 28\n255\n" then row-major bytes round(p*255).
inline void write_pgm(const Eigen::VectorXd& image, const std::string& path) {
    if (image.size() != kImageDim) throw ShapeError("write_pgm: image must have 784 pixels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write PGM: " + path);
    out << "P5\n28 28\n255\n";
    for (Eigen::Index i = 0; i < image.size(); ++i) {
        const auto b = static_cast<unsigned char>(std::lround(image(i) * 255.0));
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw IoError("write failed: " + path);
}

inline uint64_t config_hash(const std::map<std::string, std::string>& resolved) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [k, v] : resolved) h = fnv1a64(v, fnv1a64(k, h));
    return h;
}

}  // namespace wvae
