#pragma once

#include <Eigen/Dense>
#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "wvae/common.hpp"

// IDX-format image/label loading (MNIST distribution format), batching and
// augmentation merging. Gzip-compressed files are decompressed transparently.

namespace wvae {

inline constexpr uint32_t kIdxImageMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr int kImageSide = 28;
inline constexpr int kImageDim = kImageSide * kImageSide;

enum class SourceTag : uint8_t { original = 0, generated_kl = 1, generated_w = 2 };

inline const char* to_string(SourceTag t) {
    switch (t) {
        case SourceTag::original: return "original";
        case SourceTag::generated_kl: return "generated-KL";
        case SourceTag::generated_w: return "generated-W";
    }
    return "?";
}

// Images are rows of a dense N x 784 matrix with values in [0,1].
struct ImageSet {
    Eigen::MatrixXd images;        // N x 784
    std::vector<int> labels;       // empty when unlabeled
    std::vector<SourceTag> tags;   // per example

    Eigen::Index size() const { return images.rows(); }
    bool labeled() const { return !labels.empty(); }

    void validate() const {
        if (labeled() && static_cast<Eigen::Index>(labels.size()) != size())
            throw ShapeError("ImageSet: label count differs from image count");
        if (static_cast<Eigen::Index>(tags.size()) != size())
            throw ShapeError("ImageSet: tag count differs from image count");
        if (size() > 0 && ((images.array() < 0.0).any() || (images.array() > 1.0).any()))
            throw DomainError("ImageSet: pixel values outside [0,1]");
    }

    size_t count_tag(SourceTag t) const {
        size_t n = 0;
        for (auto tag : tags)
            if (tag == t) ++n;
        return n;
    }

    // Deterministic content hash over quantized pixels and labels.
    uint64_t content_hash() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (Eigen::Index i = 0; i < size(); ++i)
            for (Eigen::Index j = 0; j < images.cols(); ++j) {
                const auto b = static_cast<unsigned char>(std::lround(images(i, j) * 255.0));
                h = fnv1a64(&b, 1, h);
            }
        for (int l : labels) {
            const auto b = static_cast<unsigned char>(l);
            h = fnv1a64(&b, 1, h);
        }
        return h;
    }
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                         const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("zlib init failed");
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    std::vector<unsigned char> buf(1 << 16);
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("corrupt gzip stream: " + path);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

inline std::vector<unsigned char> read_maybe_gzipped(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes, path);
    return bytes;
}

inline uint32_t be32(const std::vector<unsigned char>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw FormatError("truncated IDX file: " + path);
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) | (uint32_t(b[off + 2]) << 8) |
           uint32_t(b[off + 3]);
}

inline void put_be32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline Eigen::MatrixXd load_idx_images(const std::string& path) {
    const auto bytes = detail::read_maybe_gzipped(path);
    const uint32_t magic = detail::be32(bytes, 0, path);
    if (magic != kIdxImageMagic)
        throw FormatError("IDX image magic mismatch in " + path + " (got 0x" +
                          std::to_string(magic) + ")");
    const uint32_t n = detail::be32(bytes, 4, path);
    const uint32_t rows = detail::be32(bytes, 8, path);
    const uint32_t cols = detail::be32(bytes, 12, path);
    if (rows != kImageSide || cols != kImageSide)
        throw FormatError("IDX image dimension mismatch in " + path + ": expected 28x28, got " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    const size_t need = 16 + size_t(n) * kImageDim;
    if (bytes.size() < need) throw FormatError("truncated IDX image file: " + path);
    Eigen::MatrixXd images(n, kImageDim);
    for (uint32_t i = 0; i < n; ++i)
        for (int j = 0; j < kImageDim; ++j)
            images(i, j) = bytes[16 + size_t(i) * kImageDim + j] / 255.0;
    return images;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
    const auto bytes = detail::read_maybe_gzipped(path);
    const uint32_t magic = detail::be32(bytes, 0, path);
    if (magic != kIdxLabelMagic)
        throw FormatError("IDX label magic mismatch in " + path);
    const uint32_t n = detail::be32(bytes, 4, path);
    if (bytes.size() < 8 + size_t(n)) throw FormatError("truncated IDX label file: " + path);
    std::vector<int> labels(n);
    for (uint32_t i = 0; i < n; ++i) labels[i] = bytes[8 + i];
    return labels;
}

inline ImageSet load_idx(const std::string& images_path, const std::string& labels_path,
                         SourceTag tag = SourceTag::original) {
    ImageSet set;
    set.images = load_idx_images(images_path);
    set.labels = load_idx_labels(labels_path);
    if (static_cast<Eigen::Index>(set.labels.size()) != set.images.rows())
        throw FormatError("IDX dimension mismatch: " + std::to_string(set.images.rows()) +
                          " images vs " + std::to_string(set.labels.size()) + " labels");
    set.tags.assign(set.images.rows(), tag);
    return set;
}

inline ImageSet load_idx_unlabeled(const std::string& images_path,
                                   SourceTag tag = SourceTag::original) {
    ImageSet set;
    set.images = load_idx_images(images_path);
    set.tags.assign(set.images.rows(), tag);
    return set;
}

inline void write_idx_images(const ImageSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    detail::put_be32(out, kIdxImageMagic);
    detail::put_be32(out, static_cast<uint32_t>(set.size()));
    detail::put_be32(out, kImageSide);
    detail::put_be32(out, kImageSide);
    for (Eigen::Index i = 0; i < set.size(); ++i)
        for (int j = 0; j < kImageDim; ++j) {
            const auto b = static_cast<unsigned char>(std::lround(set.images(i, j) * 255.0));
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    if (!out) throw IoError("write failed: " + path);
}

inline void write_idx_labels(const std::vector<int>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    detail::put_be32(out, kIdxLabelMagic);
    detail::put_be32(out, static_cast<uint32_t>(labels.size()));
    for (int l : labels) {
        const auto b = static_cast<unsigned char>(l);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw IoError("write failed: " + path);
}

// Ordered batches of row indices. Seeded Fisher-Yates shuffle; the final
// partial batch is retained.
inline std::vector<std::vector<Eigen::Index>> batches(const ImageSet& set, Eigen::Index batch_size,
                                                      uint64_t seed, bool shuffle) {
    if (batch_size < 1) throw DomainError("batches: batch size must be >= 1");
    std::vector<Eigen::Index> order(set.size());
    for (Eigen::Index i = 0; i < set.size(); ++i) order[i] = i;
    if (shuffle) {
        Rng rng(seed);
        for (Eigen::Index i = set.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(static_cast<uint64_t>(i + 1))]);
    }
    std::vector<std::vector<Eigen::Index>> out;
    for (Eigen::Index start = 0; start < set.size(); start += batch_size) {
        const Eigen::Index end = std::min(start + batch_size, set.size());
        out.emplace_back(order.begin() + start, order.begin() + end);
    }
    return out;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

inline ImageSet merge(const ImageSet& original, const ImageSet& generated,
                      const std::vector<int>& generated_labels) {
    original.validate();
    generated.validate();
    if (static_cast<Eigen::Index>(generated_labels.size()) != generated.size())
        throw ShapeError("merge: generated labels must match generated image count");
    ImageSet out;
    out.images.resize(original.size() + generated.size(), kImageDim);
    out.images.topRows(original.size()) = original.images;
    out.images.bottomRows(generated.size()) = generated.images;
    out.labels = original.labels;
    out.labels.insert(out.labels.end(), generated_labels.begin(), generated_labels.end());
    out.tags = original.tags;
    out.tags.insert(out.tags.end(), generated.tags.begin(), generated.tags.end());
    out.validate();
    return out;
}

inline ImageSet filter_by_label(const ImageSet& set, int label) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < set.size(); ++i)
        if (set.labels[i] == label) idx.push_back(i);
    ImageSet out;
    out.images = gather_rows(set.images, idx);
    out.labels.assign(idx.size(), label);
    for (auto i : idx) out.tags.push_back(set.tags[i]);
    return out;
}

// First n examples as a subset (used for desk-scale experiment sizes).
inline ImageSet take(const ImageSet& set, Eigen::Index n) {
    if (n > set.size()) throw DomainError("take: subset larger than set");
    ImageSet out;
    out.images = set.images.topRows(n);
    if (set.labeled()) out.labels.assign(set.labels.begin(), set.labels.begin() + n);
    out.tags.assign(set.tags.begin(), set.tags.begin() + n);
    return out;
}

}  // namespace wvae
