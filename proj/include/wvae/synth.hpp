#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "wvae/common.hpp"
#include "wvae/dataset.hpp"

// Procedurally rendered 28x28 digit corpus. Each class is a fixed stroke
// skeleton drawn under a random affine jitter (rotation, scale, shear,
// shift), random stroke thickness and intensity, plus light pixel noise.
// Fully deterministic given (seed, index), so train/test splits and reruns
// are reproducible. Stands in for MNIST when the real files are absent;
// the IDX loader accepts either interchangeably.

namespace wvae::synth {

namespace detail {

struct P {
    double x, y;
};
using Stroke = std::vector<P>;

inline std::vector<Stroke> ellipse(double cx, double cy, double rx, double ry, int n = 18) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        const double a = 2.0 * M_PI * i / n;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return {s};
}

// Skeletons live in the unit square, x right, y down.
inline const std::vector<std::vector<Stroke>>& digit_strokes() {
    static const std::vector<std::vector<Stroke>> all = [] {
        std::vector<std::vector<Stroke>> d(10);
        d[0] = ellipse(0.5, 0.5, 0.27, 0.38);
        d[1] = {{{0.34, 0.26}, {0.55, 0.10}, {0.55, 0.90}}};
        d[2] = {{{0.26, 0.30},
                 {0.32, 0.15},
                 {0.50, 0.10},
                 {0.68, 0.16},
                 {0.73, 0.32},
                 {0.64, 0.50},
                 {0.27, 0.88},
                 {0.76, 0.88}}};
        d[3] = {{{0.28, 0.16},
                 {0.50, 0.10},
                 {0.70, 0.20},
                 {0.70, 0.36},
                 {0.50, 0.48},
                 {0.70, 0.60},
                 {0.70, 0.78},
                 {0.50, 0.90},
                 {0.27, 0.82}}};
        d[4] = {{{0.62, 0.08}, {0.24, 0.60}, {0.84, 0.60}}, {{0.64, 0.34}, {0.64, 0.92}}};
        d[5] = {{{0.72, 0.12},
                 {0.32, 0.12},
                 {0.29, 0.46},
                 {0.52, 0.42},
                 {0.70, 0.52},
                 {0.73, 0.70},
                 {0.56, 0.88},
                 {0.28, 0.83}}};
        d[6] = {{{0.66, 0.10},
                 {0.46, 0.22},
                 {0.33, 0.46},
                 {0.30, 0.68},
                 {0.40, 0.87},
                 {0.60, 0.87},
                 {0.70, 0.70},
                 {0.62, 0.53},
                 {0.42, 0.54},
                 {0.32, 0.66}}};
        d[7] = {{{0.24, 0.14}, {0.76, 0.14}, {0.44, 0.90}}};
        d[8] = ellipse(0.5, 0.30, 0.20, 0.19);
        {
            auto bottom = ellipse(0.5, 0.67, 0.24, 0.21);
            d[8].push_back(bottom[0]);
        }
        d[9] = ellipse(0.52, 0.32, 0.21, 0.21);
        d[9].push_back({{0.73, 0.34}, {0.70, 0.66}, {0.62, 0.90}});
        return d;
    }();
    return all;
}

inline double seg_dist(double px, double py, const P& a, const P& b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = px - a.x, wy = py - a.y;
    const double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

// Render one digit sample into a 784-vector. The caller's rng drives all
// per-sample variation.
inline Eigen::VectorXd render_digit(int digit, Rng& rng) {
    const auto& strokes = detail::digit_strokes().at(digit);

    const double theta = rng.uniform(-0.30, 0.30);
    const double scale = 20.0 * rng.uniform(0.78, 1.08);
    const double aspect = rng.uniform(0.85, 1.15);
    const double shear = rng.uniform(-0.18, 0.18);
    const double cx = 13.5 + rng.uniform(-2.5, 2.5);
    const double cy = 13.5 + rng.uniform(-2.0, 2.0);
    const double half_width = rng.uniform(0.55, 1.35);
    const double intensity = rng.uniform(0.78, 1.0);
    const double ct = std::cos(theta), st = std::sin(theta);

    auto map = [&](const detail::P& p) -> detail::P {
        const double x = (p.x - 0.5) * aspect + shear * (p.y - 0.5);
        const double y = p.y - 0.5;
        return {cx + scale * (ct * x - st * y), cy + scale * (st * x + ct * y)};
    };

    std::array<double, kImageDim> dist;
    dist.fill(1e9);
    const double reach = half_width + 1.0;
    for (const auto& stroke : strokes) {
        for (size_t i = 0; i + 1 < stroke.size(); ++i) {
            const detail::P a = map(stroke[i]);
            const detail::P b = map(stroke[i + 1]);
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
            const int x1 = std::min(kImageSide - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
            const int y1 = std::min(kImageSide - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    double& d = dist[y * kImageSide + x];
                    d = std::min(d, detail::seg_dist(x + 0.0, y + 0.0, a, b));
                }
        }
    }

    Eigen::VectorXd img(kImageDim);
    for (int i = 0; i < kImageDim; ++i) {
        const double d = dist[i];
        double v = 0.0;
        if (d <= half_width)
            v = 1.0;
        else if (d <= half_width + 1.0)
            v = half_width + 1.0 - d;  // 1-pixel antialiasing ramp
        v = v * intensity + 0.02 * rng.normal();
        img(i) = std::clamp(v, 0.0, 1.0);
    }
    return img;
}

// Balanced labeled set of n examples (class = index mod 10).
inline ImageSet make_set(Eigen::Index n, uint64_t seed, SourceTag tag = SourceTag::original) {
    ImageSet set;
    set.images.resize(n, kImageDim);
    set.labels.resize(n);
    set.tags.assign(n, tag);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
        set.images.row(i) = render_digit(digit, rng).transpose();
        set.labels[i] = digit;
    }
    return set;
}

}  // namespace wvae::synth
