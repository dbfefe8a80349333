#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wvae/common.hpp"
#include "wvae/dataset.hpp"
#include "wvae/runlog.hpp"

// Frechet-distance image-quality metric over fitted feature Gaussians, plus
// loss-profile extraction from run logs. The Frechet score here is a declared
// FID surrogate: same mathematical definition, but the feature network is a
// locally trained classifier rather than an Inception model, so only
// orderings are comparable with published numbers.

namespace wvae {

inline constexpr double kCovRidge = 1e-6;

struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric, ridge added
    Eigen::Index sample_count = 0;

    Eigen::Index dim() const { return mean.size(); }
};

// Sample mean and unbiased covariance with a small ridge for sqrt stability.
inline GaussianFit fit_gaussian(const Eigen::MatrixXd& features) {
    if (features.rows() < 2) throw DomainError("fit_gaussian: need at least 2 samples");
    GaussianFit fit;
    fit.sample_count = features.rows();
    fit.mean = features.colwise().mean().transpose();
    const Eigen::MatrixXd centered = features.rowwise() - fit.mean.transpose();
    fit.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose());  // scrub accumulation asymmetry
    fit.cov.diagonal().array() += kCovRidge;
    return fit;
}

namespace detail {

struct JacobiResult {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd vectors;  // columns
};

// Cyclic Jacobi rotations for symmetric matrices. Adequate for the feature
// dimensions used here (d <= 128).
inline JacobiResult jacobi_eigen(Eigen::MatrixXd a, double off_tol = 1e-12, int max_sweeps = 100) {
    const Eigen::Index d = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);
    auto off_norm = [&]() {
        double s = 0.0;
        for (Eigen::Index p = 0; p < d; ++p)
            for (Eigen::Index q = p + 1; q < d; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };
    int sweep = 0;
    while (off_norm() >= off_tol) {
        if (++sweep > max_sweeps)
            throw DomainError("jacobi_eigen: no convergence in " + std::to_string(max_sweeps) +
                              " sweeps");
        for (Eigen::Index p = 0; p < d; ++p)
            for (Eigen::Index q = p + 1; q < d; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Eigen::VectorXd ap = a.col(p), aq = a.col(q);
                a.col(p) = c * ap - s * aq;
                a.col(q) = s * ap + c * aq;
                ap = a.row(p).transpose();
                aq = a.row(q).transpose();
                a.row(p) = (c * ap - s * aq).transpose();
                a.row(q) = (s * ap + c * aq).transpose();
                const Eigen::VectorXd vp = v.col(p);
                v.col(p) = c * vp - s * v.col(q);
                v.col(q) = s * vp + c * v.col(q);
            }
    }
    return {a.diagonal(), v};
}

}  // namespace detail

// Symmetric PSD square root via Jacobi eigendecomposition; negative
// eigenvalues (from roundoff) clamp to zero.
inline Eigen::MatrixXd sym_psd_sqrt(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw ShapeError("sym_psd_sqrt: matrix must be square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if (((a - a.transpose()).cwiseAbs().maxCoeff()) > 1e-8 * scale)
        throw DomainError("sym_psd_sqrt: input not symmetric");
    const auto eig = detail::jacobi_eigen(0.5 * (a + a.transpose()));
    Eigen::VectorXd root = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    return eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

// Squared Frechet distance between Gaussians:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sb^1/2 Sa Sb^1/2)^1/2)
inline double frechet_distance_sq(const GaussianFit& a, const GaussianFit& b) {
    if (a.dim() != b.dim()) throw ShapeError("frechet_distance_sq: dimension mismatch");
    const Eigen::MatrixXd rb = sym_psd_sqrt(b.cov);
    Eigen::MatrixXd inner = rb * a.cov * rb;
    inner = 0.5 * (inner + inner.transpose());
    const Eigen::MatrixXd cross = sym_psd_sqrt(inner);
    const double val = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                       2.0 * cross.trace();
    return std::max(0.0, val);
}

// Maps images (N x 784) to feature rows; id names the extractor in reports.
struct FeatureExtractor {
    std::string id;
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> fn;
};

inline FeatureExtractor raw_pixel_extractor() {
    return {"raw-pixels", [](const Eigen::MatrixXd& images) { return images; }};
}

inline double fid_surrogate(const ImageSet& real, const ImageSet& generated,
                            const FeatureExtractor& extractor) {
    if (real.size() < 2 || generated.size() < 2)
        throw DomainError("fid_surrogate: both sets need at least 2 images");
    const GaussianFit fa = fit_gaussian(extractor.fn(generated.images));
    const GaussianFit fb = fit_gaussian(extractor.fn(real.images));
    return frechet_distance_sq(fa, fb);
}

// Totals at the requested iterations, averaged elementwise across runs.
inline std::vector<double> loss_profile(const std::vector<RunLog>& logs,
                                        const std::vector<long>& checkpoints = {100, 1000, 2000,
                                                                                5000}) {
    if (logs.empty()) throw DomainError("loss_profile: no runs");
    std::vector<double> out(checkpoints.size(), 0.0);
    for (const auto& log : logs) {
        for (size_t i = 0; i < checkpoints.size(); ++i) {
            if (checkpoints[i] > log.last_iteration())
                throw DomainError("loss_profile: checkpoint " + std::to_string(checkpoints[i]) +
                                  " beyond run length " + std::to_string(log.last_iteration()));
            out[i] += log.at_iteration(checkpoints[i]).total;
        }
    }
    for (auto& v : out) v /= static_cast<double>(logs.size());
    return out;
}

}  // namespace wvae
