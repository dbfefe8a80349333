#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "wvae/common.hpp"
#include "wvae/tensor.hpp"

// Closed-form divergences between a diagonal-Gaussian posterior and the
// standard-normal prior N(0, I), plus the gap T between them and the
// sigma constraint that keeps the posterior in the regime where the
// Wasserstein bound dominates the KL bound.

namespace wvae {

inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kSigmaCeil = 1.0;

// Posterior q = N(mu, diag(sigma^2)); sigma holds standard deviations.
struct DiagGaussian {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;

    Eigen::Index dim() const { return mu.size(); }

    void validate() const {
        if (mu.size() != sigma.size() || mu.size() < 1)
            throw ShapeError("DiagGaussian: mu and sigma must have equal length >= 1");
        if ((sigma.array() <= 0.0).any())
            throw DomainError("DiagGaussian: sigma must be strictly positive");
    }
};

struct DivergenceValues {
    double kl = 0.0;
    double w2sq = 0.0;
    double t = 0.0;
};

// KL(q || N(0,I)) = 1/2 (-sum log sigma_i^2 + sum (mu_i^2 + sigma_i^2) - m)
inline double kl_to_std(const DiagGaussian& q) {
    q.validate();
    const auto& s = q.sigma.array();
    return 0.5 * (-s.square().log().sum() + q.mu.squaredNorm() + s.square().sum() -
                  static_cast<double>(q.dim()));
}

// Squared 2-Wasserstein distance to N(0,I): |mu|^2 + sum (sigma_i - 1)^2
inline double w2sq_to_std(const DiagGaussian& q) {
    q.validate();
    return q.mu.squaredNorm() + (q.sigma.array() - 1.0).square().sum();
}

// T = log prod sigma_i^2 + sum (sigma_i - 2)^2 + sum mu_i^2 - m.
// Identity (exact): T = 2 * (w2sq_to_std - kl_to_std). Zero iff q = N(0, I)
// within the constrained regime; nonpositive whenever mu = 0 and sigma <= 1.
inline double t_gap(const DiagGaussian& q) {
    q.validate();
    const auto& s = q.sigma.array();
    return s.square().log().sum() + (s - 2.0).square().sum() + q.mu.squaredNorm() -
           static_cast<double>(q.dim());
}

inline DivergenceValues divergences(const DiagGaussian& q) {
    return {kl_to_std(q), w2sq_to_std(q), t_gap(q)};
}

// sigma_i = clamp(softplus(raw_i), 1e-4, 1). The upper clamp enforces the
// sigma <= 1 condition under which T <= 0 once the means settle; the floor
// keeps log sigma^2 bounded.
inline Eigen::VectorXd sigma_constrain(const Eigen::VectorXd& raw) {
    return raw.unaryExpr([](double x) {
        return std::min(std::max(ad::stable_softplus(x), kSigmaFloor), kSigmaCeil);
    });
}

// Graph version of sigma_constrain for use inside loss assembly.
inline ad::Node* sigma_constrain(ad::Graph& g, ad::Node* raw) {
    return g.clamp(g.softplus(raw), kSigmaFloor, kSigmaCeil);
}

}  // namespace wvae
