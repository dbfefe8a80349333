#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "wvae/common.hpp"
#include "wvae/dataset.hpp"
#include "wvae/gaussian.hpp"
#include "wvae/runlog.hpp"
#include "wvae/scheduler.hpp"
#include "wvae/tensor.hpp"

// 3-layer MLP encoder/decoder VAE with reparameterized sampling and four
// loss variants: the KL baseline, the Wasserstein objective, its
// lambda-weighted form, and the T-regularized form.

namespace wvae {

using ad::Graph;
using ad::Matrix;
using ad::Node;

enum class LossVariant { elbo_kl, elbo_w, elbo_w_lambda, elbo_w_reg };

inline const char* to_string(LossVariant v) {
    switch (v) {
        case LossVariant::elbo_kl: return "ELBO_KL";
        case LossVariant::elbo_w: return "ELBO_W";
        case LossVariant::elbo_w_lambda: return "ELBO_W_LAMBDA";
        case LossVariant::elbo_w_reg: return "ELBO_W_REG";
    }
    return "?";
}

inline LossVariant variant_from_string(const std::string& s) {
    if (s == "ELBO_KL" || s == "elbo_kl" || s == "kl") return LossVariant::elbo_kl;
    if (s == "ELBO_W" || s == "elbo_w" || s == "w") return LossVariant::elbo_w;
    if (s == "ELBO_W_LAMBDA" || s == "elbo_w_lambda" || s == "wlambda")
        return LossVariant::elbo_w_lambda;
    if (s == "ELBO_W_REG" || s == "elbo_w_reg" || s == "wreg") return LossVariant::elbo_w_reg;
    throw ConfigError("unknown loss variant: " + s);
}

struct AffineLayer {
    Matrix W;  // in x out
    Matrix b;  // 1 x out
};

struct VaeParams {
    int input = kImageDim;
    int h1 = 512, h2 = 256, m = 20;
    std::vector<AffineLayer> enc;  // 784 -> h1 -> h2 -> 2m
    std::vector<AffineLayer> dec;  // m -> h2 -> h1 -> 784

    static AffineLayer init_layer(int fan_in, int fan_out, Rng& rng) {
        AffineLayer l;
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        l.W.resize(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i)
            for (int j = 0; j < fan_out; ++j) l.W(i, j) = rng.uniform(-s, s);
        l.b = Matrix::Zero(1, fan_out);
        return l;
    }

    static VaeParams init(int h1, int h2, int m, uint64_t seed) {
        VaeParams p;
        p.h1 = h1;
        p.h2 = h2;
        p.m = m;
        Rng rng(derive_seed(seed, "vae-init"));
        p.enc = {init_layer(p.input, h1, rng), init_layer(h1, h2, rng),
                 init_layer(h2, 2 * m, rng)};
        p.dec = {init_layer(m, h2, rng), init_layer(h2, h1, rng),
                 init_layer(h1, p.input, rng)};
        return p;
    }

    std::vector<Matrix*> flat() {
        std::vector<Matrix*> out;
        for (auto* group : {&enc, &dec})
            for (auto& l : *group) {
                out.push_back(&l.W);
                out.push_back(&l.b);
            }
        return out;
    }
    std::vector<const Matrix*> flat() const {
        std::vector<const Matrix*> out;
        for (const auto* group : {&enc, &dec})
            for (const auto& l : *group) {
                out.push_back(&l.W);
                out.push_back(&l.b);
            }
        return out;
    }

    bool finite() const {
        for (const auto* m_ : flat())
            if (!m_->allFinite()) return false;
        return true;
    }
};

namespace detail {

inline std::vector<Node*> param_leaves(Graph& g, const std::vector<AffineLayer>& layers) {
    std::vector<Node*> out;
    for (const auto& l : layers) {
        out.push_back(g.leaf(l.W));
        out.push_back(g.leaf(l.b));
    }
    return out;
}

inline Node* affine(Graph& g, Node* x, Node* W, Node* b) {
    return g.add(g.matmul(x, W), b);
}

struct EncoderHead {
    Node* mu;     // B x m, unconstrained
    Node* sigma;  // B x m, in (0, 1]
};

// relu-relu MLP ending in a 2m head split into means and raw sigmas.
inline EncoderHead encode_graph(Graph& g, const std::vector<Node*>& w, Node* x, int m) {
    Node* h = g.relu(affine(g, x, w[0], w[1]));
    h = g.relu(affine(g, h, w[2], w[3]));
    Node* head = affine(g, h, w[4], w[5]);
    EncoderHead out;
    out.mu = g.slice(head, 0, m);
    out.sigma = sigma_constrain(g, g.slice(head, m, 2 * m));
    return out;
}

inline Node* decode_graph(Graph& g, const std::vector<Node*>& w, Node* z) {
    Node* h = g.relu(affine(g, z, w[0], w[1]));
    h = g.relu(affine(g, h, w[2], w[3]));
    return affine(g, h, w[4], w[5]);  // linear logits; sigmoid lives in the loss
}

}  // namespace detail

// Posterior parameters for a batch of inputs.
inline std::vector<DiagGaussian> encode(const VaeParams& p, const Matrix& x) {
    if (x.cols() != p.input)
        throw ShapeError("encode: input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(p.input));
    if (x.rows() < 1) throw ShapeError("encode: empty batch");
    Graph g;
    std::vector<Node*> w;
    for (const auto& l : p.enc) {
        w.push_back(g.constant(l.W));
        w.push_back(g.constant(l.b));
    }
    const auto head = detail::encode_graph(g, w, g.constant(x), p.m);
    std::vector<DiagGaussian> out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out[i].mu = head.mu->value().row(i).transpose();
        out[i].sigma = head.sigma->value().row(i).transpose();
    }
    return out;
}

// z = mu + sigma .* eps
inline Eigen::VectorXd reparameterize(const DiagGaussian& q, const Eigen::VectorXd& eps) {
    if (eps.size() != q.dim())
        throw ShapeError("reparameterize: eps length " + std::to_string(eps.size()) +
                         ", expected " + std::to_string(q.dim()));
    return q.mu + q.sigma.cwiseProduct(eps);
}

// Bernoulli logits for one latent vector.
inline Eigen::VectorXd decode(const VaeParams& p, const Eigen::VectorXd& z) {
    if (z.size() != p.m)
        throw ShapeError("decode: latent length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(p.m));
    Graph g;
    std::vector<Node*> w;
    for (const auto& l : p.dec) {
        w.push_back(g.constant(l.W));
        w.push_back(g.constant(l.b));
    }
    Node* logits = detail::decode_graph(g, w, g.constant(z.transpose()));
    return logits->value().row(0).transpose();
}

// Pixel-summed Bernoulli cross-entropy in stable logit form.
inline double recon_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& x) {
    if (logits.size() != x.size()) throw ShapeError("recon_loss: length mismatch");
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any())
        throw DomainError("recon_loss: targets outside [0,1]");
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        s += ad::stable_softplus(logits(i)) - logits(i) * x(i);
    return s;
}

struct LossResult {
    LossBreakdown breakdown;
    std::vector<Matrix> grads;  // same order as VaeParams::flat()
};

// One stochastic evaluation of the chosen objective on a batch (one z draw
// per example). All four divergence diagnostics are populated regardless of
// the variant; the gradient covers encoder and decoder parameters.
inline LossResult loss(LossVariant variant, const VaeParams& p, const Matrix& x, double lambda,
                       double rho, Rng& rng, bool want_grads = true) {
    if (lambda < 0.0) throw DomainError("loss: lambda must be >= 0");
    if (rho < 0.0) throw DomainError("loss: rho must be >= 0");
    if (x.cols() != p.input) throw ShapeError("loss: input width mismatch");
    const auto B = static_cast<double>(x.rows());

    Graph g;
    std::vector<Node*> enc_w = detail::param_leaves(g, p.enc);
    std::vector<Node*> dec_w = detail::param_leaves(g, p.dec);
    Node* xin = g.constant(x);

    const auto head = detail::encode_graph(g, enc_w, xin, p.m);

    Matrix eps(x.rows(), p.m);
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
        for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
    Node* z = g.add(head.mu, g.mul(head.sigma, g.constant(std::move(eps))));

    Node* logits = detail::decode_graph(g, dec_w, z);
    Node* recon = g.scale(g.sum(g.bce_logits(logits, x)), 1.0 / B);

    // batch-mean closed forms
    Node* sum_mu2 = g.sum(g.square(head.mu));
    Node* sum_sig2 = g.sum(g.square(head.sigma));
    Node* sum_log_sig2 = g.sum(g.log(g.square(head.sigma)));
    Node* kl = g.scale(
        g.add_scalar(g.add(g.add(sum_mu2, sum_sig2), g.scale(sum_log_sig2, -1.0)),
                     -B * static_cast<double>(p.m)),
        0.5 / B);
    Node* w2 = g.scale(g.add(sum_mu2, g.sum(g.square(g.add_scalar(head.sigma, -1.0)))), 1.0 / B);
    Node* t = g.scale(g.add(w2, g.scale(kl, -1.0)), 2.0);  // batch-mean T, exact identity

    Node* total = nullptr;
    switch (variant) {
        case LossVariant::elbo_kl: total = g.add(recon, kl); break;
        case LossVariant::elbo_w: total = g.add(recon, w2); break;
        case LossVariant::elbo_w_lambda: total = g.add(recon, g.scale(w2, lambda)); break;
        case LossVariant::elbo_w_reg:
            total = g.add(g.add(recon, w2), g.scale(g.square(t), rho));
            break;
    }

    LossResult out;
    out.breakdown.recon = recon->value()(0, 0);
    out.breakdown.kl = kl->value()(0, 0);
    out.breakdown.w2sq = w2->value()(0, 0);
    out.breakdown.t = t->value()(0, 0);
    out.breakdown.lambda = lambda;
    out.breakdown.total = total->value()(0, 0);

    if (want_grads) {
        g.backward(total);
        out.grads.reserve(enc_w.size() + dec_w.size());
        for (Node* n : enc_w) out.grads.push_back(n->grad());
        for (Node* n : dec_w) out.grads.push_back(n->grad());
    }
    return out;
}

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(std::vector<Matrix*> params, const std::vector<Matrix>& grads) {
        if (m_.empty()) {
            for (const auto* p : params) {
                m_.push_back(Matrix::Zero(p->rows(), p->cols()));
                v_.push_back(Matrix::Zero(p->rows(), p->cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i].cwiseProduct(grads[i]);
            params[i]->array() -=
                lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

struct TrainConfig {
    int epochs = 15;
    int batch = 100;
    double lr = 1e-3;
    uint64_t seed = 1;
    int h1 = 512, h2 = 256, m = 20;
    double lambda0 = 1.0;  // fixed weight unless the scheduler is on
    double c = 0.05;
    double rho = 0.1;
    bool scheduler_on = false;
};

inline constexpr int kOverfitWindow = 100;  // consecutive iterations with T > 0

// Gradient-descent training. Fills `log` row by row so a divergence abort
// still leaves the partial log with the caller.
inline VaeParams train(LossVariant variant, const ImageSet& data, const TrainConfig& cfg,
                       RunLog& log) {
    if (data.size() < 1) throw DomainError("train: empty dataset");
    if (cfg.epochs < 0 || cfg.batch < 1) throw ConfigError("train: invalid epochs/batch");

    VaeParams params = VaeParams::init(cfg.h1, cfg.h2, cfg.m, cfg.seed);
    Adam opt(cfg.lr);
    Rng noise(derive_seed(cfg.seed, "vae-noise"));
    SchedulerState sched;
    sched.lambda = cfg.lambda0;
    sched.c = cfg.c;

    log.meta["variant"] = to_string(variant);
    log.meta["seed"] = std::to_string(cfg.seed);
    log.meta["epochs"] = std::to_string(cfg.epochs);
    log.meta["batch"] = std::to_string(cfg.batch);
    log.meta["lr"] = format_double(cfg.lr);
    log.meta["hidden"] = std::to_string(cfg.h1) + "," + std::to_string(cfg.h2);
    log.meta["latent_m"] = std::to_string(cfg.m);
    log.meta["lambda0"] = format_double(cfg.lambda0);
    log.meta["scheduler"] = cfg.scheduler_on ? "on" : "off";
    if (cfg.scheduler_on) {
        log.meta["scheduler_c"] = format_double(cfg.c);
        log.meta["scheduler_ar_order"] = std::to_string(sched.p);
        log.meta["scheduler_window"] = std::to_string(sched.window);
        log.meta["scheduler_min_history"] = std::to_string(sched.min_history);
        log.meta["scheduler_cadence"] = "every-iteration";
    }
    if (variant == LossVariant::elbo_w_reg) log.meta["rho"] = format_double(cfg.rho);
    log.meta["dataset_n"] = std::to_string(data.size());
    log.meta["dataset_hash"] = std::to_string(data.content_hash());

    long iteration = 0;
    int consecutive_positive_t = 0;
    bool overfit_flagged = false;
    const long first_epoch_end = (data.size() + cfg.batch - 1) / cfg.batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto idx_batches =
            batches(data, cfg.batch, derive_seed(cfg.seed, "shuffle-" + std::to_string(epoch)),
                    true);
        for (const auto& idx : idx_batches) {
            const Matrix xb = gather_rows(data.images, idx);
            const double lambda_used =
                (variant == LossVariant::elbo_w_lambda) ? (cfg.scheduler_on ? sched.lambda : cfg.lambda0)
                                                        : cfg.lambda0;
            LossResult r = loss(variant, params, xb, lambda_used, cfg.rho, noise);
            ++iteration;
            r.breakdown.iteration = iteration;

            if (!std::isfinite(r.breakdown.total)) {
                log.meta["aborted"] = "diverged at iteration " + std::to_string(iteration);
                throw DivergenceError("training diverged: non-finite total at iteration " +
                                      std::to_string(iteration));
            }

            opt.step(params.flat(), r.grads);

            if (cfg.scheduler_on && variant == LossVariant::elbo_w_lambda) {
                sched.update(r.breakdown.t);
                r.breakdown.t_hat = sched.last_t_hat;
                r.breakdown.beta = sched.last_beta;
            }
            log.rows.push_back(r.breakdown);

            // Condition-2 proxy: persistently positive T after the first epoch.
            if (iteration > first_epoch_end) {
                consecutive_positive_t = r.breakdown.t > 0.0 ? consecutive_positive_t + 1 : 0;
                if (consecutive_positive_t >= kOverfitWindow && !overfit_flagged) {
                    overfit_flagged = true;
                    log.meta["overfit_flag"] = "t>0 for " + std::to_string(kOverfitWindow) +
                                               " consecutive iterations ending at " +
                                               std::to_string(iteration);
                }
            }
        }
    }
    if (!overfit_flagged) log.meta["overfit_flag"] = "none";
    return params;
}

// Sample n images from the prior: z ~ N(0, I), decode, squash to [0,1].
inline Matrix generate(const VaeParams& p, int n, uint64_t seed) {
    if (n < 1) throw DomainError("generate: n must be >= 1");
    Rng rng(derive_seed(seed, "vae-generate"));
    Matrix z(n, p.m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p.m; ++j) z(i, j) = rng.normal();

    Graph g;
    std::vector<Node*> w;
    for (const auto& l : p.dec) {
        w.push_back(g.constant(l.W));
        w.push_back(g.constant(l.b));
    }
    Node* logits = detail::decode_graph(g, w, g.constant(std::move(z)));
    return logits->value().unaryExpr([](double v) { return ad::stable_sigmoid(v); });
}

}  // namespace wvae
