#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "wvae/common.hpp"
#include "wvae/dataset.hpp"
#include "wvae/metrics.hpp"
#include "wvae/tensor.hpp"
#include "wvae/vae.hpp"

// Small supervised MLP (784 -> 256 -> 64 -> 10) for the augmentation
// experiment; its 64-wide penultimate layer doubles as the FID feature
// extractor.

namespace wvae {

struct ClassifierParams {
    static constexpr int kIn = kImageDim;
    static constexpr int kH1 = 256;
    static constexpr int kH2 = 64;
    static constexpr int kOut = 10;
    std::vector<AffineLayer> layers;  // 3 affine layers

    static ClassifierParams init(uint64_t seed) {
        ClassifierParams p;
        Rng rng(derive_seed(seed, "clf-init"));
        p.layers = {VaeParams::init_layer(kIn, kH1, rng), VaeParams::init_layer(kH1, kH2, rng),
                    VaeParams::init_layer(kH2, kOut, rng)};
        return p;
    }

    std::vector<Matrix*> flat() {
        std::vector<Matrix*> out;
        for (auto& l : layers) {
            out.push_back(&l.W);
            out.push_back(&l.b);
        }
        return out;
    }
};

struct ClassifierConfig {
    int epochs = 3;
    int batch = 100;
    double lr = 1e-3;
    uint64_t seed = 1;
};

namespace detail {

inline Node* classifier_logits(Graph& g, const std::vector<Node*>& w, Node* x) {
    Node* h = g.relu(affine(g, x, w[0], w[1]));
    h = g.relu(affine(g, h, w[2], w[3]));
    return affine(g, h, w[4], w[5]);
}

inline Matrix onehot(const std::vector<int>& labels, const std::vector<Eigen::Index>& idx) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), ClassifierParams::kOut);
    for (size_t i = 0; i < idx.size(); ++i) y(static_cast<Eigen::Index>(i), labels[idx[i]]) = 1.0;
    return y;
}

}  // namespace detail

// Softmax cross-entropy training with Adam; deterministic given the seed.
inline ClassifierParams train_classifier(const ImageSet& data, const ClassifierConfig& cfg) {
    if (!data.labeled()) throw DomainError("train_classifier: dataset has no labels");
    ClassifierParams params = ClassifierParams::init(cfg.seed);
    Adam opt(cfg.lr);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto idx_batches =
            batches(data, cfg.batch, derive_seed(cfg.seed, "clf-shuffle-" + std::to_string(epoch)),
                    true);
        for (const auto& idx : idx_batches) {
            Graph g;
            std::vector<Node*> w;
            for (const auto& l : params.layers) {
                w.push_back(g.leaf(l.W));
                w.push_back(g.leaf(l.b));
            }
            Node* logits =
                detail::classifier_logits(g, w, g.constant(gather_rows(data.images, idx)));
            Node* ce = g.mean(g.softmax_xent(logits, detail::onehot(data.labels, idx)));
            if (!std::isfinite(ce->value()(0, 0)))
                throw DivergenceError("classifier training diverged");
            g.backward(ce);
            std::vector<Matrix> grads;
            for (Node* n : w) grads.push_back(n->grad());
            opt.step(params.flat(), grads);
        }
    }
    return params;
}

inline Matrix classifier_logit_values(const ClassifierParams& p, const Eigen::MatrixXd& images) {
    Graph g;
    std::vector<Node*> w;
    for (const auto& l : p.layers) {
        w.push_back(g.constant(l.W));
        w.push_back(g.constant(l.b));
    }
    return detail::classifier_logits(g, w, g.constant(images))->value();
}

// Fraction of argmax-correct predictions; ties break to the lowest class.
inline double accuracy(const ClassifierParams& p, const ImageSet& test) {
    if (!test.labeled()) throw DomainError("accuracy: dataset has no labels");
    const Matrix logits = classifier_logit_values(p, test.images);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < ClassifierParams::kOut; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (best == test.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// Penultimate-layer activations, the default FID-surrogate feature map.
inline FeatureExtractor classifier_feature_extractor(const ClassifierParams& p,
                                                     const std::string& id = "clf-penultimate-64") {
    ClassifierParams copy = p;
    return {id, [copy](const Eigen::MatrixXd& images) {
                Graph g;
                std::vector<Node*> w;
                for (const auto& l : copy.layers) {
                    w.push_back(g.constant(l.W));
                    w.push_back(g.constant(l.b));
                }
                Node* h = g.relu(detail::affine(g, g.constant(images), w[0], w[1]));
                h = g.relu(detail::affine(g, h, w[2], w[3]));
                return h->value();
            }};
}

struct AugmentationCell {
    Eigen::Index original_size = 0;
    std::string condition;  // baseline | +KL | +W
    double accuracy = 0.0;
};

struct AugmentationResult {
    std::vector<AugmentationCell> cells;  // sizes x {baseline, +KL, +W}
    ClassifierConfig config;

    double cell(Eigen::Index size, const std::string& condition) const {
        for (const auto& c : cells)
            if (c.original_size == size && c.condition == condition) return c.accuracy;
        throw DomainError("augmentation result: no cell for " + std::to_string(size) + "/" +
                          condition);
    }
};

// Table-2 protocol: per original size, train identical classifiers on the
// baseline set and on the set merged with each generator's samples.
inline AugmentationResult augmentation_experiment(const std::vector<Eigen::Index>& original_sizes,
                                                  const ImageSet& originals, const ImageSet& gen_w,
                                                  const std::vector<int>& gen_w_labels,
                                                  const ImageSet& gen_kl,
                                                  const std::vector<int>& gen_kl_labels,
                                                  const ImageSet& test,
                                                  const ClassifierConfig& cfg) {
    AugmentationResult out;
    out.config = cfg;
    for (const auto size : original_sizes) {
        const ImageSet base = take(originals, size);
        const auto acc_base = accuracy(train_classifier(base, cfg), test);
        const auto acc_kl = accuracy(train_classifier(merge(base, gen_kl, gen_kl_labels), cfg), test);
        const auto acc_w = accuracy(train_classifier(merge(base, gen_w, gen_w_labels), cfg), test);
        out.cells.push_back({size, "baseline", acc_base});
        out.cells.push_back({size, "+KL", acc_kl});
        out.cells.push_back({size, "+W", acc_w});
    }
    return out;
}

}  // namespace wvae
