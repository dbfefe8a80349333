#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "wvae/common.hpp"

// Reverse-mode automatic differentiation on dense 2-D arrays of doubles.
// A Graph owns its nodes; creation order is a topological order, so the
// backward pass is a single reverse sweep over the tape. Graphs are cheap
// and meant to be rebuilt every training step.

namespace wvae::ad {

using Matrix = Eigen::MatrixXd;

enum class OpKind {
    leaf,
    matmul,
    add,          // same shape, or rhs is a 1 x n row vector broadcast over rows
    mul,          // elementwise, same shape
    scale,        // x * s
    add_scalar,   // x + s
    relu,
    softplus,
    sigmoid,
    exp,
    log,
    square,
    sum,          // -> 1x1
    mean,         // -> 1x1
    concat,       // along columns
    slice,        // column range [c0, c1)
    clamp,        // clamp(x, lo, hi), zero subgradient on the clamped side
    bce_logits,   // elementwise softplus(l) - l * target, target held constant
    softmax_xent, // per-row logsumexp(l) - <l, onehot>, onehot held constant
};

inline double stable_softplus(double x) {
    if (x > 30.0) return x;           // overflow guard; log1p(exp(x)) == x to double precision here
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class Graph;

class Node {
public:
    const Matrix& value() const { return value_; }
    const Matrix& grad() const { return grad_; }
    Eigen::Index rows() const { return value_.rows(); }
    Eigen::Index cols() const { return value_.cols(); }
    OpKind kind() const { return kind_; }
    bool requires_grad() const { return requires_grad_; }

private:
    friend class Graph;
    Matrix value_;
    Matrix grad_;
    OpKind kind_ = OpKind::leaf;
    Node* a_ = nullptr;
    Node* b_ = nullptr;
    double s0_ = 0.0, s1_ = 0.0;  // scalar payload (scale factor, clamp bounds, ...)
    Eigen::Index c0_ = 0, c1_ = 0;
    Matrix aux_;                  // constant targets for the fused losses
    Matrix cache_;                // saved forward intermediates (softmax rows)
    bool requires_grad_ = true;
};

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    size_t size() const { return nodes_.size(); }

    Node* leaf(Matrix v) { return make(OpKind::leaf, std::move(v), nullptr, nullptr, true); }

    // leaf that never receives gradient (inputs, noise draws, ...)
    Node* constant(Matrix v) { return make(OpKind::leaf, std::move(v), nullptr, nullptr, false); }

    Node* matmul(Node* a, Node* b) {
        if (a->cols() != b->rows())
            throw ShapeError("matmul: inner dimensions differ: " + dims(a) + " * " + dims(b));
        return make(OpKind::matmul, a->value_ * b->value_, a, b);
    }

    Node* add(Node* a, Node* b) {
        if (a->rows() == b->rows() && a->cols() == b->cols())
            return make(OpKind::add, a->value_ + b->value_, a, b);
        if (b->rows() == 1 && b->cols() == a->cols())  // row-vector bias broadcast
            return make(OpKind::add, a->value_.rowwise() + b->value_.row(0), a, b);
        throw ShapeError("add: incompatible shapes " + dims(a) + " + " + dims(b));
    }

    Node* mul(Node* a, Node* b) {
        if (a->rows() != b->rows() || a->cols() != b->cols())
            throw ShapeError("mul: shapes differ: " + dims(a) + " vs " + dims(b));
        return make(OpKind::mul, a->value_.cwiseProduct(b->value_), a, b);
    }

    Node* scale(Node* a, double s) {
        Node* n = make(OpKind::scale, a->value_ * s, a);
        n->s0_ = s;
        return n;
    }

    Node* add_scalar(Node* a, double s) {
        Node* n = make(OpKind::add_scalar, (a->value_.array() + s).matrix(), a);
        n->s0_ = s;
        return n;
    }

    Node* relu(Node* a) { return make(OpKind::relu, a->value_.cwiseMax(0.0), a); }

    Node* softplus(Node* a) {
        return make(OpKind::softplus, a->value_.unaryExpr([](double x) { return stable_softplus(x); }), a);
    }

    Node* sigmoid(Node* a) {
        return make(OpKind::sigmoid, a->value_.unaryExpr([](double x) { return stable_sigmoid(x); }), a);
    }

    Node* exp(Node* a) { return make(OpKind::exp, a->value_.array().exp().matrix(), a); }

    Node* log(Node* a) {
        if ((a->value_.array() <= 0.0).any())
            throw DomainError("log: nonpositive input");
        return make(OpKind::log, a->value_.array().log().matrix(), a);
    }

    Node* square(Node* a) { return make(OpKind::square, a->value_.array().square().matrix(), a); }

    Node* sum(Node* a) {
        Matrix v(1, 1);
        v(0, 0) = a->value_.sum();
        return make(OpKind::sum, std::move(v), a);
    }

    Node* mean(Node* a) {
        Matrix v(1, 1);
        v(0, 0) = a->value_.mean();
        return make(OpKind::mean, std::move(v), a);
    }

    Node* concat(Node* a, Node* b) {
        if (a->rows() != b->rows())
            throw ShapeError("concat: row counts differ: " + dims(a) + " vs " + dims(b));
        Matrix v(a->rows(), a->cols() + b->cols());
        v << a->value_, b->value_;
        return make(OpKind::concat, std::move(v), a, b);
    }

    Node* slice(Node* a, Eigen::Index c0, Eigen::Index c1) {
        if (c0 < 0 || c1 <= c0 || c1 > a->cols())
            throw ShapeError("slice: bad column range [" + std::to_string(c0) + ", " +
                             std::to_string(c1) + ") for " + dims(a));
        Node* n = make(OpKind::slice, a->value_.middleCols(c0, c1 - c0), a);
        n->c0_ = c0;
        n->c1_ = c1;
        return n;
    }

    Node* clamp(Node* a, double lo, double hi) {
        Node* n = make(OpKind::clamp, a->value_.cwiseMax(lo).cwiseMin(hi), a);
        n->s0_ = lo;
        n->s1_ = hi;
        return n;
    }

    // Elementwise Bernoulli cross-entropy in logit form: softplus(l) - l * x.
    Node* bce_logits(Node* logits, Matrix targets) {
        if (logits->rows() != targets.rows() || logits->cols() != targets.cols())
            throw ShapeError("bce_logits: target shape mismatch");
        Matrix v = logits->value_.binaryExpr(targets, [](double l, double x) {
            return stable_softplus(l) - l * x;
        });
        Node* n = make(OpKind::bce_logits, std::move(v), logits);
        n->aux_ = std::move(targets);
        return n;
    }

    // Per-row softmax cross-entropy against one-hot targets; returns a column.
    Node* softmax_xent(Node* logits, Matrix onehot) {
        if (logits->rows() != onehot.rows() || logits->cols() != onehot.cols())
            throw ShapeError("softmax_xent: target shape mismatch");
        const Eigen::Index n_rows = logits->rows();
        Matrix out(n_rows, 1);
        Matrix soft(n_rows, logits->cols());
        for (Eigen::Index i = 0; i < n_rows; ++i) {
            const auto row = logits->value_.row(i);
            const double m = row.maxCoeff();
            const Eigen::ArrayXd e = (row.array() - m).exp();
            const double z = e.sum();
            soft.row(i) = (e / z).matrix();
            out(i, 0) = m + std::log(z) - row.dot(onehot.row(i));
        }
        Node* n = make(OpKind::softmax_xent, std::move(out), logits);
        n->aux_ = std::move(onehot);
        n->cache_ = std::move(soft);
        return n;
    }

    // Reverse sweep from a scalar root. Each node is visited exactly once;
    // gradients of shared subexpressions accumulate additively.
    void backward(Node* root) {
        if (root->rows() != 1 || root->cols() != 1)
            throw ShapeError("backward: root must be scalar, got " + dims(root));
        if (backward_done_)
            throw std::logic_error("backward: already run on this graph; call reset_grads() first");
        backward_done_ = true;
        root->grad_(0, 0) = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node& n = *it;
            if (n.kind_ != OpKind::leaf && n.grad_.cwiseAbs().maxCoeff() != 0.0) propagate(n);
        }
    }

    void reset_grads() {
        for (auto& n : nodes_) n.grad_.setZero();
        backward_done_ = false;
    }

private:
    static std::string dims(const Node* n) {
        return std::to_string(n->rows()) + "x" + std::to_string(n->cols());
    }

    Node* make(OpKind k, Matrix v, Node* a, Node* b = nullptr, bool requires_grad = false) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.kind_ = k;
        n.value_ = std::move(v);
        n.grad_ = Matrix::Zero(n.value_.rows(), n.value_.cols());
        n.a_ = a;
        n.b_ = b;
        if (k == OpKind::leaf)
            n.requires_grad_ = requires_grad;
        else
            n.requires_grad_ = (a && a->requires_grad_) || (b && b->requires_grad_);
        return &n;
    }

    void propagate(Node& n) {
        const Matrix& g = n.grad_;
        Node* a = n.a_;
        Node* b = n.b_;
        switch (n.kind_) {
            case OpKind::leaf:
                break;
            case OpKind::matmul:
                if (a->requires_grad_) a->grad_.noalias() += g * b->value_.transpose();
                if (b->requires_grad_) b->grad_.noalias() += a->value_.transpose() * g;
                break;
            case OpKind::add:
                if (a->requires_grad_) a->grad_ += g;
                if (b->requires_grad_) {
                    if (b->rows() == g.rows())
                        b->grad_ += g;
                    else
                        b->grad_.row(0) += g.colwise().sum();
                }
                break;
            case OpKind::mul:
                if (a->requires_grad_) a->grad_ += g.cwiseProduct(b->value_);
                if (b->requires_grad_) b->grad_ += g.cwiseProduct(a->value_);
                break;
            case OpKind::scale:
                if (a->requires_grad_) a->grad_ += g * n.s0_;
                break;
            case OpKind::add_scalar:
                if (a->requires_grad_) a->grad_ += g;
                break;
            case OpKind::relu:
                if (a->requires_grad_)
                    a->grad_.array() += g.array() * (a->value_.array() > 0.0).cast<double>();
                break;
            case OpKind::softplus:
                if (a->requires_grad_)
                    a->grad_ += g.cwiseProduct(a->value_.unaryExpr([](double x) { return stable_sigmoid(x); }));
                break;
            case OpKind::sigmoid:
                if (a->requires_grad_)
                    a->grad_.array() += g.array() * n.value_.array() * (1.0 - n.value_.array());
                break;
            case OpKind::exp:
                if (a->requires_grad_) a->grad_ += g.cwiseProduct(n.value_);
                break;
            case OpKind::log:
                if (a->requires_grad_) a->grad_ += g.cwiseQuotient(a->value_);
                break;
            case OpKind::square:
                if (a->requires_grad_) a->grad_ += 2.0 * g.cwiseProduct(a->value_);
                break;
            case OpKind::sum:
                if (a->requires_grad_) a->grad_.array() += g(0, 0);
                break;
            case OpKind::mean:
                if (a->requires_grad_) a->grad_.array() += g(0, 0) / static_cast<double>(a->value_.size());
                break;
            case OpKind::concat:
                if (a->requires_grad_) a->grad_ += g.leftCols(a->cols());
                if (b->requires_grad_) b->grad_ += g.rightCols(b->cols());
                break;
            case OpKind::slice:
                if (a->requires_grad_) a->grad_.middleCols(n.c0_, n.c1_ - n.c0_) += g;
                break;
            case OpKind::clamp:
                if (a->requires_grad_)
                    a->grad_.array() += g.array() * ((a->value_.array() > n.s0_) && (a->value_.array() < n.s1_)).cast<double>();
                break;
            case OpKind::bce_logits:
                if (a->requires_grad_)
                    a->grad_ += g.cwiseProduct(
                        a->value_.unaryExpr([](double x) { return stable_sigmoid(x); }) - n.aux_);
                break;
            case OpKind::softmax_xent:
                if (a->requires_grad_)
                    for (Eigen::Index i = 0; i < a->rows(); ++i)
                        a->grad_.row(i) += g(i, 0) * (n.cache_.row(i) - n.aux_.row(i));
                break;
        }
    }

    std::deque<Node> nodes_;  // stable addresses; creation order is topological
    bool backward_done_ = false;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<double> per_param;  // max relative error per parameter array
};

using GraphFn = std::function<Node*(Graph&, const std::vector<Node*>&)>;

// Central-difference check of the analytic gradient produced by f.
// f must deterministically build a scalar root from the given leaves.
inline GradCheckReport grad_check(const GraphFn& f, const std::vector<Matrix>& params, double h) {
    if (h <= 0.0) throw DomainError("grad_check: h must be positive");

    auto eval = [&](const std::vector<Matrix>& p) {
        Graph g;
        std::vector<Node*> leaves;
        leaves.reserve(p.size());
        for (const auto& m : p) leaves.push_back(g.leaf(m));
        const Node* root = f(g, leaves);
        if (root->rows() != 1 || root->cols() != 1)
            throw ShapeError("grad_check: f must produce a scalar");
        const double v = root->value()(0, 0);
        if (!std::isfinite(v)) throw DomainError("grad_check: non-finite function value");
        return v;
    };

    std::vector<Matrix> analytic;
    {
        Graph g;
        std::vector<Node*> leaves;
        for (const auto& m : params) leaves.push_back(g.leaf(m));
        Node* root = f(g, leaves);
        if (!std::isfinite(root->value()(0, 0)))
            throw DomainError("grad_check: non-finite function value");
        g.backward(root);
        for (const Node* l : leaves) analytic.push_back(l->grad());
    }

    GradCheckReport report;
    std::vector<Matrix> shifted = params;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < params[pi].rows(); ++i) {
            for (Eigen::Index j = 0; j < params[pi].cols(); ++j) {
                const double orig = shifted[pi](i, j);
                shifted[pi](i, j) = orig + h;
                const double fp = eval(shifted);
                shifted[pi](i, j) = orig - h;
                const double fm = eval(shifted);
                shifted[pi](i, j) = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                const double a = analytic[pi](i, j);
                const double rel = std::abs(a - numeric) /
                                   std::max({std::abs(a), std::abs(numeric), 1e-12});
                worst = std::max(worst, rel);
            }
        }
        report.per_param.push_back(worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    return report;
}

}  // namespace wvae::ad
