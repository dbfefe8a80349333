#include <catch2/catch_amalgamated.hpp>

#include "wvae/gaussian.hpp"
#include "wvae/tensor.hpp"

using namespace wvae;
using ad::Graph;
using ad::Matrix;
using ad::Node;

namespace {

Matrix row(std::initializer_list<double> vals) {
    Matrix m(1, vals.size());
    Eigen::Index i = 0;
    for (double v : vals) m(0, i++) = v;
    return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

}  // namespace

TEST_CASE("forward op examples") {
    Graph g;
    SECTION("relu") {
        Node* n = g.relu(g.leaf(row({-1.0, 0.0, 2.0})));
        CHECK(n->value() == row({0.0, 0.0, 2.0}));
    }
    SECTION("matmul by identity") {
        Matrix col(2, 1);
        col << 3.0, 4.0;
        Node* n = g.matmul(g.leaf(Matrix::Identity(2, 2)), g.leaf(col));
        CHECK(n->value() == col);
    }
    SECTION("softplus at zero") {
        Node* n = g.softplus(g.leaf(row({0.0})));
        CHECK_THAT(n->value()(0, 0), Catch::Matchers::WithinAbs(0.6931471805599453, 1e-15));
    }
    SECTION("softplus large-argument branches") {
        Node* n = g.softplus(g.leaf(row({100.0, -100.0})));
        CHECK(n->value()(0, 0) == 100.0);
        CHECK_THAT(n->value()(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-40));
    }
    SECTION("concat and slice invert each other") {
        Node* a = g.leaf(row({1.0, 2.0}));
        Node* b = g.leaf(row({3.0}));
        Node* cat = g.concat(a, b);
        CHECK(cat->value() == row({1.0, 2.0, 3.0}));
        CHECK(g.slice(cat, 0, 2)->value() == a->value());
        CHECK(g.slice(cat, 2, 3)->value() == b->value());
    }
}

TEST_CASE("shape and domain errors") {
    Graph g;
    CHECK_THROWS_AS(g.matmul(g.leaf(Matrix::Zero(2, 3)), g.leaf(Matrix::Zero(2, 3))), ShapeError);
    CHECK_THROWS_AS(g.add(g.leaf(Matrix::Zero(2, 3)), g.leaf(Matrix::Zero(3, 2))), ShapeError);
    CHECK_THROWS_AS(g.mul(g.leaf(Matrix::Zero(2, 3)), g.leaf(Matrix::Zero(1, 3))), ShapeError);
    CHECK_THROWS_AS(g.log(g.leaf(row({1.0, 0.0}))), DomainError);
    CHECK_THROWS_AS(g.log(g.leaf(row({-2.0}))), DomainError);
    CHECK_THROWS_AS(g.slice(g.leaf(Matrix::Zero(1, 4)), 2, 2), ShapeError);
    CHECK_THROWS_AS(g.slice(g.leaf(Matrix::Zero(1, 4)), 0, 5), ShapeError);
}

TEST_CASE("backward examples") {
    SECTION("sum of squares") {
        Graph g;
        Node* w = g.leaf(row({1.0, 2.0}));
        g.backward(g.sum(g.square(w)));
        CHECK(w->grad() == row({2.0, 4.0}));
    }
    SECTION("sigmoid slope at zero") {
        Graph g;
        Node* x = g.leaf(row({0.0}));
        g.backward(g.sigmoid(x));
        CHECK_THAT(x->grad()(0, 0), Catch::Matchers::WithinAbs(0.25, 1e-15));
    }
    SECTION("chained relu subgradient") {
        Graph g;
        Node* x = g.leaf(row({-1.0, 2.0}));
        g.backward(g.sum(g.relu(g.relu(x))));
        CHECK(x->grad() == row({0.0, 1.0}));
    }
    SECTION("relu at exactly zero has zero subgradient") {
        Graph g;
        Node* x = g.leaf(row({0.0}));
        g.backward(g.sum(g.relu(x)));
        CHECK(x->grad()(0, 0) == 0.0);
    }
    SECTION("row-vector bias broadcast") {
        Graph g;
        Node* b = g.leaf(row({1.0, -1.0}));
        Node* a = g.leaf(Matrix::Zero(3, 2));
        g.backward(g.sum(g.add(a, b)));
        CHECK(b->grad() == row({3.0, 3.0}));
    }
}

TEST_CASE("non-scalar backward root is rejected") {
    Graph g;
    Node* x = g.leaf(row({1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(x), ShapeError);
}

TEST_CASE("second backward without reset is rejected") {
    Graph g;
    Node* w = g.leaf(row({1.0}));
    Node* root = g.sum(g.square(w));
    g.backward(root);
    CHECK_THROWS_AS(g.backward(root), std::logic_error);
    g.reset_grads();
    g.backward(root);
    CHECK(w->grad()(0, 0) == 2.0);
}

TEST_CASE("shared subexpressions accumulate additively") {
    // f = s + s with shared s must match f = s1 + s2 with duplicated subgraphs
    Rng rng(42);
    const Matrix w0 = random_matrix(2, 3, rng);
    double shared_grad, duplicated_grad;
    {
        Graph g;
        Node* w = g.leaf(w0);
        Node* s = g.sum(g.square(w));
        g.backward(g.add(s, s));
        shared_grad = w->grad()(0, 0);
    }
    {
        Graph g;
        Node* w = g.leaf(w0);
        g.backward(g.add(g.sum(g.square(w)), g.sum(g.square(w))));
        duplicated_grad = w->grad()(0, 0);
    }
    CHECK(shared_grad == duplicated_grad);
    CHECK(shared_grad == 4.0 * w0(0, 0));
}

TEST_CASE("forward evaluation is deterministic") {
    Rng rng(7);
    const Matrix a = random_matrix(4, 5, rng);
    const Matrix b = random_matrix(5, 3, rng);
    auto run = [&]() {
        Graph g;
        return g.sum(g.sigmoid(g.matmul(g.leaf(a), g.leaf(b))))->value()(0, 0);
    };
    const double first = run();
    for (int i = 0; i < 5; ++i) REQUIRE(run() == first);
}

TEST_CASE("grad_check examples") {
    SECTION("sum of squares is tight") {
        const auto report = ad::grad_check(
            [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.square(p[0])); },
            {row({1.0, 2.0, 3.0})}, 1e-5);
        CHECK(report.max_rel_error < 1e-7);
    }
    SECTION("closed-form KL of the posterior head") {
        // 1/2 (-sum log s^2 + sum (mu^2 + s^2) - m) assembled from ops
        auto kl_fn = [](Graph& g, const std::vector<Node*>& p) {
            Node* mu = p[0];
            Node* sigma = p[1];
            Node* s2 = g.square(sigma);
            Node* inner = g.add(g.add(g.sum(g.square(mu)), g.sum(s2)),
                                g.scale(g.sum(g.log(s2)), -1.0));
            return g.scale(g.add_scalar(inner, -1.0), 0.5);
        };
        const auto report = ad::grad_check(kl_fn, {row({0.3}), row({0.7})}, 1e-5);
        CHECK(report.max_rel_error < 1e-5);
    }
    SECTION("constant function has zero error") {
        const auto report = ad::grad_check(
            [](Graph& g, const std::vector<Node*>& p) {
                return g.scale(g.sum(p[0]), 0.0);
            },
            {row({1.0, -2.0})}, 1e-5);
        CHECK(report.max_rel_error == 0.0);
    }
}

TEST_CASE("every op kind passes randomized gradient checks") {
    // 100 random points per op, h = 1e-5, relative tolerance 1e-4
    Rng rng(20260809);
    struct OpCase {
        const char* name;
        std::function<Node*(Graph&, const std::vector<Node*>&)> fn;
        std::function<std::vector<Matrix>(Rng&)> sample;
    };
    auto unary_sample = [](double lo, double hi) {
        return [lo, hi](Rng& r) {
            Matrix m(2, 3);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 3; ++j) m(i, j) = r.uniform(lo, hi);
            return std::vector<Matrix>{m};
        };
    };
    const std::vector<OpCase> cases = {
        {"matmul",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.matmul(p[0], p[1])); },
         [](Rng& r) {
             return std::vector<Matrix>{random_matrix(2, 3, r), random_matrix(3, 2, r)};
         }},
        {"add",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.square(g.add(p[0], p[1]))); },
         [](Rng& r) {
             return std::vector<Matrix>{random_matrix(2, 3, r), random_matrix(2, 3, r)};
         }},
        {"add broadcast",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.square(g.add(p[0], p[1]))); },
         [](Rng& r) {
             return std::vector<Matrix>{random_matrix(3, 2, r), random_matrix(1, 2, r)};
         }},
        {"mul",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.mul(p[0], p[1])); },
         [](Rng& r) {
             return std::vector<Matrix>{random_matrix(2, 3, r), random_matrix(2, 3, r)};
         }},
        {"scale",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.scale(p[0], -1.7)); },
         unary_sample(-2.0, 2.0)},
        {"add_scalar",
         [](Graph& g, const std::vector<Node*>& p) {
             return g.sum(g.square(g.add_scalar(p[0], 0.4)));
         },
         unary_sample(-2.0, 2.0)},
        {"relu",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.relu(p[0])); },
         unary_sample(-2.0, 2.0)},
        {"softplus",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.softplus(p[0])); },
         unary_sample(-4.0, 4.0)},
        {"sigmoid",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.sigmoid(p[0])); },
         unary_sample(-4.0, 4.0)},
        {"exp",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.exp(p[0])); },
         unary_sample(-2.0, 2.0)},
        {"log",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.log(p[0])); },
         unary_sample(0.1, 3.0)},
        {"square",
         [](Graph& g, const std::vector<Node*>& p) { return g.sum(g.square(p[0])); },
         unary_sample(-2.0, 2.0)},
        {"sum",
         [](Graph& g, const std::vector<Node*>& p) { return g.square(g.sum(p[0])); },
         unary_sample(-2.0, 2.0)},
        {"mean",
         [](Graph& g, const std::vector<Node*>& p) { return g.square(g.mean(p[0])); },
         unary_sample(-2.0, 2.0)},
        {"concat",
         [](Graph& g, const std::vector<Node*>& p) {
             return g.sum(g.square(g.concat(p[0], p[1])));
         },
         [](Rng& r) {
             return std::vector<Matrix>{random_matrix(2, 2, r), random_matrix(2, 3, r)};
         }},
        {"slice",
         [](Graph& g, const std::vector<Node*>& p) {
             return g.sum(g.square(g.slice(p[0], 1, 3)));
         },
         unary_sample(-2.0, 2.0)},
        {"clamp",
         [](Graph& g, const std::vector<Node*>& p) {
             return g.sum(g.square(g.clamp(p[0], -0.9, 0.9)));
         },
         unary_sample(-2.0, 2.0)},
        {"bce_logits",
         [](Graph& g, const std::vector<Node*>& p) {
             Matrix t(2, 3);
             t << 0.0, 0.5, 1.0, 0.25, 0.75, 1.0;
             return g.sum(g.bce_logits(p[0], t));
         },
         unary_sample(-3.0, 3.0)},
        {"softmax_xent",
         [](Graph& g, const std::vector<Node*>& p) {
             Matrix y = Matrix::Zero(2, 3);
             y(0, 1) = 1.0;
             y(1, 2) = 1.0;
             return g.sum(g.softmax_xent(p[0], y));
         },
         unary_sample(-3.0, 3.0)},
    };

    for (const auto& c : cases) {
        INFO("op: " << c.name);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            auto params = c.sample(rng);
            // keep clamp/relu kinks away from the finite-difference step
            if (std::string(c.name) == "clamp" || std::string(c.name) == "relu")
                for (auto& m : params)
                    m = m.unaryExpr([](double v) {
                        if (std::abs(v) < 1e-3) return v + 0.01;
                        if (std::abs(std::abs(v) - 0.9) < 1e-3) return v * 1.05;
                        return v;
                    });
            worst = std::max(worst, ad::grad_check(c.fn, params, 1e-5).max_rel_error);
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("graph sigma_constrain matches the plain version and clips gradients") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd raw(5);
        for (int i = 0; i < 5; ++i) raw(i) = rng.uniform(-30.0, 30.0);
        Graph g;
        Node* n = sigma_constrain(g, g.leaf(raw.transpose()));
        const Eigen::VectorXd plain = sigma_constrain(raw);
        REQUIRE(n->value().row(0).transpose() == plain);
    }
    // clamped coordinates get zero gradient
    Graph g;
    Node* x = g.leaf(row({50.0, 0.0, -20.0}));
    g.backward(g.sum(sigma_constrain(g, x)));
    CHECK(x->grad()(0, 0) == 0.0);   // upper clamp
    CHECK(x->grad()(0, 1) > 0.0);    // interior
    CHECK(x->grad()(0, 2) == 0.0);   // floor clamp
}
