#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "wvae/gaussian.hpp"
#include "wvae/metrics.hpp"
#include "wvae/synth.hpp"

using namespace wvae;

TEST_CASE("fit_gaussian hand-computed cases") {
    SECTION("two points, unbiased divisor") {
        Eigen::MatrixXd x(2, 2);
        x << 0.0, 0.0, 2.0, 0.0;
        const GaussianFit f = fit_gaussian(x);
        CHECK(f.mean(0) == 1.0);
        CHECK(f.mean(1) == 0.0);
        CHECK_THAT(f.cov(0, 0), Catch::Matchers::WithinAbs(2.0 + kCovRidge, 1e-12));
        CHECK_THAT(f.cov(1, 1), Catch::Matchers::WithinAbs(kCovRidge, 1e-12));
        CHECK(f.cov(0, 1) == 0.0);
        CHECK(f.sample_count == 2);
    }
    SECTION("identical points collapse to the ridge") {
        Eigen::MatrixXd x = Eigen::MatrixXd::Constant(5, 3, 1.5);
        const GaussianFit f = fit_gaussian(x);
        CHECK((f.mean.array() == 1.5).all());
        CHECK_THAT((f.cov - kCovRidge * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(),
                   Catch::Matchers::WithinAbs(0.0, 1e-15));
    }
    SECTION("1-d samples {1,2,3}") {
        Eigen::MatrixXd x(3, 1);
        x << 1.0, 2.0, 3.0;
        const GaussianFit f = fit_gaussian(x);
        CHECK(f.mean(0) == 2.0);
        CHECK_THAT(f.cov(0, 0), Catch::Matchers::WithinAbs(1.0 + kCovRidge, 1e-12));
    }
    SECTION("too few samples") {
        CHECK_THROWS_AS(fit_gaussian(Eigen::MatrixXd::Zero(1, 4)), DomainError);
    }
}

TEST_CASE("sym_psd_sqrt basics") {
    CHECK(sym_psd_sqrt(Eigen::MatrixXd::Identity(3, 3)) == Eigen::MatrixXd::Identity(3, 3));

    Eigen::MatrixXd d = Eigen::Vector2d(4.0, 9.0).asDiagonal();
    const Eigen::MatrixXd r = sym_psd_sqrt(d);
    CHECK_THAT((r - Eigen::Vector2d(2.0, 3.0).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-12));

    Eigen::MatrixXd a(2, 2);
    a << 2.0, 1.0, 1.0, 2.0;
    const Eigen::MatrixXd s = sym_psd_sqrt(a);
    CHECK_THAT(((s * s) - a).cwiseAbs().maxCoeff(), Catch::Matchers::WithinAbs(0.0, 1e-10));

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(sym_psd_sqrt(asym), DomainError);
    CHECK_THROWS_AS(sym_psd_sqrt(Eigen::MatrixXd::Zero(2, 3)), ShapeError);
}

TEST_CASE("sym_psd_sqrt multiply-back over random PSD matrices") {
    Rng rng(17);
    for (int d : {2, 5, 16, 33, 64}) {
        const Eigen::MatrixXd a = oracles::random_psd(d, rng);
        const Eigen::MatrixXd s = sym_psd_sqrt(a);
        const double err = (s * s - a).norm();  // Frobenius
        INFO("d = " << d);
        REQUIRE(err < 1e-8);
        REQUIRE_THAT((s - s.transpose()).cwiseAbs().maxCoeff(),
                     Catch::Matchers::WithinAbs(0.0, 1e-10));
    }
}

TEST_CASE("frechet_distance_sq properties and pinned cases") {
    SECTION("identical fits give zero") {
        Eigen::MatrixXd x(4, 3);
        x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 0, 2;
        const GaussianFit f = fit_gaussian(x);
        CHECK_THAT(frechet_distance_sq(f, f), Catch::Matchers::WithinAbs(0.0, 1e-10));
    }
    SECTION("1-d variance gap: (1 - 2)^2 = 1") {
        GaussianFit a, b;
        a.mean = Eigen::VectorXd::Zero(1);
        a.cov = Eigen::MatrixXd::Identity(1, 1);
        b.mean = Eigen::VectorXd::Zero(1);
        b.cov = 4.0 * Eigen::MatrixXd::Identity(1, 1);
        CHECK_THAT(frechet_distance_sq(a, b), Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
    SECTION("diagonal case matches the explicit formula") {
        Rng rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 1 + static_cast<int>(rng.below(6));
            GaussianFit a, b;
            a.mean = Eigen::VectorXd(d);
            b.mean = Eigen::VectorXd(d);
            Eigen::VectorXd va(d), vb(d);
            for (int i = 0; i < d; ++i) {
                a.mean(i) = rng.uniform(-2.0, 2.0);
                b.mean(i) = rng.uniform(-2.0, 2.0);
                va(i) = rng.uniform(0.05, 3.0);
                vb(i) = rng.uniform(0.05, 3.0);
            }
            a.cov = va.asDiagonal();
            b.cov = vb.asDiagonal();
            const double expected = (a.mean - b.mean).squaredNorm() +
                                    (va.cwiseSqrt() - vb.cwiseSqrt()).squaredNorm();
            REQUIRE_THAT(frechet_distance_sq(a, b),
                         Catch::Matchers::WithinAbs(expected, 1e-10));
        }
    }
    SECTION("symmetry and nonnegativity on random fits") {
        Rng rng(29);
        for (int trial = 0; trial < 30; ++trial) {
            const int d = 2 + static_cast<int>(rng.below(8));
            GaussianFit a, b;
            a.mean = Eigen::VectorXd(d);
            b.mean = Eigen::VectorXd(d);
            for (int i = 0; i < d; ++i) {
                a.mean(i) = rng.normal();
                b.mean(i) = rng.normal();
            }
            a.cov = oracles::random_psd(d, rng);
            b.cov = oracles::random_psd(d, rng);
            const double ab = frechet_distance_sq(a, b);
            const double ba = frechet_distance_sq(b, a);
            REQUIRE(ab >= 0.0);
            REQUIRE_THAT(ab, Catch::Matchers::WithinAbs(ba, 1e-8));
        }
    }
    SECTION("dimension mismatch") {
        GaussianFit a, b;
        a.mean = Eigen::VectorXd::Zero(2);
        a.cov = Eigen::MatrixXd::Identity(2, 2);
        b.mean = Eigen::VectorXd::Zero(3);
        b.cov = Eigen::MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS(frechet_distance_sq(a, b), ShapeError);
    }
}

TEST_CASE("frechet specializes to w2sq_to_std against the standard prior") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(8));
        DiagGaussian q;
        q.mu = Eigen::VectorXd(m);
        q.sigma = Eigen::VectorXd(m);
        for (int i = 0; i < m; ++i) {
            q.mu(i) = rng.uniform(-2.0, 2.0);
            q.sigma(i) = rng.uniform(0.1, 2.0);
        }
        GaussianFit a, b;
        a.mean = q.mu;
        a.cov = q.sigma.array().square().matrix().asDiagonal();
        b.mean = Eigen::VectorXd::Zero(m);
        b.cov = Eigen::MatrixXd::Identity(m, m);
        REQUIRE_THAT(frechet_distance_sq(a, b),
                     Catch::Matchers::WithinAbs(w2sq_to_std(q), 1e-10));
    }
}

TEST_CASE("fid_surrogate sanity orderings") {
    const ImageSet real = synth::make_set(400, 1);
    const ImageSet real2 = synth::make_set(400, 2);

    const auto raw = raw_pixel_extractor();
    // truncate features to keep the raw-pixel covariance small for the test
    FeatureExtractor small{"raw-64", [](const Eigen::MatrixXd& imgs) {
                               return Eigen::MatrixXd(imgs.leftCols(64));
                           }};

    CHECK(fid_surrogate(real, real, small) == 0.0);  // same set

    ImageSet noise;
    noise.images.resize(400, kImageDim);
    Rng rng(3);
    for (Eigen::Index i = 0; i < 400; ++i)
        for (int j = 0; j < kImageDim; ++j) noise.images(i, j) = rng.uniform(0.0, 1.0);
    noise.tags.assign(400, SourceTag::generated_kl);

    const double d_noise = fid_surrogate(real, noise, small);
    const double d_fresh = fid_surrogate(real, real2, small);
    CHECK(d_noise > d_fresh);  // noise is farther than a fresh draw of the corpus
    CHECK(raw.id == "raw-pixels");
}

TEST_CASE("loss_profile extracts and averages checkpoint totals") {
    RunLog a, b;
    for (long i = 1; i <= 150; ++i) {
        LossBreakdown r;
        r.iteration = i;
        r.total = static_cast<double>(i);
        a.rows.push_back(r);
        r.total = static_cast<double>(2 * i);
        b.rows.push_back(r);
    }
    const auto single = loss_profile({a}, {100});
    CHECK(single == std::vector<double>{100.0});
    const auto mean2 = loss_profile({a, b}, {100, 150});
    CHECK(mean2 == std::vector<double>{150.0, 225.0});
    CHECK_THROWS_AS(loss_profile({a}, {151}), DomainError);
}
