#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "cme/error.hpp"
#include "cme/kernel.hpp"
#include "support/oracles.hpp"

using namespace cme;

TEST_CASE("gaussian kernel closed forms") {
    const Kernel k = Kernel::gaussian(0.3);
    const Eigen::Vector2d a(1.0, 0.0);
    CHECK(eval_kernel(k, a, a) == 1.0);
    CHECK(eval_kernel(k, Eigen::Vector2d(0, 0), Eigen::Vector2d(0.3, 0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    const double far = eval_kernel(k, Eigen::Vector2d(0, 0), Eigen::Vector2d(10, 0));
    CHECK(far >= 0.0);
    CHECK(far < 1e-200);
    CHECK(k.bound() == 1.0);
}

TEST_CASE("kernel argument checks") {
    CHECK_THROWS_AS(eval_kernel(Kernel::gaussian(1.0), Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0)), InputError);
    CHECK_THROWS_AS(Kernel::gaussian(0.0), InputError);
    CHECK_THROWS_AS(Kernel::gaussian(-1.0), InputError);
    CHECK_THROWS_AS(Kernel::linear(0.0), InputError);
    CHECK_THROWS_AS(Kernel::custom("none", nullptr, 1.0), InputError);
}

TEST_CASE("kernels are bitwise symmetric and gaussian values lie in (0, 1]") {
    std::mt19937_64 gen(11);
    const Kernel g = Kernel::gaussian(0.7);
    const Kernel l = Kernel::linear(16.0);
    const Eigen::MatrixXd p = oracle::random_points(gen, 3, 40, -1.0, 1.0);
    for (Eigen::Index i = 0; i < p.cols(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            CHECK(eval_kernel(g, p.col(i), p.col(j)) == eval_kernel(g, p.col(j), p.col(i)));
            CHECK(eval_kernel(l, p.col(i), p.col(j)) == eval_kernel(l, p.col(j), p.col(i)));
            const double v = eval_kernel(g, p.col(i), p.col(j));
            CHECK(v > 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("custom kernel delegates to its callable") {
    const Kernel k = Kernel::custom(
        "laplace", [](const PointRef& a, const PointRef& b) { return std::exp(-(a - b).lpNorm<1>()); }, 1.0);
    CHECK(eval_kernel(k, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)) == doctest::Approx(std::exp(-2.0)));
    CHECK(k.family() == Kernel::Family::Custom);
}

TEST_CASE("gram_matrix") {
    const Kernel k = Kernel::gaussian(0.5);
    SUBCASE("single point") {
        const Eigen::MatrixXd g = gram_matrix(k, Eigen::Vector2d(0.3, -1.0));
        CHECK(g.rows() == 1);
        CHECK(g(0, 0) == 1.0);
    }
    SUBCASE("duplicate points") {
        Eigen::MatrixXd p(2, 2);
        p << 0.3, 0.3, 1.0, 1.0;
        CHECK(gram_matrix(k, p) == Eigen::MatrixXd::Ones(2, 2));
    }
    SUBCASE("entrywise and PSD") {
        std::mt19937_64 gen(5);
        const Eigen::MatrixXd p = oracle::random_points(gen, 2, 5);
        const Eigen::MatrixXd g = gram_matrix(k, p);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) { CHECK(g(i, j) == eval_kernel(k, p.col(i), p.col(j))); }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
    SUBCASE("empty") { CHECK_THROWS_AS(gram_matrix(k, Eigen::MatrixXd(2, 0)), InputError); }
}

TEST_CASE("gram_matrix smallest eigenvalue is bounded below on random sets") {
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd p = oracle::random_points(gen, 2, 30, -0.5, 0.5);
        const Eigen::MatrixXd g = gram_matrix(Kernel::gaussian(0.8), p);
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * g.trace());
    }
}

TEST_CASE("cross_gram") {
    const Kernel k = Kernel::gaussian(0.5);
    std::mt19937_64 gen(8);
    const Eigen::MatrixXd p = oracle::random_points(gen, 2, 6);
    CHECK(cross_gram(k, p, p) == gram_matrix(k, p));
    const Eigen::MatrixXd one = cross_gram(k, p.col(0), p.col(1));
    CHECK(one(0, 0) == eval_kernel(k, p.col(0), p.col(1)));
    CHECK(cross_gram(k, p.leftCols(3), p) == gram_matrix(k, p).topRows(3));
    CHECK_THROWS_AS(cross_gram(k, p, Eigen::MatrixXd::Zero(3, 2)), InputError);
    CHECK_THROWS_AS(cross_gram(k, p, Eigen::MatrixXd(2, 0)), InputError);
}

TEST_CASE("kernel_vector matches cross_gram column") {
    std::mt19937_64 gen(9);
    const Kernel k = Kernel::gaussian(0.6);
    const Eigen::MatrixXd p = oracle::random_points(gen, 2, 7);
    const Eigen::Vector2d q(0.1, 0.2);
    CHECK(kernel_vector(k, p, q) == cross_gram(k, p, q).col(0));
    CHECK(kernel_vector(k, Eigen::MatrixXd(2, 0), q).size() == 0);
}

TEST_CASE("inverse_with_jitter") {
    SUBCASE("identity") {
        const JitteredInverse r = inverse_with_jitter(Eigen::MatrixXd::Identity(3, 3), 0.0);
        CHECK(r.jitter == 0.0);
        CHECK((r.inverse - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("rank deficient ones") {
        const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(2, 2);
        const JitteredInverse r = inverse_with_jitter(G, 1e-10);
        CHECK(r.jitter >= 1e-10);
        CHECK(r.inverse.allFinite());
        CHECK(inverse_residual(G, r.jitter, r.inverse) <= 1e-8);
    }
    SUBCASE("random SPD") {
        std::mt19937_64 gen(3);
        const Eigen::MatrixXd A = oracle::random_matrix(gen, 10, 10);
        const Eigen::MatrixXd G = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(10, 10);
        const JitteredInverse r = inverse_with_jitter(G, 0.0);
        CHECK((r.inverse * G - Eigen::MatrixXd::Identity(10, 10)).norm() <= 1e-8);
    }
    SUBCASE("escalation starts from zero jitter") {
        Eigen::MatrixXd G = Eigen::MatrixXd::Ones(3, 3);
        const JitteredInverse r = inverse_with_jitter(G, 0.0);
        CHECK(r.jitter > 0.0);
        CHECK(r.jitter <= 1e-4);
        CHECK(inverse_residual(G, r.jitter, r.inverse) <= 1e-8);
    }
    SUBCASE("neither symmetric nor factorizable") {
        Eigen::MatrixXd ns(2, 2);
        ns << 1, 0.5, 0, 1;
        CHECK_THROWS_AS(inverse_with_jitter(ns, 0.0), InputError);
        CHECK_THROWS_AS(inverse_with_jitter(-Eigen::MatrixXd::Identity(2, 2), 0.0), NumericalError);
        Eigen::MatrixXd indefinite(2, 2);
        indefinite << 1, 0, 0, -1;
        CHECK_THROWS_AS(inverse_with_jitter(indefinite, 1e-10), NumericalError);
    }
}

TEST_CASE("woodbury_append") {
    SUBCASE("block diagonal") {
        const Eigen::MatrixXd r = woodbury_append(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), 1.0);
        CHECK((r - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("2x2 closed form") {
        const Eigen::MatrixXd r = woodbury_append(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Constant(1, 0.5), 1.0);
        Eigen::Matrix2d expected;
        expected << 1.0, -0.5, -0.5, 1.0;
        expected /= 0.75;
        CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("degenerate Schur complement") {
        CHECK_THROWS_AS(woodbury_append(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Ones(1), 1.0),
                        NumericalError);
    }
    SUBCASE("sequential appends match direct inverse") {
        std::mt19937_64 gen(21);
        const Kernel k = Kernel::gaussian(0.5);
        const Eigen::MatrixXd p = oracle::random_points(gen, 2, 50);
        for (const int n : {20, 50}) {
            const double jitter = 1e-10;
            Eigen::MatrixXd inv = Eigen::MatrixXd::Constant(1, 1, 1.0 / (1.0 + jitter));
            for (int d = 1; d < n; ++d) {
                inv = woodbury_append(inv, kernel_vector(k, p.leftCols(d), p.col(d)), 1.0 + jitter);
            }
            Eigen::MatrixXd G = gram_matrix(k, p.leftCols(n));
            G.diagonal().array() += jitter;
            const Eigen::MatrixXd direct = G.fullPivLu().inverse();
            CHECK((inv - direct).norm() / direct.norm() <= 1e-8);
        }
    }
}

TEST_CASE("GramCache tracks G and its inverse under appends") {
    std::mt19937_64 gen(4);
    const Kernel k = Kernel::gaussian(0.4);
    const Eigen::MatrixXd p = oracle::random_points(gen, 2, 30);
    GramCache cache(1e-10, true);
    for (Eigen::Index d = 0; d < p.cols(); ++d) {
        cache.append(kernel_vector(k, p.leftCols(d), p.col(d)), 1.0, std::nullopt);
    }
    CHECK(cache.size() == 30);
    CHECK(cache.jitter() == doctest::Approx(1e-10));
    CHECK(Eigen::MatrixXd(cache.G()) == gram_matrix(k, p));
    CHECK(inverse_residual(gram_matrix(k, p), cache.jitter(), cache.G_inv()) <= 1e-8);

    const GramCache built = GramCache::build(k, p, 1e-10, true);
    CHECK((Eigen::MatrixXd(built.G_inv()) - Eigen::MatrixXd(cache.G_inv())).norm() /
              Eigen::MatrixXd(built.G_inv()).norm() <=
          1e-8);
}

TEST_CASE("GramCache falls back to refactorization on duplicates") {
    const Kernel k = Kernel::gaussian(1.0);
    GramCache cache(0.0, true);
    const Eigen::Vector2d a(0.0, 0.0);
    cache.append(Eigen::VectorXd(0), 1.0, std::nullopt);
    cache.append(Eigen::VectorXd::Constant(1, 1.0), 1.0, std::nullopt);
    CHECK(cache.size() == 2);
    CHECK(cache.jitter() > 0.0);
    CHECK(inverse_residual(cache.G(), cache.jitter(), cache.G_inv()) <= 1e-8);
    CHECK(eval_kernel(k, a, a) == 1.0);
}

TEST_CASE("GramCache without inverse tracking") {
    GramCache cache(1e-10, false);
    cache.append(Eigen::VectorXd(0), 1.0, std::nullopt);
    cache.append(Eigen::VectorXd::Constant(1, 1.0), 1.0, std::nullopt);
    CHECK(cache.size() == 2);
    CHECK(!cache.tracks_inverse());
    CHECK(cache.inverse_error() == 0.0);
    CHECK_THROWS_AS(cache.append(Eigen::VectorXd::Zero(5), 1.0, std::nullopt), InputError);
}
