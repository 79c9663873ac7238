#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "cme/error.hpp"
#include "cme/online_learner.hpp"
#include "support/oracles.hpp"

using namespace cme;

namespace {

Stream random_stream(std::mt19937_64& gen, std::size_t n, Eigen::Index dim = 2, double spread = 1.5) {
    Stream s;
    for (std::size_t t = 0; t < n; ++t) {
        const Eigen::MatrixXd p = oracle::random_points(gen, dim, 2, -spread, spread);
        s.push_back({p.col(0), p.col(1)});
    }
    return s;
}

LearnerConfig base_config(double eps = 0.0, double bw = 0.5) {
    LearnerConfig c;
    c.lambda = 0.1;
    c.step = StepSchedule::constant(0.2);
    c.budget = eps > 0.0 ? BudgetSchedule::constant(eps) : BudgetSchedule::zero();
    c.kernel_x = Kernel::gaussian(bw);
    c.kernel_y = Kernel::gaussian(bw);
    return c;
}

// Dense pieces of one compression test built straight from kernel calls.
struct Dense {
    Eigen::MatrixXd W_tilde, Gx_big, Gy_big, Gbar_x, Gbar_y, Gx_inv, Gy_inv;
    std::optional<OperatorRep> expansion;
};

Dense dense_step(const LearnerState& st, const LearnerConfig& cfg, const Sample& s) {
    const OperatorRep U = st.rep();
    const Eigen::Index d = U.size();
    const double eta = cfg.step.at(st.t() + 1);
    Eigen::MatrixXd xs(U.dict().dim_x(), d + 1), ys(U.dict().dim_y(), d + 1);
    xs << U.dict().xs(), s.x;
    ys << U.dict().ys(), s.y;
    auto cross = [&](const Kernel& k, const Eigen::MatrixXd& big, const auto& small) {
        return d == 0 ? Eigen::MatrixXd(d + 1, 0) : cross_gram(k, big, small);
    };
    auto inv = [&](const Kernel& k, const auto& pts) {
        return d == 0 ? Eigen::MatrixXd(0, 0) : Eigen::MatrixXd(gram_matrix(k, pts).inverse());
    };
    Dense out{sgd_expand(U.W(), kernel_vector(cfg.kernel_x, U.dict().xs(), s.x), eta, cfg.lambda),
              gram_matrix(cfg.kernel_x, xs),
              gram_matrix(cfg.kernel_y, ys),
              cross(cfg.kernel_x, xs, U.dict().xs()),
              cross(cfg.kernel_y, ys, U.dict().ys()),
              inv(cfg.kernel_x, U.dict().xs()),
              inv(cfg.kernel_y, U.dict().ys()),
              std::nullopt};
    out.expansion = OperatorRep(Dictionary(xs, ys), out.W_tilde, cfg.kernel_x, cfg.kernel_y);
    return out;
}

}  // namespace

TEST_CASE("schedules") {
    CHECK(StepSchedule::constant(0.3).at(1000) == 0.3);
    const StepSchedule p = StepSchedule::polynomial(0.2, 50.0, 1.0);
    CHECK(p.at(50) == doctest::Approx(0.1));
    CHECK(p.at(0) == 0.2);
    CHECK(BudgetSchedule::zero().at(0.5) == 0.0);
    CHECK(BudgetSchedule::constant(0.05).at(0.5) == 0.05);
    CHECK(BudgetSchedule::coupled_quadratic(1.5).at(0.2) == doctest::Approx(0.06));
    CHECK(BudgetSchedule::coupled_cubic(2.0).at(0.2) == doctest::Approx(0.016));
    CHECK(BudgetSchedule::constant(0.0).always_zero());
    CHECK(!BudgetSchedule::coupled_cubic(2.0).always_zero());
}

TEST_CASE("config validation") {
    LearnerConfig c = base_config();
    CHECK_NOTHROW(c.validate());
    auto bad = [&](auto mutate) {
        LearnerConfig x = base_config();
        mutate(x);
        CHECK_THROWS_AS(x.validate(), ConfigError);
    };
    bad([](LearnerConfig& x) { x.lambda = 0.0; });
    bad([](LearnerConfig& x) { x.step = StepSchedule::constant(1.5); });
    bad([](LearnerConfig& x) {
        x.lambda = 4.0;
        x.step = StepSchedule::constant(0.5);
    });
    bad([](LearnerConfig& x) {
        x.lambda = 1.0;
        x.step = StepSchedule::constant(1.0);
    });
    bad([](LearnerConfig& x) { x.step = StepSchedule::polynomial(0.2, 50.0, 0.5); });
    bad([](LearnerConfig& x) { x.step = StepSchedule::polynomial(0.2, 50.0, 1.2); });
    bad([](LearnerConfig& x) { x.step = StepSchedule::polynomial(0.2, 0.0, 1.0); });
    bad([](LearnerConfig& x) { x.budget = BudgetSchedule::constant(-0.1); });
    bad([](LearnerConfig& x) { x.jitter_scale = -1.0; });
    bad([](LearnerConfig& x) { x.max_dictionary = 0; });
    CHECK_THROWS_AS(LearnerState(LearnerConfig{.lambda = -1.0}, 1, 1), ConfigError);
}

TEST_CASE("sgd_expand") {
    const Eigen::MatrixXd e0 = sgd_expand(Eigen::MatrixXd(0, 0), Eigen::VectorXd(0), 0.2, 0.1);
    CHECK(e0.rows() == 1);
    CHECK(e0(0, 0) == 0.2);

    const Eigen::MatrixXd e1 =
        sgd_expand(Eigen::MatrixXd::Constant(1, 1, 0.2), Eigen::VectorXd::Constant(1, 0.5), 0.2, 0.1);
    Eigen::Matrix2d expected;
    expected << 0.196, -0.02, 0.0, 0.2;
    CHECK((e1 - expected).cwiseAbs().maxCoeff() < 1e-15);

    std::mt19937_64 gen(1);
    const Eigen::MatrixXd W = oracle::random_matrix(gen, 4, 4);
    CHECK(sgd_expand(W, Eigen::VectorXd::Ones(4), 0.3, 0.0).topLeftCorner(4, 4) == W);
    const Eigen::MatrixXd e = sgd_expand(W, Eigen::VectorXd::Ones(4), 0.3, 0.1);
    CHECK(e.row(4).head(4).cwiseAbs().maxCoeff() == 0.0);

    Eigen::VectorXd nan = Eigen::VectorXd::Ones(4);
    nan[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_expand(W, nan, 0.3, 0.1), InputError);
    CHECK_THROWS_AS(sgd_expand(W, Eigen::VectorXd::Ones(3), 0.3, 0.1), InputError);
    CHECK_THROWS_AS(sgd_expand(W, Eigen::VectorXd::Ones(4), 1.0, 1.0), InputError);
}

TEST_CASE("compression_delta and project_coefficients on fixed instances") {
    const LearnerConfig cfg = base_config(0.5);
    std::mt19937_64 gen(2);
    const Stream s = random_stream(gen, 3);

    SUBCASE("empty span") {
        LearnerState st(cfg, 2, 2);
        const Dense D = dense_step(st, cfg, s[0]);
        const double delta = compression_delta(D.W_tilde, D.Gx_big, D.Gy_big, D.Gbar_y, Eigen::MatrixXd(0, 0),
                                               D.Gbar_x, Eigen::MatrixXd(0, 0));
        CHECK(delta == doctest::Approx(0.04).epsilon(1e-15));
    }
    SUBCASE("duplicate pair is exactly representable") {
        const LearnerConfig tight = base_config(1e-6);
        LearnerState st(tight, 2, 2);
        st.advance(tight, s[0]);
        st.advance(tight, s[1]);
        REQUIRE(st.dict().size() == 2);
        const Dense D = dense_step(st, tight, s[1]);
        const double delta =
            compression_delta(D.W_tilde, D.Gx_big, D.Gy_big, D.Gbar_y, D.Gy_inv, D.Gbar_x, D.Gx_inv);
        CHECK(delta == doctest::Approx(0.0).epsilon(1e-10));
        const Eigen::MatrixXd Z = project_coefficients(D.W_tilde, D.Gy_inv, D.Gbar_y, D.Gbar_x, D.Gx_inv);
        CHECK(hs_distance(st.rep().with_coefficients(Z), *D.expansion) <= 1e-8);
    }
    SUBCASE("d = 1 scalar closed form") {
        LearnerState st(cfg, 2, 2);
        st.advance(cfg, s[0]);
        const Dense D = dense_step(st, cfg, s[1]);
        const double z = (D.Gbar_y.transpose() * D.W_tilde * D.Gbar_x)(0, 0) / (1.0 * 1.0);
        const Eigen::MatrixXd Z = project_coefficients(D.W_tilde, D.Gy_inv, D.Gbar_y, D.Gbar_x, D.Gx_inv);
        CHECK(Z(0, 0) == doctest::Approx(z).epsilon(1e-14));
    }
    CHECK_THROWS_AS(project_coefficients(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(1, 1),
                                         Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(2, 1),
                                         Eigen::MatrixXd::Identity(1, 1)),
                    InputError);
}

TEST_CASE("compression_delta matches the dense least-squares residual") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 10; ++trial) {
        const LearnerConfig cfg = base_config(0.0, 0.9);
        LearnerState st(cfg, 2, 1);
        Stream s;
        for (int t = 0; t < 3; ++t) {
            s.push_back({oracle::random_points(gen, 2, 1).col(0), oracle::random_points(gen, 1, 1).col(0)});
        }
        st.advance(cfg, s[0]);
        st.advance(cfg, s[1]);
        const Dense D = dense_step(st, cfg, s[2]);
        const double delta =
            compression_delta(D.W_tilde, D.Gx_big, D.Gy_big, D.Gbar_y, D.Gy_inv, D.Gbar_x, D.Gx_inv);
        const OperatorRep U = st.rep();
        const oracle::LeastSquares ls = oracle::least_squares(U.dict().xs(), U.dict().ys(),
                                                              oracle::terms_of(*D.expansion), cfg.kernel_x,
                                                              cfg.kernel_y);
        CHECK(delta == doctest::Approx(ls.residual_sq).epsilon(1e-8).scale(1.0));
        const Eigen::MatrixXd Z = project_coefficients(D.W_tilde, D.Gy_inv, D.Gbar_y, D.Gbar_x, D.Gx_inv);
        CHECK(ls.objective(Z) <= ls.residual_sq + 1e-8);
    }
}

TEST_CASE("projection is a local minimum of the HS objective") {
    std::mt19937_64 gen(4);
    const LearnerConfig cfg = base_config(0.0, 0.9);
    LearnerState st(cfg, 2, 2);
    const Stream s = random_stream(gen, 4);
    for (int t = 0; t < 3; ++t) { st.advance(cfg, s[static_cast<std::size_t>(t)]); }
    const Dense D = dense_step(st, cfg, s[3]);
    const Eigen::MatrixXd Z = project_coefficients(D.W_tilde, D.Gy_inv, D.Gbar_y, D.Gbar_x, D.Gx_inv);
    const OperatorRep U = st.rep();
    const double best = std::pow(hs_distance(U.with_coefficients(Z), *D.expansion), 2);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::MatrixXd P = oracle::random_matrix(gen, 3, 3);
        P *= 1e-3 / P.norm();
        CHECK(std::pow(hs_distance(U.with_coefficients(Z + P), *D.expansion), 2) >= best - 1e-12);
    }
}

TEST_CASE("step basics") {
    const LearnerConfig cfg = base_config(0.05);
    LearnerState st(cfg, 2, 2);
    const Sample a{Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(-0.3, 0.4)};
    const LearnerState first = step(st, cfg, a);
    CHECK(first.t() == 1);
    CHECK(first.dict().size() == 1);
    CHECK(first.W()(0, 0) == 0.2);
    CHECK(first.stats().back().accepted);
    CHECK(st.t() == 0);

    const LearnerState second = step(first, cfg, a);
    CHECK(second.dict().size() == 1);
    CHECK(!second.stats().back().accepted);
    CHECK(second.stats().back().delta == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zero budget admits every new pair and folds exact duplicates") {
    const LearnerConfig cfg = base_config(0.0);
    std::mt19937_64 gen(5);
    const Stream s = random_stream(gen, 6);
    LearnerState st(cfg, 2, 2);
    for (const Sample& x : s) { st.advance(cfg, x); }
    CHECK(st.dict().size() == 6);
    CHECK(std::isnan(st.stats().back().delta));
    st.advance(cfg, s[2]);
    CHECK(st.dict().size() == 6);
    CHECK(st.stats().back().delta == 0.0);
    CHECK(!st.stats().back().accepted);
    CHECK(!st.gram_x().tracks_inverse());
}

TEST_CASE("constant stream converges to the scalar fixed point") {
    LearnerConfig cfg = base_config(0.0);
    const Stream s(400, Sample{Eigen::Vector2d(0.3, 0.3), Eigen::Vector2d(1.0, -1.0)});
    const RunResult r = run_stream(cfg, s);
    CHECK(r.checkpoints.empty());
    CHECK(r.state.dict().size() == 1);
    CHECK(r.state.W()(0, 0) == doctest::Approx(1.0 / (1.0 + cfg.lambda)).epsilon(1e-10));

    cfg.budget = BudgetSchedule::constant(1e-3);
    const RunResult tracked = run_stream(cfg, s);
    CHECK(tracked.state.W()(0, 0) == doctest::Approx(1.0 / (1.0 + cfg.lambda)).epsilon(1e-8));
}

TEST_CASE("run_stream checkpoints") {
    const LearnerConfig cfg = base_config(0.01);
    std::mt19937_64 gen(6);
    const Stream s = random_stream(gen, 2);
    const RunResult r = run_stream(cfg, s, {2, 1});
    REQUIRE(r.checkpoints.size() == 2);
    CHECK(r.checkpoints[0].t == 1);
    CHECK(r.checkpoints[0].rep.size() <= 1);
    CHECK(r.checkpoints[1].rep.size() <= 2);
    CHECK_THROWS_AS(run_stream(cfg, s, {3}), InputError);
    CHECK_THROWS_AS(run_stream(cfg, s, {0}), InputError);
    CHECK_THROWS_AS(run_stream(cfg, Stream{}), InputError);
}

TEST_CASE("invalid samples leave the state untouched") {
    const LearnerConfig cfg = base_config(0.01);
    LearnerState st(cfg, 2, 2);
    st.advance(cfg, {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)});
    CHECK_THROWS_AS(st.advance(cfg, {Eigen::Vector3d::Zero(), Eigen::Vector2d::Zero()}), InputError);
    CHECK_THROWS_AS(st.advance(cfg, {Eigen::Vector2d(std::nan(""), 0), Eigen::Vector2d::Zero()}), InputError);
    LearnerConfig other = cfg;
    other.kernel_x = Kernel::gaussian(2.0);
    CHECK_THROWS_AS(st.advance(other, {Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 1)}), InputError);
    CHECK(st.t() == 1);
    CHECK(st.stats().size() == 1);
}

TEST_CASE("capacity error carries the pre-step state") {
    for (const double eps : {0.0, 1e-6}) {
        LearnerConfig cfg = base_config(eps);
        cfg.max_dictionary = 3;
        std::mt19937_64 gen(7);
        const Stream s = random_stream(gen, 5);
        LearnerState st(cfg, 2, 2);
        for (int t = 0; t < 3; ++t) { st.advance(cfg, s[static_cast<std::size_t>(t)]); }
        try {
            st.advance(cfg, s[3]);
            FAIL("expected a capacity error");
        } catch (const CapacityError& e) {
            CHECK(e.state().t() == 3);
            CHECK(e.state().dict().size() == 3);
        }
        CHECK(st.t() == 3);
        CHECK(st.dict().size() == 3);
    }
}

TEST_CASE("tracked norm and structured delta agree with dense recomputation") {
    std::mt19937_64 gen(8);
    LearnerConfig cfg = base_config(0.03, 0.6);
    cfg.jitter_scale = 0.0;
    const Stream s = random_stream(gen, 60, 2, 1.0);
    LearnerState st(cfg, 2, 2);
    int rejected = 0;
    for (const Sample& x : s) {
        const bool first = st.t() == 0;
        const Dense D = first ? Dense{} : dense_step(st, cfg, x);
        const OperatorRep before = st.rep();
        st.advance(cfg, x);
        const StepRecord& r = st.stats().back();
        CHECK(r.hs_norm == doctest::Approx(std::sqrt(hs_norm_sq(st.rep()))).epsilon(1e-9));
        if (first) { continue; }
        const double delta =
            compression_delta(D.W_tilde, D.Gx_big, D.Gy_big, D.Gbar_y, D.Gy_inv, D.Gbar_x, D.Gx_inv);
        CHECK(r.delta == doctest::Approx(delta).epsilon(1e-9).scale(1.0));
        if (!r.accepted) {
            ++rejected;
            const Eigen::MatrixXd Z = project_coefficients(D.W_tilde, D.Gy_inv, D.Gbar_y, D.Gbar_x, D.Gx_inv);
            CHECK(hs_distance(st.rep(), before.with_coefficients(Z)) <= 1e-7);
        }
    }
    CHECK(rejected > 5);
    const Eigen::Index d = st.dict().size();
    CHECK(inverse_residual(gram_matrix(cfg.kernel_x, st.dict().xs()), st.gram_x().jitter(),
                           st.gram_x().G_inv()) <= 1e-8);
    CHECK(d == st.gram_x().size());
}

TEST_CASE("norm recursion holds on the zero-budget path") {
    std::mt19937_64 gen(9);
    const LearnerConfig cfg = base_config(0.0);
    Stream s = random_stream(gen, 40);
    s.push_back(s[5]);
    s.push_back(s[17]);
    LearnerState st(cfg, 2, 2);
    for (const Sample& x : s) {
        st.advance(cfg, x);
        CHECK(st.hs_norm() == doctest::Approx(std::sqrt(hs_norm_sq(st.rep()))).epsilon(1e-9));
    }
}

TEST_CASE("iterates stay within K / lambda") {
    std::mt19937_64 gen(10);
    for (const double eps : {0.0, 0.01, 0.1}) {
        for (const bool poly : {false, true}) {
            LearnerConfig cfg = base_config(eps);
            cfg.lambda = 0.5;
            if (poly) { cfg.step = StepSchedule::polynomial(1.0, 10.0, 0.75); }
            const Stream s = random_stream(gen, 300, 2, 0.7);
            LearnerState st(cfg, 2, 2);
            for (const Sample& x : s) {
                st.advance(cfg, x);
                CHECK(st.hs_norm() <= 1.0 / cfg.lambda + 1e-6);
            }
        }
    }
}

TEST_CASE("rejected steps stay within the budget of the uncompressed expansion") {
    std::mt19937_64 gen(11);
    for (const bool squared : {false, true}) {
        LearnerConfig cfg = base_config(0.05, 0.5);
        cfg.budget_squared = squared;
        const Stream s = random_stream(gen, 150, 2, 1.0);
        LearnerState st(cfg, 2, 2);
        int checked = 0;
        for (const Sample& x : s) {
            if (st.t() == 0) {
                st.advance(cfg, x);
                continue;
            }
            const Dense D = dense_step(st, cfg, x);
            st.advance(cfg, x);
            if (!st.stats().back().accepted) {
                ++checked;
                const double bound = squared ? std::sqrt(st.stats().back().eps) : st.stats().back().eps;
                CHECK(hs_distance(st.rep(), *D.expansion) <= bound + 1e-7);
            }
        }
        CHECK(checked > 10);
    }
}

TEST_CASE("larger budgets reject whatever smaller ones reject from the same state") {
    std::mt19937_64 gen(12);
    const LearnerConfig small = base_config(0.02);
    const LearnerConfig large = base_config(0.05);
    const Stream s = random_stream(gen, 200, 2, 1.0);
    LearnerState st(small, 2, 2);
    for (const Sample& x : s) {
        LearnerState probe = st;
        probe.advance(large, x);
        st.advance(small, x);
        if (!st.stats().back().accepted) { CHECK(!probe.stats().back().accepted); }
        CHECK(probe.stats().back().delta == st.stats().back().delta);
    }
}

TEST_CASE("budget_squared compares delta itself") {
    LearnerConfig cfg = base_config(0.1);
    const Sample a{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)};
    const Sample b{Eigen::Vector2d(3, 3), Eigen::Vector2d(3, 3)};
    LearnerState plain(cfg, 2, 2);
    plain.advance(cfg, a);
    plain.advance(cfg, b);
    const double delta = plain.stats().back().delta;
    REQUIRE(delta > 0.01);
    REQUIRE(delta <= 0.1);
    CHECK(plain.stats().back().accepted);
    cfg.budget_squared = true;
    LearnerState sq(cfg, 2, 2);
    sq.advance(cfg, a);
    sq.advance(cfg, b);
    CHECK(!sq.stats().back().accepted);
}

TEST_CASE("uncompressed run reproduces the literal recursion") {
    std::mt19937_64 gen(13);
    for (const bool poly : {false, true}) {
        LearnerConfig cfg = base_config(0.0);
        cfg.jitter_scale = 0.0;
        if (poly) { cfg.step = StepSchedule::polynomial(0.5, 20.0, 1.0); }
        const Stream s = random_stream(gen, 100);
        const RunResult r = run_stream(cfg, s);
        Eigen::MatrixXd xs(2, 100), ys(2, 100);
        std::vector<double> etas;
        for (int t = 0; t < 100; ++t) {
            xs.col(t) = s[static_cast<std::size_t>(t)].x;
            ys.col(t) = s[static_cast<std::size_t>(t)].y;
            etas.push_back(cfg.step.at(static_cast<std::size_t>(t + 1)));
        }
        const OperatorRep literal(Dictionary(xs, ys), oracle::literal_recursion(xs, ys, etas, cfg.lambda, cfg.kernel_x),
                                  cfg.kernel_x, cfg.kernel_y);
        CHECK(hs_distance(r.state.rep(), literal) <= 1e-8);
    }
}
