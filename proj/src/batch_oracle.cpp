#include "cme/batch_oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

#include "cme/error.hpp"

namespace cme {

namespace {

constexpr double kProbTol = 1e-12;

void require_probabilities(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) { throw ModelError(std::string(what) + " contains NaN or Inf"); }
    if (m.size() > 0 && m.minCoeff() < 0.0) { throw ModelError(std::string(what) + " has negative entries"); }
}

}  // namespace

void FiniteSpaceModel::validate() const {
    const Eigen::Index nx = x_states.cols();
    const Eigen::Index ny = y_states.cols();
    if (nx == 0 || ny == 0) { throw ModelError("finite model needs at least one x state and one y state"); }
    if (x_states.rows() == 0 || y_states.rows() == 0) { throw ModelError("finite model states have zero dimension"); }
    if (!x_states.allFinite() || !y_states.allFinite()) { throw ModelError("finite model states must be finite"); }
    if (joint.rows() != nx || joint.cols() != ny) {
        throw ModelError("joint is " + std::to_string(joint.rows()) + "x" + std::to_string(joint.cols()) +
                         ", expected " + std::to_string(nx) + "x" + std::to_string(ny));
    }
    require_probabilities(joint, "joint");
    if (std::abs(joint.sum() - 1.0) > kProbTol) { throw ModelError("joint entries must sum to 1"); }
    if (transition) {
        const Eigen::MatrixXd& P = *transition;
        if (P.rows() != nx || P.cols() != nx) { throw ModelError("transition must be n_x x n_x"); }
        require_probabilities(P, "transition");
        for (Eigen::Index i = 0; i < nx; ++i) {
            if (std::abs(P.row(i).sum() - 1.0) > kProbTol) {
                throw ModelError("transition row " + std::to_string(i) + " does not sum to 1");
            }
        }
        if (ny != nx || y_states != x_states) { throw ModelError("a chain model needs identical x and y states"); }
    }
}

FiniteSpaceModel FiniteSpaceModel::from_chain(const Eigen::MatrixXd& states, const Eigen::MatrixXd& P) {
    const Eigen::VectorXd pi = stationary_distribution(P);
    FiniteSpaceModel m;
    m.x_states = states;
    m.y_states = states;
    m.joint = pi.asDiagonal() * P;
    m.joint /= m.joint.sum();
    m.transition = P;
    m.validate();
    return m;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P, bool require_unique) {
    const Eigen::Index n = P.rows();
    if (n == 0 || P.cols() != n) { throw ModelError("transition matrix must be square and nonempty"); }
    Eigen::EigenSolver<Eigen::MatrixXd> es(P.transpose());
    if (es.info() != Eigen::Success) { throw ModelError("eigensolver failed on the transition matrix"); }
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        if (std::abs(es.eigenvalues()[i] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) { best = i; }
    }
    // Another eigenvalue at 1 means the stationary law is not unique.
    for (Eigen::Index i = 0; i < n; ++i) {
        if (require_unique && i != best && std::abs(es.eigenvalues()[i] - 1.0) < 1e-9) {
            throw ModelError("chain has more than one stationary distribution");
        }
    }
    Eigen::VectorXd pi = es.eigenvectors().col(best).real();
    pi /= pi.sum();
    if (!pi.allFinite() || pi.minCoeff() < -1e-12) { throw ModelError("stationary vector is not a distribution"); }
    pi = pi.cwiseMax(0.0);
    pi /= pi.sum();
    if ((pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw ModelError("stationary vector fails pi P = pi within 1e-10");
    }
    return pi;
}

BatchSolution batch_solution(const Stream& samples, double lambda, const Kernel& kernel_x, const Kernel& kernel_y) {
    if (samples.empty()) { throw InputError("batch_solution requires at least one sample"); }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) { throw InputError("batch_solution: lambda must be positive"); }
    const auto n = static_cast<Eigen::Index>(samples.size());
    Dictionary dict(samples.front().x.size(), samples.front().y.size());
    for (const Sample& s : samples) { dict.append(s.x, s.y); }
    dict = dict.compact();

    Eigen::MatrixXd a = gram_matrix(kernel_x, dict.xs());
    a.diagonal().array() += static_cast<double>(n) * lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) { throw NumericalError("G_X + n lambda I is not positive definite"); }
    Eigen::MatrixXd W = llt.solve(Eigen::MatrixXd::Identity(n, n));
    W = 0.5 * (W + W.transpose()).eval();
    return {OperatorRep(std::move(dict), std::move(W), kernel_x, kernel_y), samples.size(), lambda};
}

double gradient_norm_gram(const OperatorRep& U, const Stream& samples, double lambda) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (n == 0 || U.size() != n) { throw InputError("gradient_norm_gram: dictionary does not match the samples"); }
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& s = samples[static_cast<std::size_t>(i)];
        if (s.x.size() != U.dict().dim_x() || s.y.size() != U.dict().dim_y() || U.dict().x(i) != s.x ||
            U.dict().y(i) != s.y) {
            throw InputError("gradient_norm_gram: dictionary atom " + std::to_string(i) + " differs from the sample");
        }
    }
    const Eigen::MatrixXd gx = gram_matrix(U.kernel_x(), U.dict().xs());
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd V = inv_n * (U.W() * gx) + lambda * U.W();
    V.diagonal().array() -= inv_n;
    return std::sqrt(hs_norm_sq(U.with_coefficients(std::move(V))));
}

OperatorRep exact_finite_cme(const FiniteSpaceModel& model, double lambda, const Kernel& kernel_x,
                             const Kernel& kernel_y) {
    model.validate();
    if (!(lambda > 0.0) || !std::isfinite(lambda)) { throw InputError("exact_finite_cme: lambda must be positive"); }
    const Eigen::Index nx = model.x_states.cols();
    const Eigen::Index ny = model.y_states.cols();

    // U = Psi rho^T Phi^T (Phi D Phi^T + lambda)^-1 = Psi [rho^T (G_X D + lambda)^-1] Phi^T.
    const Eigen::MatrixXd gx = gram_matrix(kernel_x, model.x_states);
    Eigen::MatrixXd mt = model.x_marginal().asDiagonal() * gx;
    mt.diagonal().array() += lambda;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(mt);
    const Eigen::MatrixXd C = lu.solve(model.joint).transpose();  // n_y x n_x
    if (!C.allFinite()) { throw NumericalError("exact_finite_cme: singular weighted Gram system"); }

    const Eigen::Index m = std::max(nx, ny);
    Dictionary dict(model.x_states.rows(), model.y_states.rows());
    for (Eigen::Index k = 0; k < m; ++k) {
        dict.append(model.x_states.col(std::min(k, nx - 1)), model.y_states.col(std::min(k, ny - 1)));
    }
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
    W.topLeftCorner(ny, nx) = C;
    return OperatorRep(dict.compact(), std::move(W), kernel_x, kernel_y);
}

double distance_to_oracle(const OperatorRep& U, const OperatorRep& ref) { return hs_distance(U, ref); }

}  // namespace cme
