#include "cme/kernel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "cme/error.hpp"

namespace cme {

Kernel Kernel::gaussian(double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw InputError("gaussian kernel bandwidth must be positive and finite");
    }
    Kernel k;
    k.family_ = Family::Gaussian;
    k.bandwidth_ = bandwidth;
    k.inv_two_bw_sq_ = 1.0 / (2.0 * bandwidth * bandwidth);
    k.bound_ = 1.0;
    k.name_ = "gaussian";
    return k;
}

Kernel Kernel::linear(double bound) {
    if (!(bound > 0.0) || !std::isfinite(bound)) { throw InputError("linear kernel bound must be positive and finite"); }
    Kernel k;
    k.family_ = Family::Linear;
    k.bandwidth_ = 0.0;
    k.bound_ = bound;
    k.name_ = "linear";
    return k;
}

Kernel Kernel::custom(std::string name, Function fn, double bound) {
    if (!fn) { throw InputError("custom kernel requires a callable"); }
    if (!(bound > 0.0) || !std::isfinite(bound)) { throw InputError("custom kernel bound must be positive and finite"); }
    Kernel k;
    k.family_ = Family::Custom;
    k.bandwidth_ = 0.0;
    k.bound_ = bound;
    k.name_ = std::move(name);
    k.fn_ = std::move(fn);
    return k;
}

double eval_kernel(const Kernel& k, const PointRef& a, const PointRef& b) {
    if (a.size() != b.size()) {
        throw InputError("kernel arguments have dimensions " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    }
    return k(a, b);
}

Eigen::MatrixXd gram_matrix(const Kernel& k, const PointsRef& points) {
    const Eigen::Index n = points.cols();
    if (n == 0) { throw InputError("gram_matrix requires at least one point"); }
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        g(j, j) = k(points.col(j), points.col(j));
        for (Eigen::Index i = j + 1; i < n; ++i) {
            g(i, j) = k(points.col(i), points.col(j));
            g(j, i) = g(i, j);
        }
    }
    return g;
}

Eigen::MatrixXd cross_gram(const Kernel& k, const PointsRef& rows, const PointsRef& cols) {
    if (rows.cols() == 0 || cols.cols() == 0) { throw InputError("cross_gram requires nonempty point sets"); }
    if (rows.rows() != cols.rows()) {
        throw InputError("cross_gram point dimensions differ: " + std::to_string(rows.rows()) + " vs " +
                         std::to_string(cols.rows()));
    }
    Eigen::MatrixXd g(rows.cols(), cols.cols());
    for (Eigen::Index j = 0; j < cols.cols(); ++j) {
        for (Eigen::Index i = 0; i < rows.cols(); ++i) { g(i, j) = k(rows.col(i), cols.col(j)); }
    }
    return g;
}

Eigen::VectorXd kernel_vector(const Kernel& k, const PointsRef& points, const PointRef& p) {
    if (points.cols() > 0 && points.rows() != p.size()) {
        throw InputError("kernel_vector point dimension " + std::to_string(p.size()) + " does not match " +
                         std::to_string(points.rows()));
    }
    Eigen::VectorXd v(points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j) { v[j] = k(points.col(j), p); }
    return v;
}

double inverse_residual(const Eigen::MatrixXd& G, double jitter, const Eigen::MatrixXd& inverse) {
    Eigen::MatrixXd a = G;
    a.diagonal().array() += jitter;
    const Eigen::Index d = G.rows();
    const double scale = a.norm() * inverse.norm();
    if (!(scale > 0.0)) { return 0.0; }
    return (a * inverse - Eigen::MatrixXd::Identity(d, d)).norm() / scale;
}

namespace {

constexpr double kResidualTol = 1e-8;
constexpr double kJitterCap = 1e-4;
constexpr double kJitterFloor = 1e-12;
constexpr double kSchurTol = 1e-12;

void require_symmetric(const Eigen::MatrixXd& G) {
    if (G.rows() != G.cols()) { throw InputError("matrix is not square"); }
    const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) { throw InputError("matrix is not symmetric"); }
}

// Factorizes G + jI for j = start, then escalating until the cap.
JitteredInverse invert_escalating(const Eigen::MatrixXd& G, double start) {
    const Eigen::Index d = G.rows();
    const double ref = G.trace() / static_cast<double>(d);
    if (!(ref > 0.0) || !std::isfinite(ref)) {
        throw NumericalError("Gram matrix has nonpositive or non-finite trace; cannot invert");
    }
    const double cap = kJitterCap * ref;
    double jitter = start;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    while (true) {
        Eigen::MatrixXd a = G;
        a.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd inv = llt.solve(eye);
            if (inv.allFinite() && inverse_residual(G, jitter, inv) <= kResidualTol) {
                return {std::move(inv), jitter};
            }
        }
        if (jitter >= cap) { break; }
        jitter = jitter == 0.0 ? kJitterFloor * ref : std::min(10.0 * jitter, cap);
    }
    throw NumericalError("Gram matrix is not factorizable even with jitter " + std::to_string(cap));
}

}  // namespace

JitteredInverse inverse_with_jitter(const Eigen::MatrixXd& G, double jitter_scale) {
    if (G.rows() == 0) { throw InputError("inverse_with_jitter requires a nonempty matrix"); }
    if (!(jitter_scale >= 0.0)) { throw InputError("jitter_scale must be nonnegative"); }
    require_symmetric(G);
    const double ref = G.trace() / static_cast<double>(G.rows());
    return invert_escalating(G, jitter_scale * ref);
}

Eigen::MatrixXd woodbury_append(const Eigen::MatrixXd& g_inv, const Eigen::VectorXd& new_column, double new_diag) {
    const Eigen::Index d = g_inv.rows();
    if (g_inv.cols() != d || new_column.size() != d) { throw InputError("woodbury_append: dimension mismatch"); }
    const Eigen::VectorXd a = g_inv * new_column;
    const double schur = new_diag - new_column.dot(a);
    if (!(schur > kSchurTol * new_diag) || !std::isfinite(schur)) {
        throw NumericalError("woodbury_append: degenerate Schur complement " + std::to_string(schur));
    }
    Eigen::MatrixXd out(d + 1, d + 1);
    out.topLeftCorner(d, d) = g_inv + (a / schur) * a.transpose();
    out.col(d).head(d) = -a / schur;
    out.row(d).head(d) = out.col(d).head(d).transpose();
    out(d, d) = 1.0 / schur;
    return out;
}

GramCache GramCache::build(const Kernel& k, const PointsRef& points, double jitter_scale, bool track_inverse) {
    GramCache cache(jitter_scale, track_inverse);
    if (points.cols() == 0) { return cache; }
    const Eigen::MatrixXd g = gram_matrix(k, points);
    cache.g_.assign(g);
    if (track_inverse) {
        JitteredInverse inv = inverse_with_jitter(g, jitter_scale);
        cache.jitter_ = inv.jitter;
        cache.g_inv_.assign(inv.inverse);
    } else {
        cache.jitter_ = jitter_scale * g.trace() / static_cast<double>(g.rows());
    }
    return cache;
}

void GramCache::append(const Eigen::VectorXd& new_column, double self_value,
                       const std::optional<Eigen::VectorXd>& inv_times_column) {
    const Eigen::Index d = g_.size();
    if (new_column.size() != d) { throw InputError("GramCache::append: column length does not match cache size"); }
    if (d == 0) { jitter_ = jitter_scale_ * self_value; }

    if (track_inverse_) {
        const double diag = self_value + jitter_;
        Eigen::VectorXd a = inv_times_column ? *inv_times_column : Eigen::VectorXd(g_inv_.view() * new_column);
        const double schur = diag - new_column.dot(a);
        if (schur > kSchurTol * diag && std::isfinite(schur)) {
            auto inv = g_inv_.view();
            inv.noalias() += (a / schur) * a.transpose();
            g_inv_.grow();
            for (Eigen::Index i = 0; i < d; ++i) {
                g_inv_(i, d) = -a[i] / schur;
                g_inv_(d, i) = -a[i] / schur;
            }
            g_inv_(d, d) = 1.0 / schur;
        } else {
            Eigen::MatrixXd bordered(d + 1, d + 1);
            bordered.topLeftCorner(d, d) = g_.view();
            bordered.col(d).head(d) = new_column;
            bordered.row(d).head(d) = new_column.transpose();
            bordered(d, d) = self_value;
            JitteredInverse inv = invert_escalating(bordered, jitter_);
            jitter_ = inv.jitter;
            g_inv_.assign(inv.inverse);
        }
    }

    g_.grow();
    for (Eigen::Index i = 0; i < d; ++i) {
        g_(i, d) = new_column[i];
        g_(d, i) = new_column[i];
    }
    g_(d, d) = self_value;
}

double GramCache::inverse_error() const {
    if (!track_inverse_ || g_.size() == 0) { return 0.0; }
    Eigen::MatrixXd a = g_.view();
    a.diagonal().array() += jitter_;
    return (a * g_inv_.view() - Eigen::MatrixXd::Identity(a.rows(), a.rows())).cwiseAbs().maxCoeff();
}

}  // namespace cme
