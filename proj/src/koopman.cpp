#include "cme/koopman.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cme/error.hpp"

namespace cme {

Eigen::MatrixXd koopman_matrix(const OperatorRep& U) {
    if (U.dict().dim_x() != U.dict().dim_y()) {
        throw InputError("koopman_matrix needs dim_x == dim_y, got " + std::to_string(U.dict().dim_x()) + " and " +
                         std::to_string(U.dict().dim_y()));
    }
    if (!(U.kernel_x() == U.kernel_y())) { throw InputError("koopman_matrix needs identical X and Y kernels"); }
    if (U.size() == 0) { return Eigen::MatrixXd(0, 0); }
    const Eigen::MatrixXd g_yx = cross_gram(U.kernel_x(), U.dict().ys(), U.dict().xs());
    return U.W().transpose() * g_yx;
}

namespace {

// Unit norm, and for real vectors the first entry above round-off made positive.
void normalize(Eigen::VectorXcd& v, bool real) {
    const double n = v.norm();
    if (n > 0.0) { v /= n; }
    if (!real) { return; }
    const double tiny = 1e-12 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i].real()) > tiny) {
            if (v[i].real() < 0.0) { v = -v; }
            break;
        }
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) { v[i] = {v[i].real(), 0.0}; }
}

}  // namespace

KoopmanSpectrum eigen_spectrum(const Eigen::MatrixXd& M, Eigen::Index k) {
    const Eigen::Index d = M.rows();
    if (M.cols() != d) { throw InputError("eigen_spectrum needs a square matrix"); }
    if (k < 0 || k > d) {
        throw InputError("eigen_spectrum: k = " + std::to_string(k) + " outside [0, " + std::to_string(d) + "]");
    }
    if (!M.allFinite()) { throw InputError("eigen_spectrum: matrix contains NaN or Inf"); }
    KoopmanSpectrum out;
    out.eigenvalues.resize(k);
    out.eigenvectors.resize(d, k);
    out.residuals.resize(k);
    if (k == 0) { return out; }

    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) { throw NumericalError("nonsymmetric eigensolver did not converge"); }
    const Eigen::VectorXcd& vals = es.eigenvalues();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ma = std::abs(vals[a]);
        const double mb = std::abs(vals[b]);
        if (ma != mb) { return ma > mb; }
        return vals[a].imag() > vals[b].imag();
    });

    const Eigen::MatrixXcd Mc = M.cast<std::complex<double>>();
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index j = order[static_cast<std::size_t>(i)];
        const std::complex<double> lam = vals[j];
        const bool real = lam.imag() == 0.0;
        Eigen::VectorXcd v = es.eigenvectors().col(j);
        normalize(v, real);
        out.eigenvalues[i] = real ? std::complex<double>(lam.real(), 0.0) : lam;
        out.eigenvectors.col(i) = v;
        out.residuals[i] = (Mc * v - out.eigenvalues[i] * v).norm() / (v.norm() * std::max(1.0, std::abs(lam)));
        if (!(out.residuals[i] <= 1e-6)) {
            throw NumericalError("eigenpair " + std::to_string(i) + " has residual " +
                                 std::to_string(out.residuals[i]));
        }
    }
    return out;
}

KoopmanSpectrum koopman_spectrum(const OperatorRep& U, Eigen::Index k) {
    KoopmanSpectrum spec = eigen_spectrum(koopman_matrix(U), std::min<Eigen::Index>(k, U.size()));
    spec.source_x = U.dict().xs();
    spec.kernel = U.kernel_x();
    return spec;
}

Eigen::VectorXcd eval_eigenfunction(const KoopmanSpectrum& spec, Eigen::Index index, const PointsRef& points) {
    if (index < 0 || index >= spec.eigenvectors.cols()) {
        throw InputError("eigenfunction index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(spec.eigenvectors.cols()) + ")");
    }
    if (spec.source_x.cols() != spec.eigenvectors.rows()) {
        throw InputError("spectrum has no dictionary matching its eigenvectors");
    }
    if (points.cols() > 0 && points.rows() != spec.source_x.rows()) {
        throw InputError("evaluation points have dimension " + std::to_string(points.rows()) + ", expected " +
                         std::to_string(spec.source_x.rows()));
    }
    if (points.cols() == 0 || spec.source_x.cols() == 0) { return Eigen::VectorXcd::Zero(points.cols()); }
    const Eigen::MatrixXd k_pd = cross_gram(spec.kernel, points, spec.source_x);
    return k_pd.cast<std::complex<double>>() * spec.eigenvectors.col(index);
}

namespace {

void require_grid(const GridSpec& grid) {
    if (grid.mins.size() != 2 || grid.maxs.size() != 2 || grid.counts.size() != 2) {
        throw UnsupportedInputError("grid evaluation supports 2-D grids only");
    }
    for (std::size_t a = 0; a < 2; ++a) {
        if (grid.counts[a] < 2) { throw InputError("grid counts must be at least 2 per axis"); }
        if (!std::isfinite(grid.mins[a]) || !std::isfinite(grid.maxs[a]) || !(grid.maxs[a] > grid.mins[a])) {
            throw InputError("grid axis " + std::to_string(a) + " needs finite min < max");
        }
    }
}

}  // namespace

Eigen::MatrixXd grid_points(const GridSpec& grid) {
    require_grid(grid);
    const Eigen::VectorXd x1 = Eigen::VectorXd::LinSpaced(grid.counts[0], grid.mins[0], grid.maxs[0]);
    const Eigen::VectorXd x2 = Eigen::VectorXd::LinSpaced(grid.counts[1], grid.mins[1], grid.maxs[1]);
    Eigen::MatrixXd pts(2, x1.size() * x2.size());
    for (Eigen::Index i = 0; i < x1.size(); ++i) {
        for (Eigen::Index j = 0; j < x2.size(); ++j) { pts.col(i * x2.size() + j) << x1[i], x2[j]; }
    }
    return pts;
}

GridField grid_eval(const KoopmanSpectrum& spec, Eigen::Index index, const GridSpec& grid) {
    require_grid(grid);
    if (spec.source_x.rows() != 2) { throw UnsupportedInputError("grid evaluation needs a 2-D state space"); }
    GridField field;
    field.x1 = Eigen::VectorXd::LinSpaced(grid.counts[0], grid.mins[0], grid.maxs[0]);
    field.x2 = Eigen::VectorXd::LinSpaced(grid.counts[1], grid.mins[1], grid.maxs[1]);
    field.values = eval_eigenfunction(spec, index, grid_points(grid));
    return field;
}

}  // namespace cme
