#pragma once

#include <Eigen/Core>

#include <complex>
#include <vector>

#include "cme/kernel.hpp"
#include "cme/operator_rep.hpp"

namespace cme {

/// Leading eigenpairs of a finite Koopman matrix. Eigenvectors are
/// dictionary coefficients; the eigenfunction of column i is
/// phi_i(p) = sum_j v_ij k_X(x_j, p).
struct KoopmanSpectrum {
    Eigen::VectorXcd eigenvalues;   // descending modulus
    Eigen::MatrixXcd eigenvectors;  // d x k
    Eigen::VectorXd residuals;      // ||M v - lambda v|| / (||v|| max(1, |lambda|))
    Eigen::MatrixXd source_x;       // dictionary x atoms, dim_x x d
    Kernel kernel = Kernel::gaussian(1.0);
};

/// W^T G_YX with G_YX(i, j) = k(y_i, x_j). Requires dim_x == dim_y and a
/// single kernel for both sides.
Eigen::MatrixXd koopman_matrix(const OperatorRep& U);

/// Top-k eigenpairs of M by modulus. Ties in modulus put the eigenvalue with
/// positive imaginary part first so conjugate pairs stay adjacent.
KoopmanSpectrum eigen_spectrum(const Eigen::MatrixXd& M, Eigen::Index k);

/// Same as above with the dictionary and kernel needed for evaluation.
KoopmanSpectrum koopman_spectrum(const OperatorRep& U, Eigen::Index k);

Eigen::VectorXcd eval_eigenfunction(const KoopmanSpectrum& spec, Eigen::Index index, const PointsRef& points);

struct GridSpec {
    std::vector<double> mins;
    std::vector<double> maxs;
    std::vector<Eigen::Index> counts;
};

/// Eigenfunction values over a 2-D grid, row-major with the first axis
/// slowest: node (i, j) sits at (x1_i, x2_j) and is stored at i * counts[1] + j.
struct GridField {
    Eigen::VectorXd x1;
    Eigen::VectorXd x2;
    Eigen::VectorXcd values;
};

GridField grid_eval(const KoopmanSpectrum& spec, Eigen::Index index, const GridSpec& grid);

/// Grid nodes as columns, in the order used by grid_eval.
Eigen::MatrixXd grid_points(const GridSpec& grid);

}  // namespace cme
