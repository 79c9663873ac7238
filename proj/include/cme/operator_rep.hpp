#pragma once

#include <Eigen/Core>

#include <vector>

#include "cme/kernel.hpp"

namespace cme {

/// One streaming observation: input state x and its successor/response y.
struct Sample {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

using Stream = std::vector<Sample>;

/// Append-only list of (x, y) atoms shared by the input and output
/// expansions. Atoms are stored column-wise with spare capacity so learners
/// can grow it in amortized O(dim).
class Dictionary {
public:
    Dictionary() = default;
    Dictionary(Eigen::Index dim_x, Eigen::Index dim_y);
    /// Builds from column-wise atoms; xs and ys must have equal column counts.
    Dictionary(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys);

    [[nodiscard]] Eigen::Index size() const { return n_; }
    [[nodiscard]] bool empty() const { return n_ == 0; }
    [[nodiscard]] Eigen::Index dim_x() const { return dim_x_; }
    [[nodiscard]] Eigen::Index dim_y() const { return dim_y_; }

    [[nodiscard]] auto xs() const { return xs_.leftCols(n_); }
    [[nodiscard]] auto ys() const { return ys_.leftCols(n_); }
    [[nodiscard]] auto x(Eigen::Index i) const { return xs_.col(i); }
    [[nodiscard]] auto y(Eigen::Index i) const { return ys_.col(i); }

    void append(const PointRef& x, const PointRef& y);

    /// Copy without spare capacity.
    [[nodiscard]] Dictionary compact() const;

    /// Bitwise equality of dimensions and atoms.
    bool operator==(const Dictionary& other) const;

private:
    Eigen::Index dim_x_ = 0;
    Eigen::Index dim_y_ = 0;
    Eigen::Index n_ = 0;
    Eigen::MatrixXd xs_;
    Eigen::MatrixXd ys_;
};

/// Hilbert-Schmidt operator U = sum_ij W(i,j) k_Y(y_i, .) (x) k_X(x_j, .),
/// i.e. U = Psi_Y W Phi_X^T over a shared dictionary. Immutable.
class OperatorRep {
public:
    OperatorRep(Dictionary dict, Eigen::MatrixXd W, Kernel kernel_x, Kernel kernel_y);

    /// Operator with an empty dictionary.
    static OperatorRep zero(Eigen::Index dim_x, Eigen::Index dim_y, Kernel kernel_x, Kernel kernel_y);

    [[nodiscard]] const Dictionary& dict() const { return dict_; }
    [[nodiscard]] const Eigen::MatrixXd& W() const { return W_; }
    [[nodiscard]] const Kernel& kernel_x() const { return kernel_x_; }
    [[nodiscard]] const Kernel& kernel_y() const { return kernel_y_; }
    [[nodiscard]] Eigen::Index size() const { return dict_.size(); }

    /// Same dictionary and kernels, new coefficients.
    [[nodiscard]] OperatorRep with_coefficients(Eigen::MatrixXd W) const;
    [[nodiscard]] OperatorRep scaled(double alpha) const;

private:
    Dictionary dict_;
    Eigen::MatrixXd W_;
    Kernel kernel_x_;
    Kernel kernel_y_;
};

/// Empirical mean embedding sum_k weights_k k_X(anchor_k, .).
struct KmeWeights {
    Eigen::MatrixXd anchors;  // dim_x x m, one anchor per column
    Eigen::VectorXd weights;
};

/// ||U||_HS^2 = Tr(W^T G_Y W G_X).
double hs_norm_sq(const OperatorRep& U);
/// <A, B>_HS = Tr(W_A^T G_Y^{AB} W_B G_X^{BA}).
double hs_inner(const OperatorRep& A, const OperatorRep& B);
double hs_distance(const OperatorRep& A, const OperatorRep& B);

/// Expansion coefficients c = W k_x of mu(x) = sum_i c_i k_Y(y_i, .).
Eigen::VectorXd predict_coefficients(const OperatorRep& U, const PointRef& x);

/// sum_i c_i f(y_i). Exact for f in span{k_Y(y_i, .)} evaluated through
/// the reproducing property; an approximation for general f.
double conditional_expectation(const OperatorRep& U, const Eigen::VectorXd& f_at_dict_y, const PointRef& x);

/// Coefficients b = W K_{Dz} a of the propagated embedding sum_i b_i k_Y(y_i, .).
Eigen::VectorXd propagate_kme(const OperatorRep& U, const KmeWeights& m);

}  // namespace cme
