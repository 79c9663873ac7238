#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "cme/kernel.hpp"
#include "cme/operator_rep.hpp"

namespace cme {

/// Joint law over finitely many (x, y) state pairs, optionally generated by a
/// Markov transition matrix over x_states.
struct FiniteSpaceModel {
    Eigen::MatrixXd x_states;  // dim_x x n_x, column per state
    Eigen::MatrixXd y_states;  // dim_y x n_y
    Eigen::MatrixXd joint;     // n_x x n_y, rho(x_i, y_j)
    std::optional<Eigen::MatrixXd> transition;  // n_x x n_x row-stochastic

    /// Throws ModelError naming the first violated invariant.
    void validate() const;

    [[nodiscard]] Eigen::VectorXd x_marginal() const { return joint.rowwise().sum(); }

    /// Stationary chain model: y_states = states and joint = diag(pi) P.
    static FiniteSpaceModel from_chain(const Eigen::MatrixXd& states, const Eigen::MatrixXd& P);
};

/// Stationary law of a row-stochastic matrix, taken from the left
/// eigenvector whose eigenvalue is closest to 1. Throws ModelError unless
/// pi P = pi within 1e-10 with pi >= 0, and, when `require_unique`, if a
/// second eigenvalue equals 1.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P, bool require_unique = true);

struct BatchSolution {
    OperatorRep rep;
    std::size_t n = 0;
    double lambda = 0.0;
};

/// Regularized empirical CME operator over the full sample dictionary,
/// W = (G_X + n lambda I)^-1.
BatchSolution batch_solution(const Stream& samples, double lambda, const Kernel& kernel_x, const Kernel& kernel_y);

/// ||U C_XX - C_YX + lambda U||_HS for the empirical covariances of `samples`.
/// U must be expressed over exactly the sample dictionary.
double gradient_norm_gram(const OperatorRep& U, const Stream& samples, double lambda);

/// Population U_lambda = C_YX (C_XX + lambda Id)^-1 of a finite model.
/// The dictionary has max(n_x, n_y) atoms; atom k pairs x_states[min(k, n_x-1)]
/// with y_states[min(k, n_y-1)] and W is zero outside the n_y x n_x block.
OperatorRep exact_finite_cme(const FiniteSpaceModel& model, double lambda, const Kernel& kernel_x,
                             const Kernel& kernel_y);

double distance_to_oracle(const OperatorRep& U, const OperatorRep& ref);

}  // namespace cme
