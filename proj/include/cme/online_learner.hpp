#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "cme/detail/growable.hpp"
#include "cme/error.hpp"
#include "cme/kernel.hpp"
#include "cme/operator_rep.hpp"

namespace cme {

/// Step sizes eta_t, t = 1, 2, ...
struct StepSchedule {
    enum class Kind { Constant, Polynomial };

    Kind kind = Kind::Constant;
    double eta0 = 0.1;
    double t0 = 1.0;
    double power = 1.0;

    static StepSchedule constant(double eta) { return {Kind::Constant, eta, 1.0, 1.0}; }
    /// eta_t = eta0 * (1 + t / t0)^(-power).
    static StepSchedule polynomial(double eta0, double t0, double power) {
        return {Kind::Polynomial, eta0, t0, power};
    }

    [[nodiscard]] double at(std::size_t t) const;
};

/// Compression budgets eps_t, possibly coupled to the step size.
struct BudgetSchedule {
    enum class Kind { Zero, Constant, CoupledQuadratic, CoupledCubic };

    Kind kind = Kind::Zero;
    double value = 0.0;  // eps for Constant, B_cmp for the coupled kinds

    static BudgetSchedule zero() { return {Kind::Zero, 0.0}; }
    static BudgetSchedule constant(double eps) { return {Kind::Constant, eps}; }
    /// eps_t = b * eta_t^2.
    static BudgetSchedule coupled_quadratic(double b) { return {Kind::CoupledQuadratic, b}; }
    /// eps_t = b * eta_t^3.
    static BudgetSchedule coupled_cubic(double b) { return {Kind::CoupledCubic, b}; }

    [[nodiscard]] double at(double eta) const;
    [[nodiscard]] bool always_zero() const { return kind == Kind::Zero || value == 0.0; }
};

struct LearnerConfig {
    double lambda = 0.01;
    StepSchedule step;
    BudgetSchedule budget;
    Kernel kernel_x = Kernel::gaussian(1.0);
    Kernel kernel_y = Kernel::gaussian(1.0);
    double jitter_scale = 1e-10;
    std::optional<std::size_t> max_dictionary;
    /// Compare Delta_t <= eps_t instead of sqrt(Delta_t) <= eps_t.
    bool budget_squared = false;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;
};

struct StepRecord {
    std::size_t t = 0;
    bool accepted = false;
    /// Squared HS residual of projecting the expansion onto the old
    /// dictionary. NaN when the budget is identically zero (not computed).
    double delta = 0.0;
    double eps = 0.0;
    double eta = 0.0;
    std::size_t dict_size = 0;
    double hs_norm = 0.0;
};

/// Dictionary, coefficients and Gram caches of a compressed learner run.
/// Copying a state takes a snapshot.
class LearnerState {
public:
    LearnerState(const LearnerConfig& cfg, Eigen::Index dim_x, Eigen::Index dim_y);

    [[nodiscard]] std::size_t t() const { return t_; }
    [[nodiscard]] const Dictionary& dict() const { return dict_; }
    [[nodiscard]] auto W() const { return W_.view(); }
    [[nodiscard]] const GramCache& gram_x() const { return gram_x_; }
    [[nodiscard]] const GramCache& gram_y() const { return gram_y_; }
    [[nodiscard]] const std::vector<StepRecord>& stats() const { return stats_; }
    /// HS norm tracked by exact rank-one recursions (no O(d^3) recomputation).
    [[nodiscard]] double hs_norm() const;

    [[nodiscard]] OperatorRep rep() const;

    /// One iteration of the compressed operator SGD. On error the state is
    /// left unchanged.
    void advance(const LearnerConfig& cfg, const Sample& sample);

private:
    void advance_tracked(const LearnerConfig& cfg, const Sample& sample, double eta, double eps);
    void advance_untracked(const LearnerConfig& cfg, const Sample& sample, double eta, double eps);
    void admit_border(const Sample& sample, const Eigen::VectorXd& b, double eta, const Eigen::VectorXd& k_x,
                      double kxx, const Eigen::VectorXd& k_y, double kyy, const std::optional<Eigen::VectorXd>& a_x,
                      const std::optional<Eigen::VectorXd>& a_y);
    void check_capacity(const LearnerConfig& cfg) const;

    Kernel kernel_x_;
    Kernel kernel_y_;
    Dictionary dict_;
    detail::GrowableSquare W_;
    GramCache gram_x_;
    GramCache gram_y_;
    std::size_t t_ = 0;
    double norm_sq_ = 0.0;
    std::vector<StepRecord> stats_;
};

/// Raised when admitting a sample would exceed max_dictionary. Carries the
/// state as it was before the offending step.
class CapacityError : public Error {
public:
    CapacityError(const std::string& what, std::shared_ptr<const LearnerState> state)
        : Error(what), state_(std::move(state)) {}

    [[nodiscard]] const LearnerState& state() const { return *state_; }

private:
    std::shared_ptr<const LearnerState> state_;
};

/// Coefficients of U - eta (U C_x - C_yx + lambda U) for one sample over the
/// dictionary extended by that sample: top-left (1 - lambda eta) W, new
/// column -eta W k_x, bottom-right eta.
Eigen::MatrixXd sgd_expand(const Eigen::MatrixXd& W, const Eigen::VectorXd& k_x_new, double eta, double lambda);

/// Squared HS distance between the expansion Psi~ W~ Phi~^T and its
/// best approximation over the old dictionary, in Gram form:
///   Tr(W~^T G~_Y W~ G~_X) - 2 Tr(W~^T Gbar_Y Z Gbar_X^T) + Tr(Z^T G_Y Z G_X)
/// with Z = project_coefficients(...). G~ are (d+1)-sized Grams, Gbar are the
/// (d+1) x d cross-Grams against the old atoms, inverses are d x d.
double compression_delta(const Eigen::MatrixXd& W_tilde, const Eigen::MatrixXd& G_x_big,
                         const Eigen::MatrixXd& G_y_big, const Eigen::MatrixXd& Gbar_y, const Eigen::MatrixXd& Gy_inv,
                         const Eigen::MatrixXd& Gbar_x, const Eigen::MatrixXd& Gx_inv);

/// Z = G_Y^-1 Gbar_Y^T W~ Gbar_X G_X^-1.
Eigen::MatrixXd project_coefficients(const Eigen::MatrixXd& W_tilde, const Eigen::MatrixXd& Gy_inv,
                                     const Eigen::MatrixXd& Gbar_y, const Eigen::MatrixXd& Gbar_x,
                                     const Eigen::MatrixXd& Gx_inv);

/// Value-semantics wrapper around LearnerState::advance.
LearnerState step(LearnerState state, const LearnerConfig& cfg, const Sample& sample);

struct Checkpoint {
    std::size_t t = 0;
    OperatorRep rep;
};

struct RunResult {
    LearnerState state;
    std::vector<Checkpoint> checkpoints;
};

/// Folds `step` over the stream, snapshotting the operator after each step
/// listed in `checkpoints` (1-based).
RunResult run_stream(const LearnerConfig& cfg, const Stream& samples, const std::vector<std::size_t>& checkpoints = {});

}  // namespace cme
