#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "cme/detail/growable.hpp"

namespace cme {

using Point = Eigen::VectorXd;
/// Point sets are stored column-wise: one column per point.
using PointRef = Eigen::Ref<const Eigen::VectorXd>;
using PointsRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Bounded positive-definite kernel with sup_x k(x,x) <= bound().
class Kernel {
public:
    enum class Family { Gaussian, Linear, Custom };
    using Function = std::function<double(const PointRef&, const PointRef&)>;

    /// exp(-|a-b|^2 / (2 bandwidth^2)); bound 1.
    static Kernel gaussian(double bandwidth);
    /// a.b, with a caller-supplied bound on a.a over the data domain.
    static Kernel linear(double bound);
    /// User kernel. `name` identifies it for equality checks.
    static Kernel custom(std::string name, Function fn, double bound);

    [[nodiscard]] Family family() const { return family_; }
    [[nodiscard]] double bandwidth() const { return bandwidth_; }
    [[nodiscard]] double bound() const { return bound_; }
    [[nodiscard]] const std::string& name() const { return name_; }

    /// Kernel value without dimension checks; hot path.
    [[nodiscard]] double operator()(const PointRef& a, const PointRef& b) const {
        switch (family_) {
            case Family::Gaussian: {
                double r = 0.0;
                for (Eigen::Index i = 0; i < a.size(); ++i) {
                    const double diff = a[i] - b[i];
                    r += diff * diff;
                }
                return std::exp(-r * inv_two_bw_sq_);
            }
            case Family::Linear: {
                double s = 0.0;
                for (Eigen::Index i = 0; i < a.size(); ++i) { s += a[i] * b[i]; }
                return s;
            }
            case Family::Custom:
                return fn_(a, b);
        }
        return 0.0;
    }

    bool operator==(const Kernel& other) const {
        return family_ == other.family_ && bandwidth_ == other.bandwidth_ && bound_ == other.bound_ &&
               name_ == other.name_;
    }

private:
    Kernel() = default;

    Family family_ = Family::Gaussian;
    double bandwidth_ = 1.0;
    double inv_two_bw_sq_ = 0.5;
    double bound_ = 1.0;
    std::string name_;
    Function fn_;
};

/// Checked evaluation: throws InputError on dimension mismatch.
double eval_kernel(const Kernel& k, const PointRef& a, const PointRef& b);

/// Gram matrix G(i,j) = k(p_i, p_j) over the columns of `points`.
Eigen::MatrixXd gram_matrix(const Kernel& k, const PointsRef& points);

/// Cross-Gram C(i,j) = k(rows_i, cols_j).
Eigen::MatrixXd cross_gram(const Kernel& k, const PointsRef& rows, const PointsRef& cols);

/// Column of kernel values v(j) = k(points_j, p).
Eigen::VectorXd kernel_vector(const Kernel& k, const PointsRef& points, const PointRef& p);

struct JitteredInverse {
    Eigen::MatrixXd inverse;
    double jitter = 0.0;
};

/// Inverse of (G + jitter I). The jitter starts at jitter_scale * trace(G)/d
/// and is escalated x10 (from 1e-12 * trace/d when it starts at zero) up to
/// 1e-4 * trace/d until a Cholesky factorization succeeds with relative
/// residual |(G + jI)M - I|_F / (|G + jI|_F |M|_F) <= 1e-8.
JitteredInverse inverse_with_jitter(const Eigen::MatrixXd& G, double jitter_scale);

/// Relative residual used by inverse_with_jitter.
double inverse_residual(const Eigen::MatrixXd& G, double jitter, const Eigen::MatrixXd& inverse);

/// Bordered-inverse update. `g_inv` inverts the current (jittered) d x d Gram;
/// `new_column` holds k(p_i, p_new) and `new_diag` = k(p_new, p_new) + jitter.
/// Throws NumericalError when the Schur complement is below 1e-12 * new_diag;
/// GramCache::append handles that case by refactorizing.
Eigen::MatrixXd woodbury_append(const Eigen::MatrixXd& g_inv, const Eigen::VectorXd& new_column, double new_diag);

/// Gram matrix of a growing point set with its jittered inverse. The inverse
/// is optional: learners that never project do not pay for it.
class GramCache {
public:
    GramCache() = default;
    GramCache(double jitter_scale, bool track_inverse) : jitter_scale_(jitter_scale), track_inverse_(track_inverse) {}

    /// Cache over an existing point set (direct factorization).
    static GramCache build(const Kernel& k, const PointsRef& points, double jitter_scale, bool track_inverse);

    [[nodiscard]] Eigen::Index size() const { return g_.size(); }
    [[nodiscard]] auto G() const { return g_.view(); }
    [[nodiscard]] auto G_inv() const { return g_inv_.view(); }
    [[nodiscard]] double jitter() const { return jitter_; }
    [[nodiscard]] double jitter_scale() const { return jitter_scale_; }
    [[nodiscard]] bool tracks_inverse() const { return track_inverse_; }

    /// Appends a point given its kernel column against the cached points and
    /// its self-similarity. `inv_times_column`, if supplied, must equal
    /// G_inv() * new_column (callers often have it already).
    void append(const Eigen::VectorXd& new_column, double self_value,
                const std::optional<Eigen::VectorXd>& inv_times_column = std::nullopt);

    /// max |(G + jitter I) G_inv - I|; 0 when inverses are not tracked.
    [[nodiscard]] double inverse_error() const;

private:
    detail::GrowableSquare g_;
    detail::GrowableSquare g_inv_;
    double jitter_ = 0.0;
    double jitter_scale_ = 1e-10;
    bool track_inverse_ = true;
};

}  // namespace cme
