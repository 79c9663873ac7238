#include "cme/operator_rep.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>
#include <utility>

#include "cme/error.hpp"

namespace cme {

Dictionary::Dictionary(Eigen::Index dim_x, Eigen::Index dim_y) : dim_x_(dim_x), dim_y_(dim_y) {
    if (dim_x <= 0 || dim_y <= 0) { throw InputError("dictionary dimensions must be positive"); }
}

Dictionary::Dictionary(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys)
    : dim_x_(xs.rows()), dim_y_(ys.rows()), n_(xs.cols()), xs_(xs), ys_(ys) {
    if (xs.cols() != ys.cols()) { throw InputError("dictionary x and y atom counts differ"); }
    if (dim_x_ <= 0 || dim_y_ <= 0) { throw InputError("dictionary dimensions must be positive"); }
}

void Dictionary::append(const PointRef& x, const PointRef& y) {
    if (x.size() != dim_x_ || y.size() != dim_y_) {
        throw InputError("dictionary atom has dimensions (" + std::to_string(x.size()) + ", " +
                         std::to_string(y.size()) + "), expected (" + std::to_string(dim_x_) + ", " +
                         std::to_string(dim_y_) + ")");
    }
    if (n_ == xs_.cols()) {
        const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * xs_.cols());
        xs_.conservativeResize(dim_x_, cap);
        ys_.conservativeResize(dim_y_, cap);
    }
    xs_.col(n_) = x;
    ys_.col(n_) = y;
    ++n_;
}

Dictionary Dictionary::compact() const {
    Dictionary out(dim_x_, dim_y_);
    out.xs_ = xs();
    out.ys_ = ys();
    out.n_ = n_;
    return out;
}

bool Dictionary::operator==(const Dictionary& other) const {
    return dim_x_ == other.dim_x_ && dim_y_ == other.dim_y_ && n_ == other.n_ && xs() == other.xs() &&
           ys() == other.ys();
}

OperatorRep::OperatorRep(Dictionary dict, Eigen::MatrixXd W, Kernel kernel_x, Kernel kernel_y)
    : dict_(std::move(dict)), W_(std::move(W)), kernel_x_(std::move(kernel_x)), kernel_y_(std::move(kernel_y)) {
    if (W_.rows() != dict_.size() || W_.cols() != dict_.size()) {
        throw InputError("coefficient matrix is " + std::to_string(W_.rows()) + "x" + std::to_string(W_.cols()) +
                         " but the dictionary has " + std::to_string(dict_.size()) + " atoms");
    }
}

OperatorRep OperatorRep::zero(Eigen::Index dim_x, Eigen::Index dim_y, Kernel kernel_x, Kernel kernel_y) {
    return OperatorRep(Dictionary(dim_x, dim_y), Eigen::MatrixXd(0, 0), std::move(kernel_x), std::move(kernel_y));
}

OperatorRep OperatorRep::with_coefficients(Eigen::MatrixXd W) const {
    return OperatorRep(dict_, std::move(W), kernel_x_, kernel_y_);
}

OperatorRep OperatorRep::scaled(double alpha) const { return with_coefficients(alpha * W_); }

namespace {

void require_compatible(const OperatorRep& A, const OperatorRep& B) {
    if (!(A.kernel_x() == B.kernel_x()) || !(A.kernel_y() == B.kernel_y())) {
        throw InputError("operators use different kernels");
    }
    if (A.dict().dim_x() != B.dict().dim_x() || A.dict().dim_y() != B.dict().dim_y()) {
        throw InputError("operators act on different point dimensions");
    }
}

void require_finite(const OperatorRep& U) {
    if (!U.W().allFinite()) { throw InputError("coefficient matrix contains NaN or Inf"); }
}

// Round-off scale for quadratic forms in W: |W|_F^2 K_X K_Y.
double quadratic_scale(const OperatorRep& U) {
    return std::max(1.0, U.W().squaredNorm() * U.kernel_x().bound() * U.kernel_y().bound());
}

// Tr(W_A^T G_Y^{AB} W_B G_X^{BA}) without forming products larger than d_A x d_B.
double trace_form(const OperatorRep& A, const OperatorRep& B) {
    if (A.size() == 0 || B.size() == 0) { return 0.0; }
    const Eigen::MatrixXd gy = cross_gram(A.kernel_y(), A.dict().ys(), B.dict().ys());
    const Eigen::MatrixXd gx = cross_gram(A.kernel_x(), B.dict().xs(), A.dict().xs());
    const Eigen::MatrixXd m = gy * (B.W() * gx);
    return A.W().cwiseProduct(m).sum();
}

}  // namespace

double hs_norm_sq(const OperatorRep& U) {
    require_finite(U);
    if (U.size() == 0) { return 0.0; }
    const Eigen::MatrixXd gy = gram_matrix(U.kernel_y(), U.dict().ys());
    const Eigen::MatrixXd gx = gram_matrix(U.kernel_x(), U.dict().xs());
    const double value = U.W().cwiseProduct(gy * U.W() * gx).sum();
    if (value >= 0.0) { return value; }
    if (value > -1e-10 * quadratic_scale(U)) { return 0.0; }
    throw NumericalError("hs_norm_sq is negative beyond round-off: " + std::to_string(value));
}

double hs_inner(const OperatorRep& A, const OperatorRep& B) {
    require_compatible(A, B);
    require_finite(A);
    require_finite(B);
    return trace_form(A, B);
}

// Merges the two dictionaries, folding bitwise-identical atoms, so the
// difference W_A - W_B is formed coefficient-wise instead of through
// ||A||^2 - 2<A,B> + ||B||^2, whose cancellation limits the result to
// about sqrt(machine eps) * ||A||.
double hs_distance(const OperatorRep& A, const OperatorRep& B) {
    require_compatible(A, B);
    require_finite(A);
    require_finite(B);
    const Dictionary& da = A.dict();
    const Dictionary& db = B.dict();

    auto key = [](const auto& x, const auto& y) {
        std::string k(static_cast<std::size_t>(x.size() + y.size()) * sizeof(double), '\0');
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = x[i];
            std::memcpy(k.data() + i * sizeof(double), &v, sizeof(double));
        }
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double v = y[i];
            std::memcpy(k.data() + (x.size() + i) * sizeof(double), &v, sizeof(double));
        }
        return k;
    };

    Dictionary merged(da.dim_x(), da.dim_y());
    std::unordered_map<std::string, Eigen::Index> index;
    auto place = [&](const Dictionary& d) {
        std::vector<Eigen::Index> map(static_cast<std::size_t>(d.size()));
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            auto [it, fresh] = index.try_emplace(key(d.x(i), d.y(i)), merged.size());
            if (fresh) { merged.append(d.x(i), d.y(i)); }
            map[static_cast<std::size_t>(i)] = it->second;
        }
        return map;
    };
    const std::vector<Eigen::Index> ia = place(da);
    const std::vector<Eigen::Index> ib = place(db);

    Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(merged.size(), merged.size());
    for (Eigen::Index j = 0; j < da.size(); ++j) {
        for (Eigen::Index i = 0; i < da.size(); ++i) { diff(ia[i], ia[j]) += A.W()(i, j); }
    }
    for (Eigen::Index j = 0; j < db.size(); ++j) {
        for (Eigen::Index i = 0; i < db.size(); ++i) { diff(ib[i], ib[j]) -= B.W()(i, j); }
    }
    return std::sqrt(hs_norm_sq(OperatorRep(std::move(merged), std::move(diff), A.kernel_x(), A.kernel_y())));
}

Eigen::VectorXd predict_coefficients(const OperatorRep& U, const PointRef& x) {
    if (x.size() != U.dict().dim_x()) {
        throw InputError("query point has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(U.dict().dim_x()));
    }
    return U.W() * kernel_vector(U.kernel_x(), U.dict().xs(), x);
}

double conditional_expectation(const OperatorRep& U, const Eigen::VectorXd& f_at_dict_y, const PointRef& x) {
    if (f_at_dict_y.size() != U.size()) {
        throw InputError("f has " + std::to_string(f_at_dict_y.size()) + " values but the dictionary has " +
                         std::to_string(U.size()) + " atoms");
    }
    return predict_coefficients(U, x).dot(f_at_dict_y);
}

Eigen::VectorXd propagate_kme(const OperatorRep& U, const KmeWeights& m) {
    if (m.anchors.cols() != m.weights.size()) { throw InputError("KME anchor and weight counts differ"); }
    if (m.anchors.cols() > 0 && m.anchors.rows() != U.dict().dim_x()) {
        throw InputError("KME anchors have dimension " + std::to_string(m.anchors.rows()) + ", expected " +
                         std::to_string(U.dict().dim_x()));
    }
    if (!m.weights.allFinite()) { throw InputError("KME weights must be finite"); }
    if (U.size() == 0 || m.anchors.cols() == 0) { return Eigen::VectorXd::Zero(U.size()); }
    const Eigen::MatrixXd k_dz = cross_gram(U.kernel_x(), U.dict().xs(), m.anchors);
    return U.W() * (k_dz * m.weights);
}

}  // namespace cme
