#pragma once

#include <Eigen/Core>

#include <algorithm>

namespace cme::detail {

// Square matrix that grows one row/column at a time without reallocating on
// every append. The live block is the top-left size() x size() corner.
class GrowableSquare {
public:
    GrowableSquare() = default;

    explicit GrowableSquare(const Eigen::MatrixXd& m) { assign(m); }

    [[nodiscard]] Eigen::Index size() const { return n_; }

    auto view() { return buf_.topLeftCorner(n_, n_); }
    auto view() const { return buf_.topLeftCorner(n_, n_); }

    double& operator()(Eigen::Index i, Eigen::Index j) { return buf_(i, j); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return buf_(i, j); }

    void assign(const Eigen::MatrixXd& m) {
        n_ = 0;
        reserve(m.rows());
        n_ = m.rows();
        buf_.topLeftCorner(n_, n_) = m;
    }

    void reserve(Eigen::Index cap) {
        if (cap <= buf_.rows()) { return; }
        Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(cap, cap);
        grown.topLeftCorner(n_, n_) = buf_.topLeftCorner(n_, n_);
        buf_.swap(grown);
    }

    // Adds a zero row and column.
    void grow() {
        if (n_ + 1 > buf_.rows()) { reserve(std::max<Eigen::Index>(16, 2 * buf_.rows())); }
        buf_.row(n_).head(n_ + 1).setZero();
        buf_.col(n_).head(n_ + 1).setZero();
        ++n_;
    }

    [[nodiscard]] Eigen::MatrixXd compact() const { return buf_.topLeftCorner(n_, n_); }

private:
    Eigen::MatrixXd buf_;
    Eigen::Index n_ = 0;
};

}  // namespace cme::detail
