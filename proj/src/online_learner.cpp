#include "cme/online_learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cme {

double StepSchedule::at(std::size_t t) const {
    if (kind == Kind::Constant) { return eta0; }
    return eta0 * std::pow(1.0 + static_cast<double>(t) / t0, -power);
}

double BudgetSchedule::at(double eta) const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Constant: return value;
        case Kind::CoupledQuadratic: return value * eta * eta;
        case Kind::CoupledCubic: return value * eta * eta * eta;
    }
    return 0.0;
}

void LearnerConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) { throw ConfigError("learner.lambda must be positive and finite"); }
    const double eta_cap = std::min(1.0, 1.0 / lambda);
    if (!(step.eta0 > 0.0) || step.eta0 > eta_cap) {
        throw ConfigError("learner.step: eta must lie in (0, min(1, 1/lambda)] = (0, " + std::to_string(eta_cap) +
                          "]");
    }
    if (step.eta0 * lambda >= 1.0) { throw ConfigError("learner.step: eta * lambda must be < 1"); }
    if (step.kind == StepSchedule::Kind::Polynomial) {
        if (!(step.t0 > 0.0)) { throw ConfigError("learner.step.t0 must be positive"); }
        if (!(step.power > 0.5 && step.power <= 1.0)) {
            throw ConfigError("learner.step.power must lie in (0.5, 1] so that sum eta_t = inf and sum eta_t^2 < inf");
        }
    }
    if (!(budget.value >= 0.0) || !std::isfinite(budget.value)) {
        throw ConfigError("learner.budget value must be nonnegative and finite");
    }
    if (!(jitter_scale >= 0.0) || !std::isfinite(jitter_scale)) {
        throw ConfigError("learner.jitter_scale must be nonnegative and finite");
    }
    if (max_dictionary && *max_dictionary == 0) { throw ConfigError("learner.max_dictionary must be positive"); }
}

LearnerState::LearnerState(const LearnerConfig& cfg, Eigen::Index dim_x, Eigen::Index dim_y)
    : kernel_x_(cfg.kernel_x),
      kernel_y_(cfg.kernel_y),
      dict_(dim_x, dim_y),
      gram_x_(cfg.jitter_scale, !cfg.budget.always_zero()),
      gram_y_(cfg.jitter_scale, !cfg.budget.always_zero()) {
    cfg.validate();
}

double LearnerState::hs_norm() const { return std::sqrt(std::max(0.0, norm_sq_)); }

OperatorRep LearnerState::rep() const { return OperatorRep(dict_.compact(), W_.compact(), kernel_x_, kernel_y_); }

void LearnerState::check_capacity(const LearnerConfig& cfg) const {
    if (cfg.max_dictionary && static_cast<std::size_t>(dict_.size()) + 1 > *cfg.max_dictionary) {
        throw CapacityError("dictionary capacity " + std::to_string(*cfg.max_dictionary) + " exceeded at step " +
                                std::to_string(t_ + 1),
                            std::make_shared<const LearnerState>(*this));
    }
}

void LearnerState::advance(const LearnerConfig& cfg, const Sample& sample) {
    if (sample.x.size() != dict_.dim_x() || sample.y.size() != dict_.dim_y()) {
        throw InputError("sample has dimensions (" + std::to_string(sample.x.size()) + ", " +
                         std::to_string(sample.y.size()) + "), expected (" + std::to_string(dict_.dim_x()) + ", " +
                         std::to_string(dict_.dim_y()) + ")");
    }
    if (!sample.x.allFinite() || !sample.y.allFinite()) { throw InputError("sample contains NaN or Inf"); }
    if (!(cfg.kernel_x == kernel_x_) || !(cfg.kernel_y == kernel_y_)) {
        throw InputError("config kernels differ from the kernels this state was built with");
    }

    const std::size_t t = t_ + 1;
    const double eta = cfg.step.at(t);
    const double eps = cfg.budget.at(eta);

    if (dict_.empty()) {
        // Empty projection span: the first sample is always admitted.
        check_capacity(cfg);
        const double kxx = kernel_x_(sample.x, sample.x);
        const double kyy = kernel_y_(sample.y, sample.y);
        admit_border(sample, Eigen::VectorXd(0), eta, Eigen::VectorXd(0), kxx, Eigen::VectorXd(0), kyy,
                     std::nullopt, std::nullopt);
        norm_sq_ = eta * eta * kxx * kyy;
        t_ = t;
        stats_.push_back({t, true, norm_sq_, eps, eta, 1, hs_norm()});
        return;
    }
    if (gram_x_.tracks_inverse()) {
        advance_tracked(cfg, sample, eta, eps);
    } else {
        advance_untracked(cfg, sample, eta, eps);
    }
}

// Appends the sample as a new atom. W must already hold (1 - lambda eta) W.
void LearnerState::admit_border(const Sample& sample, const Eigen::VectorXd& b, double eta,
                                const Eigen::VectorXd& k_x, double kxx, const Eigen::VectorXd& k_y, double kyy,
                                const std::optional<Eigen::VectorXd>& a_x, const std::optional<Eigen::VectorXd>& a_y) {
    const Eigen::Index d = dict_.size();
    gram_x_.append(k_x, kxx, a_x);
    gram_y_.append(k_y, kyy, a_y);
    W_.grow();
    for (Eigen::Index i = 0; i < d; ++i) { W_(i, d) = b[i]; }
    W_(d, d) = eta;
    dict_.append(sample.x, sample.y);
}

// Compression with the full test. Writing the expansion as
//   U~ = Psi A Phi^T + u (x) v,  A = (1 - lambda eta) W,  u = Psi b + eta psi_new,  v = phi_new,
// its projection onto the old product span is Psi A Phi^T + p (x) q with
// p = Psi (b + eta a_y), q = Phi a_x, a = G^-1 k. The residual
// u (x) r_v + r_u (x) q (r_v = v - q, r_u = u - p) gives Delta in O(d^2).
void LearnerState::advance_tracked(const LearnerConfig& cfg, const Sample& sample, double eta, double eps) {
    const Eigen::VectorXd k_x = kernel_vector(kernel_x_, dict_.xs(), sample.x);
    const Eigen::VectorXd k_y = kernel_vector(kernel_y_, dict_.ys(), sample.y);
    const double kxx = kernel_x_(sample.x, sample.x);
    const double kyy = kernel_y_(sample.y, sample.y);
    const double shrink = 1.0 - cfg.lambda * eta;

    const auto W = W_.view();
    const auto gx = gram_x_.G();
    const auto gy = gram_y_.G();
    const Eigen::VectorXd w = W * k_x;
    const Eigen::VectorXd b = -eta * w;
    const Eigen::VectorXd g_b = gy * b;
    const Eigen::VectorXd a_x = gram_x_.G_inv() * k_x;
    const Eigen::VectorXd a_y = gram_y_.G_inv() * k_y;
    const Eigen::VectorXd h_x = gx * a_x;
    const Eigen::VectorXd h_y = gy * a_y;

    const double u_sq = b.dot(g_b) + 2.0 * eta * b.dot(k_y) + eta * eta * kyy;
    const double kxa = k_x.dot(a_x);
    const double q_sq = a_x.dot(h_x);
    const double rv_sq = kxx - 2.0 * kxa + q_sq;
    const double rv_q = kxa - q_sq;
    const double kya = k_y.dot(a_y);
    const double ru_sq = eta * eta * (kyy - 2.0 * kya + a_y.dot(h_y));
    const double u_ru = eta * (b.dot(k_y) - b.dot(h_y) + eta * kyy - eta * kya);

    double delta = u_sq * rv_sq + 2.0 * u_ru * rv_q + ru_sq * q_sq;
    if (delta < 0.0) {
        const double scale = std::max(1.0, u_sq * kxx);
        if (delta < -1e-9 * scale) {
            throw NumericalError("compression residual is negative beyond round-off: " + std::to_string(delta) +
                                 " at step " + std::to_string(t_ + 1));
        }
        delta = 0.0;
    }
    const bool reject = cfg.budget_squared ? delta <= eps : std::sqrt(delta) <= eps;

    const double expanded_norm_sq =
        shrink * shrink * norm_sq_ + 2.0 * shrink * (g_b + eta * k_y).dot(w) + u_sq * kxx;

    if (reject) {
        const Eigen::VectorXd c = b + eta * a_y;
        const Eigen::VectorXd g_c = g_b + eta * h_y;
        const Eigen::VectorXd w_h = W * h_x;
        norm_sq_ = shrink * shrink * norm_sq_ + 2.0 * shrink * g_c.dot(w_h) + c.dot(g_c) * q_sq;
        auto Wm = W_.view();
        Wm *= shrink;
        Wm.noalias() += c * a_x.transpose();
    } else {
        check_capacity(cfg);
        W_.view() *= shrink;
        admit_border(sample, b, eta, k_x, kxx, k_y, kyy, a_x, a_y);
        norm_sq_ = expanded_norm_sq;
    }
    t_ += 1;
    stats_.push_back({t_, !reject, delta, eps, eta, static_cast<std::size_t>(dict_.size()), hs_norm()});
}

// Budget identically zero: every sample is admitted unless it duplicates a
// dictionary pair bitwise, in which case the expansion is exactly
// representable (projection coefficients a = e_j) and no inverse is needed.
void LearnerState::advance_untracked(const LearnerConfig& cfg, const Sample& sample, double eta, double eps) {
    const Eigen::Index d = dict_.size();
    const Eigen::VectorXd k_x = kernel_vector(kernel_x_, dict_.xs(), sample.x);
    const Eigen::VectorXd k_y = kernel_vector(kernel_y_, dict_.ys(), sample.y);
    const double kxx = kernel_x_(sample.x, sample.x);
    const double kyy = kernel_y_(sample.y, sample.y);
    const double shrink = 1.0 - cfg.lambda * eta;

    Eigen::Index duplicate = -1;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (k_x[j] == kxx && k_y[j] == kyy && dict_.x(j) == sample.x && dict_.y(j) == sample.y) {
            duplicate = j;
            break;
        }
    }
    if (duplicate < 0) { check_capacity(cfg); }

    // w = W k_x and W <- shrink * W in one pass over the columns.
    auto Wm = W_.view();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        w.noalias() += Wm.col(j) * k_x[j];
        Wm.col(j) *= shrink;
    }
    const Eigen::VectorXd b = -eta * w;
    const Eigen::VectorXd g_b = gram_y_.G() * b;
    const double u_sq = b.dot(g_b) + 2.0 * eta * b.dot(k_y) + eta * eta * kyy;
    norm_sq_ = shrink * shrink * norm_sq_ + 2.0 * shrink * (g_b + eta * k_y).dot(w) + u_sq * kxx;

    double delta = std::numeric_limits<double>::quiet_NaN();
    if (duplicate >= 0) {
        Wm.col(duplicate) += b;
        Wm(duplicate, duplicate) += eta;
        delta = 0.0;
    } else {
        admit_border(sample, b, eta, k_x, kxx, k_y, kyy, std::nullopt, std::nullopt);
    }
    t_ += 1;
    stats_.push_back({t_, duplicate < 0, delta, eps, eta, static_cast<std::size_t>(dict_.size()), hs_norm()});
}

Eigen::MatrixXd sgd_expand(const Eigen::MatrixXd& W, const Eigen::VectorXd& k_x_new, double eta, double lambda) {
    const Eigen::Index d = W.rows();
    if (W.cols() != d || k_x_new.size() != d) { throw InputError("sgd_expand: dimension mismatch"); }
    if (!W.allFinite() || !k_x_new.allFinite() || !std::isfinite(eta) || !std::isfinite(lambda)) {
        throw InputError("sgd_expand: NaN or Inf input");
    }
    if (!(eta * lambda < 1.0)) { throw InputError("sgd_expand: eta * lambda must be < 1"); }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d + 1, d + 1);
    out.topLeftCorner(d, d) = (1.0 - lambda * eta) * W;
    out.col(d).head(d) = -eta * (W * k_x_new);
    out(d, d) = eta;
    return out;
}

Eigen::MatrixXd project_coefficients(const Eigen::MatrixXd& W_tilde, const Eigen::MatrixXd& Gy_inv,
                                     const Eigen::MatrixXd& Gbar_y, const Eigen::MatrixXd& Gbar_x,
                                     const Eigen::MatrixXd& Gx_inv) {
    const Eigen::Index d = Gy_inv.rows();
    const Eigen::Index n = W_tilde.rows();
    if (W_tilde.cols() != n || Gy_inv.cols() != d || Gx_inv.rows() != d || Gx_inv.cols() != d ||
        Gbar_y.rows() != n || Gbar_y.cols() != d || Gbar_x.rows() != n || Gbar_x.cols() != d) {
        throw InputError("project_coefficients: dimension mismatch");
    }
    return Gy_inv * (Gbar_y.transpose() * W_tilde * Gbar_x) * Gx_inv;
}

double compression_delta(const Eigen::MatrixXd& W_tilde, const Eigen::MatrixXd& G_x_big,
                         const Eigen::MatrixXd& G_y_big, const Eigen::MatrixXd& Gbar_y, const Eigen::MatrixXd& Gy_inv,
                         const Eigen::MatrixXd& Gbar_x, const Eigen::MatrixXd& Gx_inv) {
    const Eigen::Index n = W_tilde.rows();
    const Eigen::Index d = Gy_inv.rows();
    if (G_x_big.rows() != n || G_x_big.cols() != n || G_y_big.rows() != n || G_y_big.cols() != n) {
        throw InputError("compression_delta: expanded Gram size mismatch");
    }
    const Eigen::MatrixXd Z = project_coefficients(W_tilde, Gy_inv, Gbar_y, Gbar_x, Gx_inv);
    const Eigen::MatrixXd gy_old = Gbar_y.topRows(d);
    const Eigen::MatrixXd gx_old = Gbar_x.topRows(d);

    const double full = W_tilde.cwiseProduct(G_y_big * W_tilde * G_x_big).sum();
    const double cross = d == 0 ? 0.0 : W_tilde.cwiseProduct(Gbar_y * Z * Gbar_x.transpose()).sum();
    const double proj = d == 0 ? 0.0 : Z.cwiseProduct(gy_old * Z * gx_old).sum();
    const double delta = full - 2.0 * cross + proj;
    if (delta >= 0.0) { return delta; }
    if (delta > -1e-9 * std::max(1.0, std::abs(full))) { return 0.0; }
    throw NumericalError("compression_delta is negative beyond round-off: " + std::to_string(delta));
}

LearnerState step(LearnerState state, const LearnerConfig& cfg, const Sample& sample) {
    state.advance(cfg, sample);
    return state;
}

RunResult run_stream(const LearnerConfig& cfg, const Stream& samples, const std::vector<std::size_t>& checkpoints) {
    if (samples.empty()) { throw InputError("run_stream requires a nonempty stream"); }
    std::vector<std::size_t> wanted = checkpoints;
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    for (const std::size_t c : wanted) {
        if (c == 0 || c > samples.size()) {
            throw InputError("checkpoint " + std::to_string(c) + " is outside the stream [1, " +
                             std::to_string(samples.size()) + "]");
        }
    }
    RunResult result{LearnerState(cfg, samples.front().x.size(), samples.front().y.size()), {}};
    auto next = wanted.begin();
    for (const Sample& s : samples) {
        result.state.advance(cfg, s);
        if (next != wanted.end() && *next == result.state.t()) {
            result.checkpoints.push_back({result.state.t(), result.state.rep()});
            ++next;
        }
    }
    return result;
}

}  // namespace cme
