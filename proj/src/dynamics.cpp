#include "cme/dynamics.hpp"

#include <cmath>
#include <string>

#include "cme/error.hpp"

namespace cme {

void DuffingParams::validate() const {
    if (!std::isfinite(delta) || !std::isfinite(beta) || !std::isfinite(alpha)) {
        throw InputError("Duffing coefficients must be finite");
    }
    if (!(dt_integrator > 0.0) || !(sample_interval > 0.0) || !std::isfinite(sample_interval)) {
        throw InputError("Duffing time steps must be positive");
    }
    const double ratio = sample_interval / dt_integrator;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
        throw InputError("sample_interval must be an integer multiple of dt_integrator");
    }
}

long DuffingParams::substeps() const { return std::lround(sample_interval / dt_integrator); }

Eigen::Vector2d duffing_rhs(const Eigen::Vector2d& s, const DuffingParams& p) {
    return {s[1], -p.delta * s[1] - s[0] * (p.beta + p.alpha * s[0] * s[0])};
}

namespace {

Eigen::Vector2d rk4(const Eigen::Vector2d& s, const DuffingParams& p, double h) {
    const Eigen::Vector2d k1 = duffing_rhs(s, p);
    const Eigen::Vector2d k2 = duffing_rhs(s + 0.5 * h * k1, p);
    const Eigen::Vector2d k3 = duffing_rhs(s + 0.5 * h * k2, p);
    const Eigen::Vector2d k4 = duffing_rhs(s + h * k3, p);
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void require_finite_state(const Eigen::Vector2d& s) {
    if (!s.allFinite()) { throw InputError("Duffing state must be finite"); }
}

}  // namespace

Eigen::Vector2d duffing_step(const Eigen::Vector2d& state, const DuffingParams& p) {
    require_finite_state(state);
    p.validate();
    Eigen::Vector2d s = state;
    for (long i = 0; i < p.substeps(); ++i) { s = rk4(s, p, p.dt_integrator); }
    return s;
}

Eigen::Vector2d duffing_integrate(const Eigen::Vector2d& state, const DuffingParams& p, double duration) {
    require_finite_state(state);
    p.validate();
    if (!(duration >= 0.0) || !std::isfinite(duration)) { throw InputError("duration must be nonnegative"); }
    const auto full = static_cast<long>(std::floor(duration / p.dt_integrator + 1e-9));
    Eigen::Vector2d s = state;
    for (long i = 0; i < full; ++i) { s = rk4(s, p, p.dt_integrator); }
    const double rest = duration - static_cast<double>(full) * p.dt_integrator;
    if (rest > 1e-12 * p.dt_integrator) { s = rk4(s, p, rest); }
    return s;
}

std::vector<int> basin_labels(const Eigen::MatrixXd& points, const DuffingParams& p, double horizon) {
    if (points.rows() != 2) { throw InputError("basin_labels expects 2-D points"); }
    std::vector<int> labels(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        const Eigen::Vector2d end = duffing_integrate(points.col(i), p, horizon);
        labels[static_cast<std::size_t>(i)] = end[0] >= 0.0 ? 1 : -1;
    }
    return labels;
}

Eigen::Index Rng::categorical(const Eigen::Ref<const Eigen::VectorXd>& weights) {
    const double total = weights.sum();
    const double u = uniform() * total;
    double acc = 0.0;
    Eigen::Index last = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) { continue; }
        acc += weights[i];
        last = i;
        if (u < acc) { return i; }
    }
    return last;
}

namespace {

Stream duffing_stream(const DuffingSource& src, Interleave interleave, Rng& rng) {
    src.params.validate();
    const auto& box = src.init_box;
    if (!(box[1] > box[0]) || !(box[3] > box[2])) { throw InputError("Duffing init_box needs min < max per axis"); }
    const std::size_t n = src.n_traj;
    const std::size_t m = src.steps_per_traj;
    std::vector<Eigen::Vector2d> starts(n);
    for (auto& s : starts) {
        s[0] = rng.uniform(box[0], box[1]);
        s[1] = rng.uniform(box[2], box[3]);
    }
    std::vector<Stream> trajectories(n);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector2d s = starts[i];
        trajectories[i].reserve(m);
        for (std::size_t k = 0; k < m; ++k) {
            const Eigen::Vector2d next = duffing_step(s, src.params);
            trajectories[i].push_back({s, next});
            s = next;
        }
    }
    Stream out;
    out.reserve(n * m);
    if (interleave == Interleave::Sequential) {
        for (auto& tr : trajectories) {
            for (auto& pair : tr) { out.push_back(std::move(pair)); }
        }
    } else {
        for (std::size_t k = 0; k < m; ++k) {
            for (auto& tr : trajectories) { out.push_back(std::move(tr[k])); }
        }
    }
    return out;
}

Stream chain_stream(const ChainSource& src, Rng& rng) {
    src.model.validate();
    if (!src.model.transition) { throw InputError("chain stream needs a transition matrix"); }
    const Eigen::MatrixXd& P = *src.model.transition;
    Eigen::Index state = rng.categorical(src.model.x_marginal());
    for (std::size_t i = 0; i < src.burn_in; ++i) { state = rng.categorical(P.row(state).transpose()); }
    Stream out;
    out.reserve(src.length);
    for (std::size_t i = 0; i < src.length; ++i) {
        const Eigen::Index next = rng.categorical(P.row(state).transpose());
        out.push_back({src.model.x_states.col(state), src.model.x_states.col(next)});
        state = next;
    }
    return out;
}

Stream iid_stream(const IidSource& src, Rng& rng) {
    src.model.validate();
    const Eigen::Index ny = src.model.joint.cols();
    const Eigen::VectorXd flat = src.model.joint.transpose().reshaped();
    Stream out;
    out.reserve(src.length);
    for (std::size_t i = 0; i < src.length; ++i) {
        const Eigen::Index k = rng.categorical(flat);
        out.push_back({src.model.x_states.col(k / ny), src.model.y_states.col(k % ny)});
    }
    return out;
}

}  // namespace

Stream generate_stream(const StreamSpec& spec) {
    Rng rng(spec.seed);
    if (const auto* d = std::get_if<DuffingSource>(&spec.source)) { return duffing_stream(*d, spec.interleave, rng); }
    if (const auto* c = std::get_if<ChainSource>(&spec.source)) { return chain_stream(*c, rng); }
    return iid_stream(std::get<IidSource>(spec.source), rng);
}

namespace {

double tv_unchecked(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q) {
    return 0.5 * (p - q).cwiseAbs().sum();
}

void require_distribution(const Eigen::VectorXd& p, const char* name) {
    if (!p.allFinite() || (p.size() > 0 && p.minCoeff() < 0.0) || std::abs(p.sum() - 1.0) > 1e-9) {
        throw InputError(std::string(name) + " is not a probability vector");
    }
}

}  // namespace

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size() || p.size() == 0) { throw InputError("tv_distance needs equal nonempty lengths"); }
    require_distribution(p, "p");
    require_distribution(q, "q");
    return std::min(1.0, tv_unchecked(p, q));
}

std::optional<std::size_t> mixing_time(const FiniteSpaceModel& model, double delta, std::size_t t_max) {
    if (!model.transition) { throw InputError("mixing_time needs a transition matrix"); }
    if (!(delta > 0.0 && delta < 1.0)) { throw InputError("mixing_time: delta must lie in (0, 1)"); }
    model.validate();
    const Eigen::MatrixXd& P = *model.transition;
    const Eigen::VectorXd pi = stationary_distribution(P, false);
    Eigen::MatrixXd Pt = P;
    for (std::size_t t = 1; t <= t_max; ++t) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < Pt.rows(); ++i) {
            worst = std::max(worst, tv_unchecked(Pt.row(i).transpose(), pi));
        }
        if (worst <= delta) { return t; }
        Pt = (Pt * P).eval();
    }
    return std::nullopt;
}

}  // namespace cme
