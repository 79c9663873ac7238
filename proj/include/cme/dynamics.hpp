#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "cme/batch_oracle.hpp"
#include "cme/operator_rep.hpp"

namespace cme {

/// Unforced Duffing oscillator z'' = -delta z' - z (beta + alpha z^2).
struct DuffingParams {
    double delta = 0.5;
    double beta = -1.0;
    double alpha = 1.0;
    double dt_integrator = 0.01;
    double sample_interval = 0.25;

    /// Throws InputError unless both times are positive and sample_interval
    /// is an integer multiple of dt_integrator.
    void validate() const;
    [[nodiscard]] long substeps() const;
};

Eigen::Vector2d duffing_rhs(const Eigen::Vector2d& s, const DuffingParams& p);

/// Advances one sample_interval with classical RK4 substeps of dt_integrator.
Eigen::Vector2d duffing_step(const Eigen::Vector2d& state, const DuffingParams& p);

/// RK4 over `duration` seconds in dt_integrator substeps (the last one may be shorter).
Eigen::Vector2d duffing_integrate(const Eigen::Vector2d& state, const DuffingParams& p, double duration);

/// +1 or -1 by the sign of z after integrating each column to `horizon`.
std::vector<int> basin_labels(const Eigen::MatrixXd& points, const DuffingParams& p, double horizon = 60.0);

struct DuffingSource {
    std::size_t n_traj = 355;
    std::size_t steps_per_traj = 10;
    std::array<double, 4> init_box{-2.0, 2.0, -2.0, 2.0};  // z_min, z_max, zdot_min, zdot_max
    DuffingParams params;
};

/// Markov chain on model.x_states started from the x-marginal of the joint.
struct ChainSource {
    FiniteSpaceModel model;
    std::size_t length = 0;
    std::size_t burn_in = 0;
};

/// Independent (x, y) draws from the joint.
struct IidSource {
    FiniteSpaceModel model;
    std::size_t length = 0;
};

enum class Interleave { Sequential, RoundRobin };

struct StreamSpec {
    std::variant<DuffingSource, ChainSource, IidSource> source;
    Interleave interleave = Interleave::Sequential;
    std::uint64_t seed = 0;
};

/// Seeded source of uniforms in [0, 1) built on mt19937_64 with a fixed
/// conversion, so streams are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Index drawn with probabilities proportional to `weights`.
    Eigen::Index categorical(const Eigen::Ref<const Eigen::VectorXd>& weights);

private:
    std::mt19937_64 gen_;
};

/// Pairs (state, next state). For Duffing the interleave chooses between
/// trajectory-by-trajectory and step-by-step ordering; it is ignored otherwise.
Stream generate_stream(const StreamSpec& spec);

/// (1/2) sum |p_i - q_i|.
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Smallest t <= t_max with max_i TV(P^t(i, .), pi) <= delta.
std::optional<std::size_t> mixing_time(const FiniteSpaceModel& model, double delta, std::size_t t_max);

}  // namespace cme
