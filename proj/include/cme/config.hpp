#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cme/dynamics.hpp"
#include "cme/io.hpp"
#include "cme/koopman.hpp"
#include "cme/online_learner.hpp"

namespace cme {

enum class OracleKind { Batch, Exact };

struct StreamConfig {
    /// Generated streams (Duffing, chain, IID). Unset for csv and inline sources.
    std::optional<StreamSpec> generated;
    std::optional<std::filesystem::path> csv_path;
    Stream inline_samples;
    Eigen::Index dim_x = 0;
    Eigen::Index dim_y = 0;

    /// The finite model behind chain and IID sources, if any.
    [[nodiscard]] const FiniteSpaceModel* finite_model() const;
    [[nodiscard]] Stream load() const;
};

struct OutputConfig {
    std::filesystem::path dir = "out";
    std::string trace = "trace.csv";
    std::string model = "model.json";
    std::string stream = "stream.csv";
    std::string spectrum = "spectrum.json";
    std::string convergence = "convergence.csv";
};

struct AnalysisConfig {
    Eigen::Index koopman_k = 5;
    Eigen::Index fields = 2;
    GridSpec grid{{-2.0, -2.0}, {2.0, 2.0}, {40, 40}};
    std::vector<std::size_t> checkpoints;
    OracleKind oracle = OracleKind::Batch;
    /// Regularization of the reference operator; defaults to learner.lambda.
    std::optional<double> oracle_lambda;
};

struct ExperimentConfig {
    LearnerConfig learner;
    StreamConfig stream;
    OutputConfig outputs;
    AnalysisConfig analysis;
};

/// Validates the whole document before returning. Unknown keys and bad
/// values raise ConfigError naming the dotted key path. Relative input paths
/// resolve against `base_dir`.
ExperimentConfig parse_config(const io::json& doc, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace cme
