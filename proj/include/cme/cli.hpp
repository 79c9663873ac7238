#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "cme/config.hpp"

namespace cme::cli {

/// Command-line overrides applied on top of the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    bool budget_squared = false;
    std::optional<OracleKind> oracle;
    /// Model file for koopman/compare; defaults to <out>/model.json.
    std::optional<std::filesystem::path> model;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Each command writes into cfg.outputs.dir and throws on failure.
void cmd_simulate(const ExperimentConfig& cfg);
void cmd_learn(const ExperimentConfig& cfg);
void cmd_koopman(const ExperimentConfig& cfg, const Overrides& o);
void cmd_compare(const ExperimentConfig& cfg);

/// Parses argv, runs one subcommand and maps errors to exit codes:
/// 0 success, 2 config, 3 input or model, 4 numerical or capacity, 1 other.
int main(int argc, char** argv);

}  // namespace cme::cli
