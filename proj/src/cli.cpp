#include "cme/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cme/batch_oracle.hpp"
#include "cme/error.hpp"
#include "cme/io.hpp"
#include "cme/koopman.hpp"
#include "cme/online_learner.hpp"

namespace cme::cli {

namespace fs = std::filesystem;
using io::json;

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) {
        if (!cfg.stream.generated) { throw ConfigError("--seed needs a generated stream source"); }
        cfg.stream.generated->seed = *o.seed;
    }
    if (o.out) { cfg.outputs.dir = *o.out; }
    if (o.budget_squared) { cfg.learner.budget_squared = true; }
    if (o.oracle) { cfg.analysis.oracle = *o.oracle; }
}

namespace {

fs::path prepare_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.outputs.dir);
    return cfg.outputs.dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) { throw InputError("cannot write " + path.string()); }
    return out;
}

fs::path checkpoint_path(const fs::path& dir, std::size_t t) {
    return dir / ("checkpoint_" + std::to_string(t) + ".json");
}

}  // namespace

void cmd_simulate(const ExperimentConfig& cfg) {
    if (!cfg.stream.generated) { throw ConfigError("simulate needs stream.source duffing, chain or iid"); }
    const Stream stream = cfg.stream.load();
    std::ostringstream csv;
    io::write_stream_csv(csv, stream);
    io::write_text(prepare_dir(cfg) / cfg.outputs.stream, csv.str());
}

void cmd_learn(const ExperimentConfig& cfg) {
    const Stream stream = cfg.stream.load();
    if (stream.empty()) { throw InputError("stream is empty"); }
    for (const std::size_t c : cfg.analysis.checkpoints) {
        if (c > stream.size()) {
            throw ConfigError("analysis.checkpoints entry " + std::to_string(c) + " exceeds the stream length " +
                              std::to_string(stream.size()));
        }
    }
    const fs::path dir = prepare_dir(cfg);
    std::ofstream trace_file = open_out(dir / cfg.outputs.trace);
    io::TraceWriter trace(trace_file);

    // Stepping here instead of through run_stream keeps the trace complete up
    // to the failing step.
    LearnerState state(cfg.learner, cfg.stream.dim_x, cfg.stream.dim_y);
    for (const Sample& s : stream) {
        state.advance(cfg.learner, s);
        trace.write(state.stats().back());
        for (const std::size_t c : cfg.analysis.checkpoints) {
            if (c == state.t()) { io::write_text(checkpoint_path(dir, c), io::rep_to_json(state.rep()).dump()); }
        }
    }
    io::write_text(dir / cfg.outputs.model, io::rep_to_json(state.rep()).dump());
}

void cmd_koopman(const ExperimentConfig& cfg, const Overrides& o) {
    const fs::path dir = prepare_dir(cfg);
    const fs::path model_path = o.model ? *o.model : dir / cfg.outputs.model;
    const OperatorRep U = io::rep_from_json(io::read_json(model_path));
    const KoopmanSpectrum spec = koopman_spectrum(U, cfg.analysis.koopman_k);
    const Eigen::Index k = spec.eigenvalues.size();
    const bool zero_operator = U.size() == 0 || U.W().cwiseAbs().maxCoeff() == 0.0;

    json eigenvalues = json::array();
    json moduli = json::array();
    json residuals = json::array();
    for (Eigen::Index i = 0; i < k; ++i) {
        eigenvalues.push_back({spec.eigenvalues[i].real(), spec.eigenvalues[i].imag()});
        moduli.push_back(std::abs(spec.eigenvalues[i]));
        residuals.push_back(spec.residuals[i]);
    }
    json fields = json::array();
    const bool planar = U.dict().dim_x() == 2;
    if (planar) {
        for (Eigen::Index i = 0; i < std::min(cfg.analysis.fields, k); ++i) {
            const GridField field = grid_eval(spec, i, cfg.analysis.grid);
            const std::string name = "eigfield_" + std::to_string(i) + ".csv";
            std::ostringstream csv;
            io::write_grid_csv(csv, field);
            io::write_text(dir / name, csv.str());
            fields.push_back(name);
        }
    }
    json doc = {{"dict_size", U.size()},
                {"k", k},
                {"eigenvalues", std::move(eigenvalues)},
                {"modulus", std::move(moduli)},
                {"residuals", std::move(residuals)},
                {"max_residual", k > 0 ? spec.residuals.maxCoeff() : 0.0},
                {"fields", std::move(fields)},
                {"fields_empty", zero_operator || k == 0},
                {"grid",
                 {{"mins", cfg.analysis.grid.mins},
                  {"maxs", cfg.analysis.grid.maxs},
                  {"counts", cfg.analysis.grid.counts}}}};
    if (!planar) { doc["fields_skipped"] = "grid fields need a 2-D state space"; }
    io::write_text(dir / cfg.outputs.spectrum, doc.dump(2));
}

void cmd_compare(const ExperimentConfig& cfg) {
    if (cfg.analysis.checkpoints.empty()) { throw InputError("compare needs analysis.checkpoints"); }
    const fs::path dir = prepare_dir(cfg);
    std::vector<std::pair<std::size_t, OperatorRep>> reps;
    for (const std::size_t t : cfg.analysis.checkpoints) {
        const fs::path p = checkpoint_path(dir, t);
        if (!fs::exists(p)) { throw InputError("missing checkpoint " + p.string() + "; run learn first"); }
        reps.emplace_back(t, io::rep_from_json(io::read_json(p)));
    }
    const double lambda = cfg.analysis.oracle_lambda.value_or(cfg.learner.lambda);
    const Kernel& kx = reps.front().second.kernel_x();
    const Kernel& ky = reps.front().second.kernel_y();
    const OperatorRep ref = [&] {
        if (cfg.analysis.oracle == OracleKind::Exact) {
            const FiniteSpaceModel* model = cfg.stream.finite_model();
            if (!model) { throw ConfigError("analysis.oracle \"exact\" needs a chain or iid stream source"); }
            return exact_finite_cme(*model, lambda, kx, ky);
        }
        return batch_solution(cfg.stream.load(), lambda, kx, ky).rep;
    }();
    std::ostringstream csv;
    csv << "t,hs_distance\n";
    for (const auto& [t, U] : reps) { csv << t << ',' << io::format_double(distance_to_oracle(U, ref)) << '\n'; }
    io::write_text(dir / cfg.outputs.convergence, csv.str());
}

namespace {

void apply_thread_cap() {
    const char* env = std::getenv("CME_NUM_THREADS");
    if (env == nullptr || *env == '\0') { return; }
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) { throw ConfigError("CME_NUM_THREADS must be a positive integer"); }
    Eigen::setNbThreads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming conditional mean embedding learner with Koopman analysis"};
    app.require_subcommand(1);

    std::string config;
    Overrides o;
    std::string oracle;
    std::string model;
    std::uint64_t seed = 0;
    std::string out;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override stream.seed");
        sub->add_option("--out", out, "override outputs.dir");
    };
    CLI::App* simulate = app.add_subcommand("simulate", "write the configured stream as CSV");
    CLI::App* learn = app.add_subcommand("learn", "run the compressed online learner");
    CLI::App* koopman = app.add_subcommand("koopman", "spectrum and eigenfunction fields of a learned model");
    CLI::App* compare = app.add_subcommand("compare", "HS distance of checkpoints to a reference operator");
    for (CLI::App* sub : {simulate, learn, koopman, compare}) { add_common(sub); }
    learn->add_flag("--budget-squared", o.budget_squared, "compare Delta_t <= eps_t instead of sqrt(Delta_t)");
    koopman->add_option("--model", model, "model JSON (default <out>/model.json)");
    compare->add_option("--oracle", oracle, "reference operator")->check(CLI::IsMember({"batch", "exact"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        apply_thread_cap();
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed") > 0) { o.seed = seed; }
        if (sub->count("--out") > 0) { o.out = out; }
        if (!oracle.empty()) { o.oracle = oracle == "exact" ? OracleKind::Exact : OracleKind::Batch; }
        if (!model.empty()) { o.model = model; }
        ExperimentConfig cfg = load_config(config);
        apply_overrides(cfg, o);
        if (sub == simulate) {
            cmd_simulate(cfg);
        } else if (sub == learn) {
            cmd_learn(cfg);
        } else if (sub == koopman) {
            cmd_koopman(cfg, o);
        } else {
            cmd_compare(cfg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 3;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return 3;
    } catch (const UnsupportedInputError& e) {
        std::cerr << "unsupported input: " << e.what() << '\n';
        return 3;
    } catch (const CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << '\n';
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace cme::cli
