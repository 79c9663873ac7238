#include "cme/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <string>

#include "cme/error.hpp"

namespace cme {

namespace {

using io::json;

// Object view that records the dotted path and rejects keys outside `allowed`.
class Section {
public:
    Section(const json& j, std::string path, std::initializer_list<const char*> allowed)
        : j_(j), path_(std::move(path)) {
        if (!j.is_object()) { throw ConfigError(path_ + " must be an object"); }
        for (const auto& [key, _] : j.items()) {
            bool ok = false;
            for (const char* a : allowed) { ok = ok || key == a; }
            if (!ok) { throw ConfigError("unknown key '" + key_path(key) + "'"); }
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }
    [[nodiscard]] const json& raw(const char* key) const {
        if (!has(key)) { throw ConfigError("missing required key '" + key_path(key) + "'"); }
        return j_.at(key);
    }
    [[nodiscard]] std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[nodiscard]] double number(const char* key) const {
        const json& v = raw(key);
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            throw ConfigError(key_path(key) + " must be a finite number");
        }
        return v.get<double>();
    }
    [[nodiscard]] double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    [[nodiscard]] std::uint64_t unsigned_int(const char* key) const {
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError(key_path(key) + " must be a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }
    [[nodiscard]] std::uint64_t unsigned_int(const char* key, std::uint64_t fallback) const {
        return has(key) ? unsigned_int(key) : fallback;
    }

    [[nodiscard]] std::string string(const char* key) const {
        const json& v = raw(key);
        if (!v.is_string()) { throw ConfigError(key_path(key) + " must be a string"); }
        return v.get<std::string>();
    }
    [[nodiscard]] std::string string(const char* key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    [[nodiscard]] bool boolean(const char* key, bool fallback) const {
        if (!has(key)) { return fallback; }
        if (!raw(key).is_boolean()) { throw ConfigError(key_path(key) + " must be true or false"); }
        return raw(key).get<bool>();
    }

    [[nodiscard]] std::vector<double> numbers(const char* key, std::size_t expected) const {
        const json& v = raw(key);
        if (!v.is_array() || v.size() != expected) {
            throw ConfigError(key_path(key) + " must be an array of " + std::to_string(expected) + " numbers");
        }
        std::vector<double> out;
        for (const json& e : v) {
            if (!e.is_number()) { throw ConfigError(key_path(key) + " must contain numbers"); }
            out.push_back(e.get<double>());
        }
        return out;
    }

    [[nodiscard]] Section sub(const char* key, std::initializer_list<const char*> allowed) const {
        return Section(raw(key), key_path(key), allowed);
    }

private:
    const json& j_;
    std::string path_;
};

Kernel parse_kernel(const Section& s) {
    const std::string family = s.string("family");
    try {
        if (family == "gaussian") { return Kernel::gaussian(s.number("bandwidth")); }
        if (family == "linear") { return Kernel::linear(s.number("bound")); }
    } catch (const InputError& e) {
        throw ConfigError(s.key_path("family") + ": " + e.what());
    }
    throw ConfigError(s.key_path("family") + " must be \"gaussian\" or \"linear\", got \"" + family + "\"");
}

void parse_kernels(const Section& root, LearnerConfig& learner) {
    if (!root.has("kernel")) { return; }
    const Section k = root.sub("kernel", {"family", "bandwidth", "bound", "y"});
    learner.kernel_x = parse_kernel(k);
    learner.kernel_y = learner.kernel_x;
    if (k.has("y")) { learner.kernel_y = parse_kernel(k.sub("y", {"family", "bandwidth", "bound"})); }
}

void parse_learner(const Section& root, LearnerConfig& cfg) {
    if (!root.has("learner")) { throw ConfigError("missing required key 'learner'"); }
    const Section s = root.sub("learner", {"lambda", "step", "budget", "jitter_scale", "max_dictionary", "budget_squared"});
    cfg.lambda = s.number("lambda");

    const json& raw_step = s.raw("step");
    const std::string kind = raw_step.is_object() && raw_step.contains("kind") && raw_step["kind"].is_string()
                                 ? raw_step["kind"].get<std::string>()
                                 : "";
    if (kind == "constant") {
        const Section step = s.sub("step", {"kind", "eta"});
        cfg.step = StepSchedule::constant(step.number("eta"));
    } else if (kind == "polynomial") {
        const Section step = s.sub("step", {"kind", "eta0", "t0", "power"});
        cfg.step = StepSchedule::polynomial(step.number("eta0"), step.number("t0"), step.number("power"));
    } else {
        throw ConfigError(s.key_path("step.kind") + " must be \"constant\" or \"polynomial\"");
    }

    if (s.has("budget")) {
        const Section b = s.sub("budget", {"kind", "value"});
        const std::string bk = b.string("kind");
        if (bk == "zero") {
            if (b.has("value")) { throw ConfigError(b.key_path("value") + " is not used by budget kind \"zero\""); }
            cfg.budget = BudgetSchedule::zero();
        } else if (bk == "constant") {
            cfg.budget = BudgetSchedule::constant(b.number("value"));
        } else if (bk == "coupled_quadratic") {
            cfg.budget = BudgetSchedule::coupled_quadratic(b.number("value"));
        } else if (bk == "coupled_cubic") {
            cfg.budget = BudgetSchedule::coupled_cubic(b.number("value"));
        } else {
            throw ConfigError(b.key_path("kind") +
                              " must be one of \"zero\", \"constant\", \"coupled_quadratic\", \"coupled_cubic\"");
        }
    }
    cfg.jitter_scale = s.number("jitter_scale", cfg.jitter_scale);
    if (s.has("max_dictionary")) { cfg.max_dictionary = s.unsigned_int("max_dictionary"); }
    cfg.budget_squared = s.boolean("budget_squared", false);
    cfg.validate();
}

FiniteSpaceModel parse_model(const Section& s, const std::filesystem::path& base_dir) {
    if (s.has("model") == s.has("model_path")) {
        throw ConfigError(s.key_path("model") + ": give exactly one of 'model' and 'model_path'");
    }
    try {
        if (s.has("model")) { return io::model_from_json(s.raw("model")); }
        return io::model_from_json(io::read_json(base_dir / s.string("model_path")));
    } catch (const Error& e) {
        throw ConfigError(s.key_path(s.has("model") ? "model" : "model_path") + ": " + e.what());
    }
}

Interleave parse_interleave(const Section& s) {
    const std::string v = s.string("interleave", "sequential");
    if (v == "sequential") { return Interleave::Sequential; }
    if (v == "round_robin") { return Interleave::RoundRobin; }
    throw ConfigError(s.key_path("interleave") + " must be \"sequential\" or \"round_robin\"");
}

void parse_stream(const Section& root, StreamConfig& out, const std::filesystem::path& base_dir) {
    if (!root.has("stream")) { throw ConfigError("missing required key 'stream'"); }
    const json& raw = root.raw("stream");
    if (!raw.is_object() || !raw.contains("source") || !raw["source"].is_string()) {
        throw ConfigError("stream.source must be one of \"duffing\", \"chain\", \"iid\", \"csv\", \"inline\"");
    }
    const std::string source = raw["source"].get<std::string>();
    if (source == "duffing") {
        const Section s(raw, "stream", {"source", "n_traj", "steps_per_traj", "init_box", "duffing", "interleave", "seed"});
        DuffingSource d;
        d.n_traj = s.unsigned_int("n_traj", d.n_traj);
        d.steps_per_traj = s.unsigned_int("steps_per_traj", d.steps_per_traj);
        if (s.has("init_box")) {
            const auto box = s.numbers("init_box", 4);
            d.init_box = {box[0], box[1], box[2], box[3]};
            if (!(box[1] > box[0]) || !(box[3] > box[2])) {
                throw ConfigError(s.key_path("init_box") + " must be [z_min, z_max, zdot_min, zdot_max] with min < max");
            }
        }
        if (s.has("duffing")) {
            const Section p = s.sub("duffing", {"delta", "beta", "alpha", "dt_integrator", "sample_interval"});
            d.params.delta = p.number("delta", d.params.delta);
            d.params.beta = p.number("beta", d.params.beta);
            d.params.alpha = p.number("alpha", d.params.alpha);
            d.params.dt_integrator = p.number("dt_integrator", d.params.dt_integrator);
            d.params.sample_interval = p.number("sample_interval", d.params.sample_interval);
            try {
                d.params.validate();
            } catch (const InputError& e) {
                throw ConfigError(s.key_path("duffing") + ": " + e.what());
            }
        }
        if (d.n_traj == 0 || d.steps_per_traj == 0) {
            throw ConfigError("stream.n_traj and stream.steps_per_traj must be positive");
        }
        out.generated = StreamSpec{d, parse_interleave(s), s.unsigned_int("seed", 0)};
        out.dim_x = out.dim_y = 2;
    } else if (source == "chain" || source == "iid") {
        const bool chain = source == "chain";
        const Section s = chain ? Section(raw, "stream", {"source", "model", "model_path", "length", "burn_in", "seed"})
                                : Section(raw, "stream", {"source", "model", "model_path", "length", "seed"});
        FiniteSpaceModel model = parse_model(s, base_dir);
        const std::size_t length = s.unsigned_int("length");
        if (length == 0) { throw ConfigError(s.key_path("length") + " must be positive"); }
        out.dim_x = model.x_states.rows();
        out.dim_y = model.y_states.rows();
        if (chain) {
            if (!model.transition) { throw ConfigError("stream.model needs a transition for a chain source"); }
            out.generated = StreamSpec{ChainSource{std::move(model), length, s.unsigned_int("burn_in", 0)},
                                       Interleave::Sequential, s.unsigned_int("seed", 0)};
        } else {
            out.generated = StreamSpec{IidSource{std::move(model), length}, Interleave::Sequential,
                                       s.unsigned_int("seed", 0)};
        }
    } else if (source == "csv") {
        const Section s(raw, "stream", {"source", "path", "dim_x", "dim_y"});
        out.csv_path = base_dir / s.string("path");
        out.dim_x = static_cast<Eigen::Index>(s.unsigned_int("dim_x"));
        out.dim_y = static_cast<Eigen::Index>(s.unsigned_int("dim_y"));
        if (out.dim_x == 0 || out.dim_y == 0) { throw ConfigError("stream.dim_x and stream.dim_y must be positive"); }
    } else if (source == "inline") {
        const Section s(raw, "stream", {"source", "dim_x", "dim_y", "samples"});
        out.dim_x = static_cast<Eigen::Index>(s.unsigned_int("dim_x"));
        out.dim_y = static_cast<Eigen::Index>(s.unsigned_int("dim_y"));
        if (out.dim_x == 0 || out.dim_y == 0) { throw ConfigError("stream.dim_x and stream.dim_y must be positive"); }
        const json& rows = s.raw("samples");
        if (!rows.is_array() || rows.empty()) { throw ConfigError("stream.samples must be a nonempty array of rows"); }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::string where = "stream.samples[" + std::to_string(i) + "]";
            if (!rows[i].is_array() || static_cast<Eigen::Index>(rows[i].size()) != out.dim_x + out.dim_y) {
                throw ConfigError(where + " must hold dim_x + dim_y numbers");
            }
            Eigen::VectorXd v(out.dim_x + out.dim_y);
            for (std::size_t k = 0; k < rows[i].size(); ++k) {
                if (!rows[i][k].is_number()) { throw ConfigError(where + " must hold numbers"); }
                v[static_cast<Eigen::Index>(k)] = rows[i][k].get<double>();
            }
            out.inline_samples.push_back({v.head(out.dim_x), v.tail(out.dim_y)});
        }
    } else {
        throw ConfigError("stream.source must be one of \"duffing\", \"chain\", \"iid\", \"csv\", \"inline\", got \"" +
                          source + "\"");
    }
}

void parse_outputs(const Section& root, OutputConfig& out) {
    if (!root.has("outputs")) { return; }
    const Section s = root.sub("outputs", {"dir", "trace", "model", "stream", "spectrum", "convergence"});
    out.dir = s.string("dir", out.dir.string());
    out.trace = s.string("trace", out.trace);
    out.model = s.string("model", out.model);
    out.stream = s.string("stream", out.stream);
    out.spectrum = s.string("spectrum", out.spectrum);
    out.convergence = s.string("convergence", out.convergence);
}

void parse_analysis(const Section& root, AnalysisConfig& out) {
    if (!root.has("analysis")) { return; }
    const Section s = root.sub("analysis", {"koopman_k", "fields", "grid", "checkpoints", "oracle", "oracle_lambda"});
    out.koopman_k = static_cast<Eigen::Index>(s.unsigned_int("koopman_k", static_cast<std::uint64_t>(out.koopman_k)));
    out.fields = static_cast<Eigen::Index>(s.unsigned_int("fields", static_cast<std::uint64_t>(out.fields)));
    if (out.koopman_k == 0) { throw ConfigError("analysis.koopman_k must be positive"); }
    if (out.fields > out.koopman_k) { throw ConfigError("analysis.fields must not exceed analysis.koopman_k"); }
    if (s.has("grid")) {
        const Section g = s.sub("grid", {"mins", "maxs", "counts"});
        out.grid.mins = g.numbers("mins", 2);
        out.grid.maxs = g.numbers("maxs", 2);
        const auto counts = g.numbers("counts", 2);
        out.grid.counts.clear();
        for (double c : counts) {
            if (c < 2 || c != std::floor(c)) { throw ConfigError("analysis.grid.counts must be integers >= 2"); }
            out.grid.counts.push_back(static_cast<Eigen::Index>(c));
        }
        for (std::size_t a = 0; a < 2; ++a) {
            if (!(out.grid.maxs[a] > out.grid.mins[a])) { throw ConfigError("analysis.grid needs mins < maxs"); }
        }
    }
    if (s.has("checkpoints")) {
        const json& c = s.raw("checkpoints");
        if (!c.is_array()) { throw ConfigError("analysis.checkpoints must be an array of step indices"); }
        for (const json& t : c) {
            if (!t.is_number_integer() || t.get<long long>() < 1) {
                throw ConfigError("analysis.checkpoints entries must be integers >= 1");
            }
            out.checkpoints.push_back(t.get<std::size_t>());
        }
    }
    const std::string oracle = s.string("oracle", "batch");
    if (oracle == "batch") {
        out.oracle = OracleKind::Batch;
    } else if (oracle == "exact") {
        out.oracle = OracleKind::Exact;
    } else {
        throw ConfigError("analysis.oracle must be \"batch\" or \"exact\"");
    }
    if (s.has("oracle_lambda")) {
        out.oracle_lambda = s.number("oracle_lambda");
        if (!(*out.oracle_lambda > 0.0)) { throw ConfigError("analysis.oracle_lambda must be positive"); }
    }
}

}  // namespace

const FiniteSpaceModel* StreamConfig::finite_model() const {
    if (!generated) { return nullptr; }
    if (const auto* c = std::get_if<ChainSource>(&generated->source)) { return &c->model; }
    if (const auto* i = std::get_if<IidSource>(&generated->source)) { return &i->model; }
    return nullptr;
}

Stream StreamConfig::load() const {
    if (generated) { return generate_stream(*generated); }
    if (csv_path) {
        std::ifstream in(*csv_path);
        if (!in) { throw InputError("cannot open stream file " + csv_path->string()); }
        return io::read_stream_csv(in, dim_x, dim_y);
    }
    return inline_samples;
}

ExperimentConfig parse_config(const io::json& doc, const std::filesystem::path& base_dir) {
    const Section root(doc, "", {"kernel", "learner", "stream", "outputs", "analysis"});
    ExperimentConfig cfg;
    parse_kernels(root, cfg.learner);
    parse_learner(root, cfg.learner);
    parse_stream(root, cfg.stream, base_dir);
    parse_outputs(root, cfg.outputs);
    parse_analysis(root, cfg.analysis);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    io::json doc;
    try {
        doc = io::read_json(path);
    } catch (const InputError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(doc, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace cme
