#include "cme/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cme/error.hpp"

namespace cme::io {

std::string format_double(double v) {
    if (std::isnan(v)) { return "nan"; }
    if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) { s.remove_prefix(1); }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) { s.remove_suffix(1); }
    if (!s.empty() && s.front() == '+') { s.remove_prefix(1); }
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw InputError("cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) { a.push_back(v[i]); }
    return a;
}

json matrix_rows(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) { rows.push_back(vector_to_json(m.row(i).transpose())); }
    return rows;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) { throw InputError(where + " must be a number"); }
    return j.get<double>();
}

Eigen::VectorXd json_vector(const json& j, const std::string& where) {
    if (!j.is_array()) { throw InputError(where + " must be an array"); }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = number(j[i], where + "[" + std::to_string(i) + "]");
    }
    return v;
}

// Array of equal-length rows; `cols` < 0 accepts any common width.
Eigen::MatrixXd json_rows(const json& j, const std::string& where, Eigen::Index cols = -1) {
    if (!j.is_array()) { throw InputError(where + " must be an array of rows"); }
    const auto n = static_cast<Eigen::Index>(j.size());
    if (n > 0 && cols < 0) { cols = static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0); }
    Eigen::MatrixXd m(n, std::max<Eigen::Index>(cols, 0));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd row = json_vector(j[static_cast<std::size_t>(i)], where + "[" + std::to_string(i) + "]");
        if (row.size() != cols) {
            throw InputError(where + "[" + std::to_string(i) + "] has " + std::to_string(row.size()) +
                             " entries, expected " + std::to_string(cols));
        }
        m.row(i) = row.transpose();
    }
    return m;
}

const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) { throw InputError(where + " is missing '" + key + "'"); }
    return j.at(key);
}

Eigen::Index index_field(const json& j, const char* key, const std::string& where) {
    const json& v = field(j, key, where);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw InputError(where + "." + key + " must be a nonnegative integer");
    }
    return static_cast<Eigen::Index>(v.get<long long>());
}

}  // namespace

json kernel_to_json(const Kernel& k) {
    switch (k.family()) {
        case Kernel::Family::Gaussian: return {{"family", "gaussian"}, {"bandwidth", k.bandwidth()}};
        case Kernel::Family::Linear: return {{"family", "linear"}, {"bound", k.bound()}};
        case Kernel::Family::Custom: break;
    }
    throw UnsupportedInputError("custom kernel '" + k.name() + "' cannot be serialized");
}

Kernel kernel_from_json(const json& j) {
    const json& fam = field(j, "family", "kernel");
    if (!fam.is_string()) { throw InputError("kernel.family must be a string"); }
    const std::string f = fam.get<std::string>();
    if (f == "gaussian") { return Kernel::gaussian(number(field(j, "bandwidth", "kernel"), "kernel.bandwidth")); }
    if (f == "linear") { return Kernel::linear(number(field(j, "bound", "kernel"), "kernel.bound")); }
    throw InputError("unknown kernel family '" + f + "'");
}

json rep_to_json(const OperatorRep& U) {
    if (!U.W().allFinite()) { throw InputError("cannot serialize a coefficient matrix containing NaN or Inf"); }
    json dict = json::array();
    for (Eigen::Index i = 0; i < U.size(); ++i) {
        dict.push_back(json::array({vector_to_json(U.dict().x(i)), vector_to_json(U.dict().y(i))}));
    }
    return {{"format", "cme-operator/1"},
            {"kernel_x", kernel_to_json(U.kernel_x())},
            {"kernel_y", kernel_to_json(U.kernel_y())},
            {"dim_x", U.dict().dim_x()},
            {"dim_y", U.dict().dim_y()},
            {"dict", std::move(dict)},
            {"W", matrix_rows(U.W())}};
}

OperatorRep rep_from_json(const json& j) {
    const json& format = field(j, "format", "model");
    if (format != "cme-operator/1") { throw InputError("model.format must be \"cme-operator/1\""); }
    const Eigen::Index dx = index_field(j, "dim_x", "model");
    const Eigen::Index dy = index_field(j, "dim_y", "model");
    const json& atoms = field(j, "dict", "model");
    if (!atoms.is_array()) { throw InputError("model.dict must be an array"); }
    Dictionary dict(dx, dy);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::string where = "model.dict[" + std::to_string(i) + "]";
        if (!atoms[i].is_array() || atoms[i].size() != 2) { throw InputError(where + " must be [[x...], [y...]]"); }
        dict.append(json_vector(atoms[i][0], where + "[0]"), json_vector(atoms[i][1], where + "[1]"));
    }
    const auto d = static_cast<Eigen::Index>(atoms.size());
    Eigen::MatrixXd W = json_rows(field(j, "W", "model"), "model.W", d);
    if (W.rows() != d) { throw InputError("model.W must have one row per dictionary atom"); }
    return OperatorRep(dict.compact(), std::move(W), kernel_from_json(field(j, "kernel_x", "model")),
                       kernel_from_json(field(j, "kernel_y", "model")));
}

json model_to_json(const FiniteSpaceModel& m) {
    json out = {{"x_states", matrix_rows(m.x_states.transpose())},
                {"y_states", matrix_rows(m.y_states.transpose())},
                {"joint", matrix_rows(m.joint)}};
    if (m.transition) { out["transition"] = matrix_rows(*m.transition); }
    return out;
}

FiniteSpaceModel model_from_json(const json& j) {
    if (!j.is_object()) { throw InputError("finite model must be an object"); }
    for (const auto& [key, _] : j.items()) {
        if (key != "x_states" && key != "y_states" && key != "joint" && key != "transition") {
            throw InputError("finite model has unknown key '" + key + "'");
        }
    }
    FiniteSpaceModel m;
    m.x_states = json_rows(field(j, "x_states", "model"), "model.x_states").transpose();
    m.y_states = j.contains("y_states") ? Eigen::MatrixXd(json_rows(j["y_states"], "model.y_states").transpose())
                                        : m.x_states;
    if (j.contains("transition")) {
        m.transition = json_rows(j["transition"], "model.transition", m.x_states.cols());
    }
    if (j.contains("joint")) {
        m.joint = json_rows(j["joint"], "model.joint", m.y_states.cols());
    } else if (m.transition) {
        const FiniteSpaceModel chain = FiniteSpaceModel::from_chain(m.x_states, *m.transition);
        m.joint = chain.joint;
    } else {
        throw InputError("finite model needs a joint or a transition");
    }
    m.validate();
    return m;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) { throw InputError("cannot open " + path.string()); }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) { throw InputError("cannot write " + tmp.string()); }
        out << text;
        if (!out) { throw InputError("write failed for " + tmp.string()); }
    }
    std::filesystem::rename(tmp, path);
}

void write_stream_csv(std::ostream& out, const Stream& stream) {
    if (stream.empty()) { return; }
    const Eigen::Index dx = stream.front().x.size();
    const Eigen::Index dy = stream.front().y.size();
    for (Eigen::Index i = 0; i < dx; ++i) { out << (i ? "," : "") << "x_" << i + 1; }
    for (Eigen::Index i = 0; i < dy; ++i) { out << ",y_" << i + 1; }
    out << '\n';
    for (const Sample& s : stream) {
        for (Eigen::Index i = 0; i < s.x.size(); ++i) { out << (i ? "," : "") << format_double(s.x[i]); }
        for (Eigen::Index i = 0; i < s.y.size(); ++i) { out << ',' << format_double(s.y[i]); }
        out << '\n';
    }
}

Stream read_stream_csv(std::istream& in, Eigen::Index dim_x, Eigen::Index dim_y) {
    if (dim_x <= 0 || dim_y <= 0) { throw InputError("stream dimensions must be positive"); }
    Stream out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') { line.pop_back(); }
        if (line.find_first_not_of(" \t") == std::string::npos) { continue; }
        if (out.empty() && line.find_first_of("xXyY_") != std::string::npos) { continue; }  // header
        std::vector<double> vals;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view tok(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
            try {
                vals.push_back(parse_double(tok));
            } catch (const InputError& e) {
                throw InputError("stream line " + std::to_string(lineno) + ": " + e.what());
            }
            if (comma == std::string::npos) { break; }
            start = comma + 1;
        }
        if (static_cast<Eigen::Index>(vals.size()) != dim_x + dim_y) {
            throw InputError("stream line " + std::to_string(lineno) + " has " + std::to_string(vals.size()) +
                             " fields, expected " + std::to_string(dim_x + dim_y));
        }
        const Eigen::Map<const Eigen::VectorXd> v(vals.data(), static_cast<Eigen::Index>(vals.size()));
        out.push_back({v.head(dim_x), v.tail(dim_y)});
    }
    return out;
}

TraceWriter::TraceWriter(std::ostream& out) : out_(out) {
    out_ << "t,accepted,delta,eps_t,eta_t,dict_size,hs_norm\n";
    out_.flush();
}

void TraceWriter::write(const StepRecord& r) {
    out_ << r.t << ',' << (r.accepted ? 1 : 0) << ',' << format_double(r.delta) << ',' << format_double(r.eps)
         << ',' << format_double(r.eta) << ',' << r.dict_size << ',' << format_double(r.hs_norm) << '\n';
    out_.flush();
}

void write_grid_csv(std::ostream& out, const GridField& field) {
    out << "x1,x2,re,im\n";
    const Eigen::Index n2 = field.x2.size();
    for (Eigen::Index i = 0; i < field.x1.size(); ++i) {
        for (Eigen::Index j = 0; j < n2; ++j) {
            const std::complex<double> v = field.values[i * n2 + j];
            out << format_double(field.x1[i]) << ',' << format_double(field.x2[j]) << ',' << format_double(v.real())
                << ',' << format_double(v.imag()) << '\n';
        }
    }
}

}  // namespace cme::io
