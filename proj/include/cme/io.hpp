#pragma once

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cme/batch_oracle.hpp"
#include "cme/kernel.hpp"
#include "cme/koopman.hpp"
#include "cme/online_learner.hpp"
#include "cme/operator_rep.hpp"

namespace cme::io {

using nlohmann::json;

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

json kernel_to_json(const Kernel& k);
Kernel kernel_from_json(const json& j);

/// {"format", "kernel_x", "kernel_y", "dim_x", "dim_y", "dict": [[x], [y]] per atom,
/// "W": rows}. Round trip is bit-faithful for finite values; custom kernels
/// cannot be serialized.
json rep_to_json(const OperatorRep& U);
OperatorRep rep_from_json(const json& j);

/// {"x_states": [[...]], "y_states"?, "joint"?, "transition"?}. Missing
/// y_states defaults to x_states; a missing joint is derived from the
/// transition's stationary law.
json model_to_json(const FiniteSpaceModel& m);
FiniteSpaceModel model_from_json(const json& j);

json read_json(const std::filesystem::path& path);
/// Writes via a temporary file so a failed write leaves no partial document.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Rows x_1..x_n,y_1..y_m under a header line.
void write_stream_csv(std::ostream& out, const Stream& stream);
/// Accepts an optional header line; every row must have dim_x + dim_y fields.
Stream read_stream_csv(std::istream& in, Eigen::Index dim_x, Eigen::Index dim_y);

/// Incremental `t,accepted,delta,eps_t,eta_t,dict_size,hs_norm` writer that
/// flushes after every row, so a run that fails midway leaves its prefix.
class TraceWriter {
public:
    explicit TraceWriter(std::ostream& out);
    void write(const StepRecord& r);

private:
    std::ostream& out_;
};

/// `x1,x2,re,im`, one row per node in grid_eval order.
void write_grid_csv(std::ostream& out, const GridField& field);

}  // namespace cme::io
