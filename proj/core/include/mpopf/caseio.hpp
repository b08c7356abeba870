// Text formats: case files, benchmark run configurations, and the
// result tables the benchmark emits.
#pragma once

#include "mpopf/model.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpopf {

// Parse failure with file/line context baked into what().
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, int line, const std::string& message);
  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_ = 0;
};

Case parse_case_text(const std::string& text, const std::string& filename = "<string>");
Case parse_case_file(const std::string& path);

// Canonical rendering; parse(serialize(c)) reproduces the same string.
std::string serialize_case(const Case& c);
void write_case_file(const std::string& path, const Case& c);

// Reconcile a case with a requested horizon: truncate, or cycle the
// per-period data when the request is longer than the stored horizon.
Case with_periods(const Case& c, int periods);

struct RunSpec {
  std::string case_path;
  int periods = 1;
  std::string relaxation = "both";  // lr | nfr | both
};

struct RunConfig {
  std::vector<RunSpec> runs;
  std::string output;  // empty writes to stdout
  std::string format = "csv";
  std::uint64_t seed = 0;
  double tol = 1e-6;
  bool single_core = false;
  int bundle_iters = 300;     // dual ascent iteration budget
  double bundle_tol = 1e-6;   // relative stopping test on the predicted ascent
  double sdp_tol = 1e-7;      // eigenvalue cut tolerance for bound tightening
};

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& filename = "<string>");
RunConfig parse_run_config_file(const std::string& path);

struct BenchRow {
  std::string case_name;
  std::string relaxation;
  int periods = 0;
  double dual_bound = 0.0;
  double primal_bound = 0.0;
  double gap_pct = 0.0;
  bool gap_defined = true;  // the gap is undefined when the dual bound is <= 0
  double time_s = 0.0;
  double infeasibility = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;      // row could not be computed
  std::string error;
};

std::string to_csv(const std::vector<BenchRow>& rows);
std::string to_markdown(const std::vector<BenchRow>& rows);

}  // namespace mpopf
