#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace loopsoup::cli {

/// Exit codes.
enum ExitCode : int { ok = 0, validation_failure = 1, numeric_failure = 2, verification_failure = 3 };

/// Runs one command. args excludes the program name. Results go to the
/// --output file (written atomically) or to out when no file is given;
/// diagnostics go to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// %.17g; non-finite values become "nan", "inf" or "-inf".
std::string format_double(double x);

/// Deterministic JSON text with %.17g floats and non-finite floats as null.
std::string dump_json(const nlohmann::ordered_json& doc, int indent = 2);

/// One CSV table: header is the union of keys in first-seen order; nested
/// values are written as compact JSON.
std::string to_csv(const std::vector<nlohmann::ordered_json>& records);

}  // namespace loopsoup::cli
