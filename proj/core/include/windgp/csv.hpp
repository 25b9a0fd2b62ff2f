#pragma once

#include <optional>
#include <string>
#include <vector>

namespace windgp::csv {

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);  // empty field for null

double parse_double(const std::string& field);
std::optional<double> parse_optional(const std::string& field);

/// Quote a field when it contains the delimiter, quotes or newlines.
std::string escape(const std::string& field, char delim = ',');

/// Split one line honoring double-quoted fields ("" unescapes to ").
std::vector<std::string> split_line(const std::string& line, char delim = ',');

/// Parse whole text into rows; skips a trailing empty line and lines
/// starting with '#' (report metadata).
std::vector<std::vector<std::string>> parse(const std::string& text, char delim = ',');

std::string join(const std::vector<std::string>& fields, char delim = ',');

}  // namespace windgp::csv
