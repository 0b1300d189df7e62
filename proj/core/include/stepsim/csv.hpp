#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace stepsim::csv {

struct Row {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: comma separator, double-quote quoting with "" escapes,
/// quoted fields may span lines. A trailing CR before LF is dropped. Blank
/// lines are skipped.
std::vector<Row> parse(std::string_view text, const std::string& source = {});
std::vector<Row> read_file(const std::string& path);

/// Quotes the field only when it contains a separator, quote or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
/// Strict parse: the whole field must be a finite decimal number.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::string_view trim(std::string_view s);

}  // namespace stepsim::csv
