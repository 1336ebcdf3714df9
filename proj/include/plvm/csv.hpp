#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace plvm::csv {

/// Lines of a text file with LF or CRLF endings and an optional UTF-8 BOM.
/// Blank trailing lines are dropped.
std::vector<std::string> read_lines(const std::filesystem::path &path);

/// Comma-separated fields; no quoting support.
std::vector<std::string> split(std::string_view line);

/// Shortest representation that round-trips exactly.
std::string format_double(double x);

/// Parses a decimal real; returns false on trailing garbage or empty input.
bool parse_double(std::string_view text, double &out);

bool parse_int(std::string_view text, long long &out);

/// Writes `text` to `path`, creating parent directories.
void write_file(const std::filesystem::path &path, const std::string &text);

}  // namespace plvm::csv
