#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace luq::csv {

using Row = std::vector<std::string>;

/// Reads a comma-separated file into rows of trimmed fields. Blank lines are
/// skipped. Throws MissingArtifactError if the file cannot be opened.
std::vector<Row> read(const std::filesystem::path& path);

/// Parses a full decimal field; throws FormatError naming `where` otherwise.
double parse_double(std::string_view field, std::string_view where);
long long parse_int(std::string_view field, std::string_view where);

/// Shortest representation that round-trips to the same double.
std::string format_double(double value);

/// Writes rows joined by commas with '\n' line endings.
void write(const std::filesystem::path& path, const std::vector<Row>& rows);

}  // namespace luq::csv
