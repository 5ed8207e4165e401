#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rgp::csv {

/// Comma-separated table with a header row. No quoting: fields never contain
/// commas in the formats used here.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

}  // namespace rgp::csv
