#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qsdc::csv {

// Shortest text that parses back to the same value.
[[nodiscard]] std::string format(float v);
[[nodiscard]] std::string format(double v);

[[nodiscard]] float parse_float(std::string_view s);
[[nodiscard]] double parse_double(std::string_view s);
[[nodiscard]] long long parse_int(std::string_view s);

// Splits on commas; no quoting support (fields never contain commas).
[[nodiscard]] std::vector<std::string_view> split(std::string_view line);

struct Table {
  std::vector<std::string> comments;  // lines starting with '#', without the marker
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name; throws ParseError when absent.
  [[nodiscard]] std::size_t column(std::string_view name) const;
};

[[nodiscard]] Table read(const std::filesystem::path& path);

// Throws IoError when the path cannot be written.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace qsdc::csv
