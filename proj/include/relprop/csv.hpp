#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace relprop::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by header name; throws InvalidInput when absent.
  std::size_t column(std::string_view name) const;
};

/// Comma-separated with a header row. Fields may be double-quoted ("" escapes
/// a quote). Blank lines are skipped; every row must match the header width.
Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

/// Quotes the field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

}  // namespace relprop::csv
