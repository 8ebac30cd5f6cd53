#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clampcap::text {

using CsvRow = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and newlines.
/// CRLF and LF line endings are both accepted; a UTF-8 BOM is skipped.
std::vector<CsvRow> parse_csv(std::string_view content);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(const CsvRow& row);

}  // namespace clampcap::text
