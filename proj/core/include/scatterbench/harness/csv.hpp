#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace scatterbench::harness {

using CsvRow = std::vector<std::string>;

/// RFC 4180: fields containing a comma, quote, CR or LF are quoted and quotes doubled.
std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& os, const CsvRow& row);
void write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows);

std::vector<CsvRow> parse_csv(const std::string& text);
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

}  // namespace scatterbench::harness
