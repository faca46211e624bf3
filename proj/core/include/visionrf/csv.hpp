// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace visionrf {

// Shortest decimal form that parses back to the same double ('.' separator, no locale).
std::string format_double(double value);

double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

// Header plus rows of raw fields. LF line endings, comma separated, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws MalformedCsvError when absent.
  std::size_t column(std::string_view name) const;
};

std::string to_csv(const CsvTable& table);

// Throws MalformedCsvError on ragged rows, CR characters, or an empty document.
CsvTable parse_csv(std::string_view text, std::string_view source = "<csv>");

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace visionrf
