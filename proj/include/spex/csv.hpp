#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spex {

/// Parsed CSV with a header row. Quoting is supported for fields containing
/// commas or quotes; embedded newlines are not.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position for `name`, or throws DataError.
  std::size_t col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

/// Shortest decimal string that round-trips to the same double. Used for all
/// numeric artifact output so reruns are byte-identical.
std::string format_double(double x);

std::string csv_escape(const std::string& field);

double parse_double(const std::string& s);
int parse_int(const std::string& s);
/// Empty string or "NA" -> nullopt.
std::optional<double> parse_optional_double(const std::string& s);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// FNV-1a 64-bit over raw bytes; manifests use it to fingerprint artifacts.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace spex
