#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch {

using Date = std::chrono::year_month_day;

/// Parses "YYYY-MM-DD", optionally followed by a time part ("T..." or " ...").
std::optional<Date> parse_iso_date(std::string_view text);

/// Formats as "YYYY-MM-DD".
std::string format_date(const Date& date);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's bytes; throws InputError if unreadable.
std::string file_sha256(const std::string& path);

/// Number of whitespace-delimited tokens.
std::size_t count_tokens(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

/// Reads a whole file; throws InputError on failure.
std::string read_file(const std::string& path);

/// Writes via a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace trialmatch
