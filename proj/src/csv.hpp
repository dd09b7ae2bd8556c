#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iotnat::detail {

// RFC 4180 style: fields may be double-quoted, "" escapes a quote.
// Returns false on an unterminated quote.
bool split_csv_line(std::string_view line, std::vector<std::string>& fields);

// Quotes only when the field contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Formats a double so it parses back to the same value.
std::string format_double(double value);

}  // namespace iotnat::detail
