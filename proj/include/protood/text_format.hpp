#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protood {

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace protood
