#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fedol {

// Shortest decimal string that round-trips the exact double.
std::string format_double(double v);

std::vector<std::string> split_csv_line(std::string_view line);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);

}  // namespace fedol
