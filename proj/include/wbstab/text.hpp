#pragma once

// Line-oriented `keyword name key=value ...` text shared by model files,
// scenario configs and QP dumps.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wbstab/spatial.hpp"

namespace wbstab::text {

struct Line {
  int number = 0;
  std::vector<std::string> words;              // positional tokens
  std::map<std::string, std::string> values;   // key=value tokens

  bool has(const std::string& key) const { return values.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double number_of(const std::string& key) const;
  std::vector<double> list_of(const std::string& key, std::size_t expected) const;
};

/// Splits text into non-empty lines with `#` comments removed.
std::vector<Line> tokenize(std::string_view text);

double parse_double(std::string_view s, int line, bool allow_infinite = false);
std::vector<double> parse_list(std::string_view s, int line, bool allow_infinite = false);

/// Shortest text that parses back to the identical double.
std::string format_double(double v);
std::string format_list(const double* v, std::size_t n);
std::string format_vector(const VecX& v);

std::string read_file(const std::string& path);

}  // namespace wbstab::text
