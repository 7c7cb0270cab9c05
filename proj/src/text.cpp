#include "wbstab/text.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wbstab/errors.hpp"

namespace wbstab::text {

const std::string& Line::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ParseError(number, "missing '" + key + "='");
  return it->second;
}

double Line::number_of(const std::string& key) const { return parse_double(get(key), number); }

std::vector<double> Line::list_of(const std::string& key, std::size_t expected) const {
  auto v = parse_list(get(key), number);
  if (v.size() != expected)
    throw ParseError(number, "'" + key + "' expects " + std::to_string(expected) + " values, got " +
                                 std::to_string(v.size()));
  return v;
}

std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> lines;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    ++number;
    pos = end + 1;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);

    Line line;
    line.number = number;
    std::istringstream in{std::string(raw)};
    std::string tok;
    while (in >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) {
        line.words.push_back(tok);
        continue;
      }
      std::string key = tok.substr(0, eq);
      std::string value = tok.substr(eq + 1);
      // tolerate "key = value" and "key= value"
      if (key.empty() && !line.words.empty()) {
        key = line.words.back();
        line.words.pop_back();
      }
      if (value.empty() && !(in >> value)) throw ParseError(number, "missing value for '" + key + "'");
      if (key.empty()) throw ParseError(number, "empty key");
      if (line.values.count(key)) throw ParseError(number, "duplicate key '" + key + "'");
      line.values.emplace(std::move(key), std::move(value));
    }
    if (!line.words.empty() || !line.values.empty()) lines.push_back(std::move(line));
    if (end == text.size()) break;
  }
  return lines;
}

double parse_double(std::string_view s, int line, bool allow_infinite) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || std::isnan(v) || (!allow_infinite && std::isinf(v)))
    throw ParseError(line, "invalid number '" + std::string(s) + "'");
  return v;
}

std::vector<double> parse_list(std::string_view s, int line, bool allow_infinite) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = s.find(',', pos);
    out.push_back(parse_double(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos), line,
                                allow_infinite));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_list(const double* v, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::string format_vector(const VecX& v) { return format_list(v.data(), static_cast<std::size_t>(v.size())); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace wbstab::text
