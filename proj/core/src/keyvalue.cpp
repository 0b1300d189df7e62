#include "stepsim/keyvalue.hpp"

#include "stepsim/corpus.hpp"
#include "stepsim/csv.hpp"
#include "stepsim/error.hpp"

namespace stepsim {

namespace {

std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"') quoted = !quoted;
    if (line[k] == '#' && !quoted) return std::string(line.substr(0, k));
  }
  return std::string(line);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  kv.source_ = source;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    const std::string line = std::string(csv::trim(strip_comment(text.substr(pos, end - pos))));
    pos = end + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, line_no, 1, "unterminated section header");
      section = std::string(csv::trim(std::string_view(line).substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError(source, line_no, 1, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, 1, "expected key = value");
    std::string key(csv::trim(std::string_view(line).substr(0, eq)));
    std::string value(csv::trim(std::string_view(line).substr(eq + 1)));
    if (key.empty()) throw ParseError(source, line_no, 1, "empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    if (kv.values_.count(key))
      throw ParseError(source, line_no, 1, "duplicate key \"" + key + "\"");
    kv.values_[key] = value;
    kv.lines_[key] = line_no;
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) { return parse(corpus::read_text_file(path), path); }

std::optional<std::string> KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<long long> KeyValues::get_int(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  long long out = 0;
  if (csv::parse_int(*v, out)) return out;
  auto it = lines_.find(key);
  throw ParseError(source_, it == lines_.end() ? 0 : it->second, 1, "\"" + key + "\" is not an integer");
}

std::optional<double> KeyValues::get_double(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  double out = 0.0;
  if (csv::parse_double(*v, out)) return out;
  auto it = lines_.find(key);
  throw ParseError(source_, it == lines_.end() ? 0 : it->second, 1, "\"" + key + "\" is not a number");
}

std::optional<bool> KeyValues::get_bool(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  auto it = lines_.find(key);
  throw ParseError(source_, it == lines_.end() ? 0 : it->second, 1, "\"" + key + "\" is not a boolean");
}

}  // namespace stepsim
