#include "molext/config.hpp"

#include "molext/csv.hpp"
#include "molext/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace molext {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string describe(const std::string& field, int line, const std::string& message) {
  std::string out;
  if (line > 0) out += "line " + std::to_string(line) + ": ";
  if (!field.empty()) out += field + ": ";
  return out + message;
}

} // namespace

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : std::runtime_error(describe(field, line, message)), field_(std::move(field)), line_(line) {}

Config Config::parse(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("", lineno, "empty section name");
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(key, lineno, "key outside of any [section]");
    if (key.empty()) throw ConfigError("", lineno, "empty key");
    auto& sec = cfg.sections_[section];
    if (sec.count(key)) throw ConfigError(section + "." + key, lineno, "duplicate key");
    sec[key] = Entry{value, lineno};
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::optional<double> Config::find_number(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return std::nullopt;
  const auto kv = it->second.find(key);
  if (kv == it->second.end()) return std::nullopt;
  try {
    return csv::parse_number(kv->second.value, "value");
  } catch (const ArgumentError&) {
    throw ConfigError(section + "." + key, kv->second.line, "'" + kv->second.value + "' is not a number");
  }
}

double Config::number(const std::string& section, const std::string& key) const {
  if (auto v = find_number(section, key)) return *v;
  throw ConfigError(section + "." + key, 0, "required field missing");
}

double Config::number_or(const std::string& section, const std::string& key, double fallback) const {
  return find_number(section, key).value_or(fallback);
}

std::string Config::string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  const auto kv = it->second.find(key);
  return kv == it->second.end() ? fallback : kv->second.value;
}

void Config::require_known(const std::string& section, const std::vector<std::string>& allowed) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return;
  for (const auto& [key, entry] : it->second)
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(section + "." + key, entry.line, "unknown key");
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = Entry{value, 0};
}

std::string Config::text() const {
  std::ostringstream out;
  for (const auto& [name, sec] : sections_) {
    out << '[' << name << "]\n";
    for (const auto& [key, entry] : sec) out << key << " = " << entry.value << '\n';
  }
  return out.str();
}

} // namespace molext
