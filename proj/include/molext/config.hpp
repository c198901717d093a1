#pragma once

// Flat key-value run configuration:
//
//   # comment
//   [emitter]
//   gamma = 35      # MHz
//
// Keys live in sections; each value keeps its line number for diagnostics.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace molext {

// Configuration problem; `field` is "section.key" (or empty for syntax errors).
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

private:
  std::string field_;
  int line_;
};

class Config {
public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }
  bool has(const std::string& section, const std::string& key) const;

  // Throws ConfigError naming the field when missing or not a number.
  double number(const std::string& section, const std::string& key) const;
  double number_or(const std::string& section, const std::string& key, double fallback) const;
  std::optional<double> find_number(const std::string& section, const std::string& key) const;
  std::string string_or(const std::string& section, const std::string& key, const std::string& fallback) const;

  // Rejects keys outside `allowed` for the section.
  void require_known(const std::string& section, const std::vector<std::string>& allowed) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::map<std::string, std::map<std::string, Entry>>& sections() const { return sections_; }
  const std::string& source() const { return source_; }
  std::string text() const; // canonical re-serialization

private:
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string source_;
};

} // namespace molext
