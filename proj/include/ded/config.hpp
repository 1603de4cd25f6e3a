#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ded {

enum class ValueType { integer, real, choice };

struct ConfigKey {
  std::string name;
  std::string default_value;
  ValueType type = ValueType::real;
  std::vector<std::string> choices;  // for ValueType::choice
  std::string help;
};

// Flat `section.key = value` settings. Every key must appear in the
// registry; values are type-checked on assignment. Layering is by call
// order: defaults, then file, then command-line overrides.
class Config {
 public:
  Config();

  static const std::vector<ConfigKey>& registry();

  void set(const std::string& key, const std::string& value);
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;

  // Sorted `key = value` lines; parses back to an equal Config.
  std::string to_text() const;
  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ded
