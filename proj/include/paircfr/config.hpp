#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircfr/eval.hpp"

namespace paircfr {

// Minimal TOML-compatible config tree: [section.subsection] headers, comments
// with '#', and `key = value` lines where a value is a quoted string, number,
// boolean, or a flat array of those. Keys are addressed as
// "section.subsection.key".
class ConfigTree {
 public:
  static ConfigTree parse_file(const std::string& path);
  static ConfigTree parse_string(const std::string& text);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  void set(const std::string& key, const std::string& raw_value);

  // Serializes back to TOML text with keys grouped by section, sorted.
  std::string to_toml() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  // raw (unquoted-string or literal) values by dotted key
  std::map<std::string, std::string> values_;
};

// Builds the full experiment configuration from a config tree, applying the
// documented defaults for any missing key. Throws std::invalid_argument on
// unknown enum values or malformed entries.
ExperimentConfig experiment_from_config(const ConfigTree& tree);

// Sweep grid from the [sweep] section (missing keys leave a dimension empty).
SweepGrid sweep_grid_from_config(const ConfigTree& tree);

// Echoes the effective configuration (defaults resolved) as TOML.
std::string experiment_to_toml(const ExperimentConfig& cfg);

}  // namespace paircfr
