#pragma once

#include <map>
#include <string>

namespace tblab {

// Line-oriented key-value config, format tag "tb-cfg-1".
//
//   # comment
//   format = tb-cfg-1
//   model.n_layers = 4
//   editor.lr = 0.01
//
// Dotted keys form the tree; values are bare strings parsed on access.
// The first non-blank, non-comment line must set format = tb-cfg-1.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse_string(const std::string& text);
  static KvConfig parse_file(const std::string& path);

  bool has(const std::string& key) const { return values.count(key) > 0; }

  // Each getter returns the fallback when the key is absent and throws
  // ConfigError when the stored value does not parse as the requested type.
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // CLI layering: explicit flag values replace file values.
  void override_value(const std::string& key, const std::string& value);
};

}  // namespace tblab
