#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zipfmax {

// Flat key=value configuration with insertion order preserved. One entry per
// line; blank lines and lines starting with '#' are ignored. Keys are unique;
// a duplicate is a parse error so silent overrides cannot hide a typo.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_text(std::string_view text);

  bool has(const std::string& key) const;

  // Inserts, or overwrites in place keeping the entry's position.
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, double value);
  void set(const std::string& key, bool value);

  // Getters throw when the key is missing (or the value does not parse);
  // the fallback overloads return it instead when the key is absent.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_i64(const std::string& key) const;
  int64_t get_i64(const std::string& key, int64_t fallback) const;
  double get_f64(const std::string& key) const;
  double get_f64(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Rejects any key outside `known`, listing each offender.
  void require_known_keys(std::span<const std::string_view> known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_text() const;
  void save(const std::string& path) const;

 private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace zipfmax
