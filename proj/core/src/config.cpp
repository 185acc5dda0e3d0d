#include "zipfmax/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zipfmax {

namespace {

std::string_view trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
    ++b;
  }
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
    --e;
  }
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_text(std::string_view text) {
  KeyValueConfig config;
  size_t line_start = 0;
  int64_t line_no = 0;
  while (line_start <= text.size()) {
    const size_t nl = text.find('\n', line_start);
    const std::string_view line =
        text.substr(line_start, nl == std::string_view::npos ? text.size() - line_start
                                                             : nl - line_start);
    ++line_no;
    const std::string_view body = trim(line);
    if (!body.empty() && body.front() != '#') {
      const size_t eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": expected key=value, got '" + std::string(body) + "'");
      }
      const std::string key(trim(body.substr(0, eq)));
      const std::string value(trim(body.substr(eq + 1)));
      if (key.empty()) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
      }
      if (config.has(key)) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": duplicate key '" +
                                    key + "'");
      }
      config.entries_.emplace_back(key, value);
    }
    if (nl == std::string_view::npos) {
      break;
    }
    line_start = nl + 1;
  }
  return config;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open config file '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return from_text(buffer.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) {
      return &v;
    }
  }
  return nullptr;
}

bool KeyValueConfig::has(const std::string& key) const { return find(key) != nullptr; }

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueConfig::set(const std::string& key, int64_t value) {
  set(key, std::to_string(value));
}

void KeyValueConfig::set(const std::string& key, double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  set(key, std::string(buf, res.ptr));
}

void KeyValueConfig::set(const std::string& key, bool value) {
  set(key, std::string(value ? "true" : "false"));
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const std::string* v = find(key);
  if (v == nullptr) {
    throw std::invalid_argument("config key '" + key + "' is missing");
  }
  return *v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v == nullptr ? fallback : *v;
}

int64_t KeyValueConfig::get_i64(const std::string& key) const {
  const std::string value = get_string(key);
  int64_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    bad_value(key, value, "an integer");
  }
  return out;
}

int64_t KeyValueConfig::get_i64(const std::string& key, int64_t fallback) const {
  return has(key) ? get_i64(key) : fallback;
}

double KeyValueConfig::get_f64(const std::string& key) const {
  const std::string value = get_string(key);
  if (value.empty()) {
    bad_value(key, value, "a number");
  }
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size()) {
    bad_value(key, value, "a number");
  }
  return out;
}

double KeyValueConfig::get_f64(const std::string& key, double fallback) const {
  return has(key) ? get_f64(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string value = get_string(key);
  if (value == "true" || value == "1") {
    return true;
  }
  if (value == "false" || value == "0") {
    return false;
  }
  bad_value(key, value, "a boolean (true/false/1/0)");
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void KeyValueConfig::require_known_keys(std::span<const std::string_view> known) const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      if (!unknown.empty()) {
        unknown += ", ";
      }
      unknown += "'" + k + "'";
    }
  }
  if (!unknown.empty()) {
    throw std::invalid_argument("unknown config key(s): " + unknown);
  }
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValueConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write config file '" + path + "'");
  }
  out << to_text();
  if (!out.flush()) {
    throw std::runtime_error("cannot write config file '" + path + "'");
  }
}

}  // namespace zipfmax
