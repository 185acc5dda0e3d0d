#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zipfmax/matrix.hpp"

namespace zipfmax {

// Sectioned binary container for model state: named payloads behind an
// 8-byte magic header, closed by a 64-bit FNV-1a digest of every preceding
// byte. Numbers are stored in host (little-endian) byte order. Loading
// verifies the magic and the digest before parsing, so a truncated or
// bit-flipped file fails with a clear error instead of yielding garbage.
//
// Section kinds: f32/f64 matrices (with dims), int64/double lists, strings,
// and int64/double scalars. Names are unique within a file.

class CheckpointWriter {
 public:
  void add_matrix(const std::string& name, const Matrix<float>& m);
  void add_matrix(const std::string& name, const Matrix<double>& m);
  void add_i64(const std::string& name, int64_t value);
  void add_f64(const std::string& name, double value);
  void add_i64_list(const std::string& name, const std::vector<int64_t>& values);
  void add_f64_list(const std::string& name, const std::vector<double>& values);
  void add_string(const std::string& name, const std::string& value);

  void save(const std::string& path) const;

 private:
  void begin_section(const std::string& name, uint8_t tag);

  std::string body_;
  std::vector<std::string> names_;
  uint64_t section_count_ = 0;
};

class Checkpoint {
 public:
  // Reads and validates the whole file; throws std::runtime_error on a bad
  // magic, a digest mismatch, or a malformed section table.
  static Checkpoint load(const std::string& path);

  bool has(const std::string& name) const;
  // Typed getters throw std::runtime_error naming the section when it is
  // missing or holds a different kind.
  Matrix<float> matrix_f32(const std::string& name) const;
  Matrix<double> matrix_f64(const std::string& name) const;
  template <typename T>
  Matrix<T> matrix(const std::string& name) const;
  int64_t i64(const std::string& name) const;
  double f64(const std::string& name) const;
  std::vector<int64_t> i64_list(const std::string& name) const;
  std::vector<double> f64_list(const std::string& name) const;
  std::string str(const std::string& name) const;

  // Number of sections holding a matrix of either precision.
  int64_t matrix_section_count() const;

 private:
  struct Section {
    uint8_t tag = 0;
    size_t offset = 0;  // payload start within data_
    size_t length = 0;  // payload length in bytes
  };

  const Section& section(const std::string& name, uint8_t tag) const;

  std::string data_;
  std::map<std::string, Section> sections_;
};

template <>
inline Matrix<float> Checkpoint::matrix<float>(const std::string& name) const {
  return matrix_f32(name);
}
template <>
inline Matrix<double> Checkpoint::matrix<double>(const std::string& name) const {
  return matrix_f64(name);
}

}  // namespace zipfmax
