#include "zipfmax/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace zipfmax {

namespace {

constexpr char kMagic[8] = {'Z', 'M', 'A', 'X', 'C', 'K', 'P', '1'};

constexpr uint8_t kTagMatrixF32 = 0;
constexpr uint8_t kTagMatrixF64 = 1;
constexpr uint8_t kTagI64List = 2;
constexpr uint8_t kTagF64List = 3;
constexpr uint8_t kTagString = 4;
constexpr uint8_t kTagI64 = 5;
constexpr uint8_t kTagF64 = 6;

const char* tag_name(uint8_t tag) {
  switch (tag) {
    case kTagMatrixF32: return "f32 matrix";
    case kTagMatrixF64: return "f64 matrix";
    case kTagI64List: return "int64 list";
    case kTagF64List: return "double list";
    case kTagString: return "string";
    case kTagI64: return "int64";
    case kTagF64: return "double";
    default: return "unknown";
  }
}

uint64_t fnv1a(const char* data, size_t n) {
  uint64_t h = 14695981039346656037ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename V>
void append_raw(std::string& out, const V& value) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &value, sizeof(V));
  out.append(bytes, sizeof(V));
}

template <typename V>
V read_raw(const std::string& data, size_t& pos) {
  if (pos + sizeof(V) > data.size()) {
    throw std::runtime_error("checkpoint: truncated section table");
  }
  V value;
  std::memcpy(&value, data.data() + pos, sizeof(V));
  pos += sizeof(V);
  return value;
}

template <typename E>
void append_elements(std::string& out, const E* values, size_t n) {
  out.append(reinterpret_cast<const char*>(values), n * sizeof(E));
}

}  // namespace

void CheckpointWriter::begin_section(const std::string& name, uint8_t tag) {
  if (name.empty() || name.size() > 0xffff) {
    throw std::invalid_argument("checkpoint: section name must be 1..65535 bytes");
  }
  for (const auto& existing : names_) {
    if (existing == name) {
      throw std::invalid_argument("checkpoint: duplicate section '" + name + "'");
    }
  }
  names_.push_back(name);
  append_raw<uint16_t>(body_, static_cast<uint16_t>(name.size()));
  body_.append(name);
  append_raw<uint8_t>(body_, tag);
  ++section_count_;
}

void CheckpointWriter::add_matrix(const std::string& name, const Matrix<float>& m) {
  begin_section(name, kTagMatrixF32);
  append_raw<int64_t>(body_, m.rows());
  append_raw<int64_t>(body_, m.cols());
  append_elements(body_, m.data(), m.size());
}

void CheckpointWriter::add_matrix(const std::string& name, const Matrix<double>& m) {
  begin_section(name, kTagMatrixF64);
  append_raw<int64_t>(body_, m.rows());
  append_raw<int64_t>(body_, m.cols());
  append_elements(body_, m.data(), m.size());
}

void CheckpointWriter::add_i64(const std::string& name, int64_t value) {
  begin_section(name, kTagI64);
  append_raw<int64_t>(body_, value);
}

void CheckpointWriter::add_f64(const std::string& name, double value) {
  begin_section(name, kTagF64);
  append_raw<double>(body_, value);
}

void CheckpointWriter::add_i64_list(const std::string& name, const std::vector<int64_t>& values) {
  begin_section(name, kTagI64List);
  append_raw<uint64_t>(body_, values.size());
  append_elements(body_, values.data(), values.size());
}

void CheckpointWriter::add_f64_list(const std::string& name, const std::vector<double>& values) {
  begin_section(name, kTagF64List);
  append_raw<uint64_t>(body_, values.size());
  append_elements(body_, values.data(), values.size());
}

void CheckpointWriter::add_string(const std::string& name, const std::string& value) {
  begin_section(name, kTagString);
  append_raw<uint64_t>(body_, value.size());
  body_.append(value);
}

void CheckpointWriter::save(const std::string& path) const {
  std::string blob;
  blob.reserve(sizeof(kMagic) + sizeof(uint64_t) + body_.size() + sizeof(uint64_t));
  blob.append(kMagic, sizeof(kMagic));
  append_raw<uint64_t>(blob, section_count_);
  blob.append(body_);
  append_raw<uint64_t>(blob, fnv1a(blob.data(), blob.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (data.size() < sizeof(kMagic) + 2 * sizeof(uint64_t) ||
      std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file (bad magic)");
  }
  size_t pos = data.size() - sizeof(uint64_t);
  const uint64_t stored = read_raw<uint64_t>(data, pos);
  const uint64_t actual = fnv1a(data.data(), data.size() - sizeof(uint64_t));
  if (stored != actual) {
    throw std::runtime_error("checkpoint: '" + path + "' fails its checksum (file corrupt)");
  }

  Checkpoint ckpt;
  ckpt.data_ = std::move(data);
  const std::string& blob = ckpt.data_;
  pos = sizeof(kMagic);
  const uint64_t count = read_raw<uint64_t>(blob, pos);
  const size_t end = blob.size() - sizeof(uint64_t);

  for (uint64_t s = 0; s < count; ++s) {
    const auto name_len = read_raw<uint16_t>(blob, pos);
    if (pos + name_len > end) throw std::runtime_error("checkpoint: truncated section name");
    std::string name(blob.data() + pos, name_len);
    pos += name_len;
    const auto tag = read_raw<uint8_t>(blob, pos);

    size_t payload_len = 0;
    switch (tag) {
      case kTagMatrixF32:
      case kTagMatrixF64: {
        size_t peek = pos;
        const auto rows = read_raw<int64_t>(blob, peek);
        const auto cols = read_raw<int64_t>(blob, peek);
        if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: negative matrix shape");
        const size_t elem = tag == kTagMatrixF32 ? sizeof(float) : sizeof(double);
        payload_len = 2 * sizeof(int64_t) +
                      static_cast<size_t>(rows) * static_cast<size_t>(cols) * elem;
        break;
      }
      case kTagI64List:
      case kTagF64List: {
        size_t peek = pos;
        const auto n = read_raw<uint64_t>(blob, peek);
        payload_len = sizeof(uint64_t) + n * sizeof(int64_t);
        break;
      }
      case kTagString: {
        size_t peek = pos;
        const auto n = read_raw<uint64_t>(blob, peek);
        payload_len = sizeof(uint64_t) + n;
        break;
      }
      case kTagI64:
      case kTagF64:
        payload_len = 8;
        break;
      default:
        throw std::runtime_error("checkpoint: unknown section kind in '" + name + "'");
    }
    if (pos + payload_len > end) {
      throw std::runtime_error("checkpoint: section '" + name + "' overruns the file");
    }
    if (!ckpt.sections_.emplace(name, Section{tag, pos, payload_len}).second) {
      throw std::runtime_error("checkpoint: duplicate section '" + name + "'");
    }
    pos += payload_len;
  }
  if (pos != end) throw std::runtime_error("checkpoint: trailing bytes after last section");
  return ckpt;
}

bool Checkpoint::has(const std::string& name) const { return sections_.count(name) != 0; }

const Checkpoint::Section& Checkpoint::section(const std::string& name, uint8_t tag) const {
  const auto it = sections_.find(name);
  if (it == sections_.end()) {
    throw std::runtime_error("checkpoint: missing section '" + name + "'");
  }
  if (it->second.tag != tag) {
    throw std::runtime_error("checkpoint: section '" + name + "' holds a " +
                             tag_name(it->second.tag) + ", not a " + tag_name(tag));
  }
  return it->second;
}

Matrix<float> Checkpoint::matrix_f32(const std::string& name) const {
  const Section& sec = section(name, kTagMatrixF32);
  size_t pos = sec.offset;
  const auto rows = read_raw<int64_t>(data_, pos);
  const auto cols = read_raw<int64_t>(data_, pos);
  Matrix<float> m(rows, cols);
  std::memcpy(m.data(), data_.data() + pos, m.size() * sizeof(float));
  return m;
}

Matrix<double> Checkpoint::matrix_f64(const std::string& name) const {
  const Section& sec = section(name, kTagMatrixF64);
  size_t pos = sec.offset;
  const auto rows = read_raw<int64_t>(data_, pos);
  const auto cols = read_raw<int64_t>(data_, pos);
  Matrix<double> m(rows, cols);
  std::memcpy(m.data(), data_.data() + pos, m.size() * sizeof(double));
  return m;
}

int64_t Checkpoint::i64(const std::string& name) const {
  size_t pos = section(name, kTagI64).offset;
  return read_raw<int64_t>(data_, pos);
}

double Checkpoint::f64(const std::string& name) const {
  size_t pos = section(name, kTagF64).offset;
  return read_raw<double>(data_, pos);
}

std::vector<int64_t> Checkpoint::i64_list(const std::string& name) const {
  size_t pos = section(name, kTagI64List).offset;
  const auto n = read_raw<uint64_t>(data_, pos);
  std::vector<int64_t> values(n);
  std::memcpy(values.data(), data_.data() + pos, n * sizeof(int64_t));
  return values;
}

std::vector<double> Checkpoint::f64_list(const std::string& name) const {
  size_t pos = section(name, kTagF64List).offset;
  const auto n = read_raw<uint64_t>(data_, pos);
  std::vector<double> values(n);
  std::memcpy(values.data(), data_.data() + pos, n * sizeof(double));
  return values;
}

std::string Checkpoint::str(const std::string& name) const {
  size_t pos = section(name, kTagString).offset;
  const auto n = read_raw<uint64_t>(data_, pos);
  return std::string(data_.data() + pos, n);
}

int64_t Checkpoint::matrix_section_count() const {
  int64_t n = 0;
  for (const auto& [name, sec] : sections_) {
    (void)name;
    if (sec.tag == kTagMatrixF32 || sec.tag == kTagMatrixF64) ++n;
  }
  return n;
}

}  // namespace zipfmax
