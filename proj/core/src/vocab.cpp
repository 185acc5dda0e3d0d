#include "zipfmax/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace zipfmax {

namespace {

struct WordStat {
  std::string word;
  int64_t count = 0;
  int64_t first_seen = 0;
};

template <typename Fn>
void for_each_token(std::string_view text, bool lowercase, Fn&& fn) {
  std::string token;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      token.assign(text.substr(start, i - start));
      if (lowercase) {
        for (char& ch : token) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      fn(token);
    }
  }
}

void finalize_probs(Vocabulary& v) {
  int64_t total = 0;
  for (const int64_t c : v.counts) total += c;
  v.probs.resize(v.counts.size());
  for (size_t i = 0; i < v.counts.size(); ++i) {
    v.probs[i] = total > 0 ? static_cast<double>(v.counts[i]) / static_cast<double>(total) : 0.0;
  }
}

}  // namespace

Vocabulary build_vocabulary(std::string_view text, int64_t max_size, int64_t min_count,
                            bool lowercase) {
  if (max_size < 1) throw std::invalid_argument("build_vocabulary: max_size must be >= 1");

  std::unordered_map<std::string, int64_t> index;
  std::vector<WordStat> stats;
  int64_t position = 0;
  for_each_token(text, lowercase, [&](const std::string& token) {
    auto [it, inserted] = index.try_emplace(token, static_cast<int64_t>(stats.size()));
    if (inserted) stats.push_back({token, 0, position});
    ++stats[static_cast<size_t>(it->second)].count;
    ++position;
  });
  if (stats.empty()) throw std::invalid_argument("build_vocabulary: corpus has no tokens");

  // Stable sort keeps first-occurrence order among equal counts.
  std::stable_sort(stats.begin(), stats.end(), [](const WordStat& a, const WordStat& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.first_seen < b.first_seen;
  });

  // Keep the most frequent words; everything truncated or under min_count
  // folds its count into the unknown token.
  int64_t unk_count = 0;
  int64_t unk_first_seen = position;  // after every real word: loses count ties
  std::vector<WordStat> kept;
  for (size_t i = 0; i < stats.size(); ++i) {
    WordStat& s = stats[i];
    if (s.word == kUnknownToken) {  // literal occurrences merge into the fold
      unk_count += s.count;
      unk_first_seen = std::min(unk_first_seen, s.first_seen);
      continue;
    }
    if (static_cast<int64_t>(kept.size()) < max_size && s.count >= min_count) {
      kept.push_back(std::move(s));
    } else {
      unk_count += s.count;
    }
  }
  kept.push_back({kUnknownToken, unk_count, unk_first_seen});
  std::stable_sort(kept.begin(), kept.end(), [](const WordStat& a, const WordStat& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.first_seen < b.first_seen;
  });

  Vocabulary v;
  for (auto& s : kept) {
    if (s.word == kUnknownToken) v.unk_index = static_cast<int64_t>(v.words.size());
    v.words.push_back(std::move(s.word));
    v.counts.push_back(s.count);
  }
  finalize_probs(v);
  return v;
}

double coverage(const Vocabulary& v, double top_fraction) {
  if (top_fraction <= 0.0 || top_fraction > 1.0) {
    throw std::invalid_argument("coverage: top_fraction must be in (0, 1]");
  }
  const int64_t n = std::min<int64_t>(
      v.size(), static_cast<int64_t>(std::ceil(top_fraction * static_cast<double>(v.size()))));
  double mass = 0.0;
  for (int64_t i = 0; i < n; ++i) mass += v.probs[static_cast<size_t>(i)];
  return mass;
}

TokenStream encode(std::string_view text, const Vocabulary& v, bool lowercase) {
  std::unordered_map<std::string_view, int32_t> index;
  index.reserve(v.words.size());
  for (size_t i = 0; i < v.words.size(); ++i) index.emplace(v.words[i], static_cast<int32_t>(i));

  TokenStream stream;
  for_each_token(text, lowercase, [&](const std::string& token) {
    const auto it = index.find(token);
    stream.push_back(it != index.end() ? it->second : static_cast<int32_t>(v.unk_index));
  });
  return stream;
}

std::string decode(const TokenStream& stream, const Vocabulary& v) {
  std::string out;
  for (size_t i = 0; i < stream.size(); ++i) {
    if (i > 0) out += ' ';
    const auto idx = static_cast<size_t>(stream[i]);
    if (idx >= v.words.size()) throw std::out_of_range("decode: token index out of range");
    out += v.words[idx];
  }
  return out;
}

void save_vocabulary(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_vocabulary: cannot open " + path);
  for (size_t i = 0; i < v.words.size(); ++i) {
    out << v.words[i] << '\t' << v.counts[i] << '\n';
  }
  if (!out) throw std::runtime_error("save_vocabulary: write failed for " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_vocabulary: cannot open " + path);
  Vocabulary v;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("load_vocabulary: missing tab on line " + std::to_string(line_no) +
                               " of " + path);
    }
    v.words.push_back(line.substr(0, tab));
    v.counts.push_back(std::stoll(line.substr(tab + 1)));
    if (v.words.back() == kUnknownToken) v.unk_index = static_cast<int64_t>(v.words.size()) - 1;
  }
  if (v.words.empty()) throw std::runtime_error("load_vocabulary: empty file " + path);
  for (size_t i = 1; i < v.counts.size(); ++i) {
    if (v.counts[i] > v.counts[i - 1]) {
      throw std::runtime_error("load_vocabulary: counts not descending at line " +
                               std::to_string(i + 1) + " of " + path);
    }
  }
  finalize_probs(v);
  return v;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace zipfmax
