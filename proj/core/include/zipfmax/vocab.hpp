#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace zipfmax {

inline constexpr const char* kUnknownToken = "<unk>";

// Frequency-sorted vocabulary with unigram probabilities. Index order is
// strictly non-increasing count; ties keep first-occurrence order. The
// unknown token absorbs folded words and is placed by its own count.
struct Vocabulary {
  std::vector<std::string> words;
  std::vector<int64_t> counts;
  std::vector<double> probs;
  int64_t unk_index = -1;

  int64_t size() const { return static_cast<int64_t>(words.size()); }
};

using TokenStream = std::vector<int32_t>;

// Builds the vocabulary of at most `max_size` most-frequent words plus the
// unknown token. Words seen fewer than `min_count` times fold into unknown.
// Tokens are whitespace-separated; `lowercase` folds ASCII case first.
Vocabulary build_vocabulary(std::string_view text, int64_t max_size, int64_t min_count = 1,
                            bool lowercase = false);

// Probability mass of the ceil(top_fraction * size) most frequent words.
double coverage(const Vocabulary& v, double top_fraction);

// Maps each token to its index, or unk_index when absent.
TokenStream encode(std::string_view text, const Vocabulary& v, bool lowercase = false);

// Inverse of encode up to unknown-token substitution; tokens joined by ' '.
std::string decode(const TokenStream& stream, const Vocabulary& v);

// One `word<TAB>count` per line, descending count; line number = index.
void save_vocabulary(const Vocabulary& v, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

// Reads a whole file; reported error when the file cannot be opened.
std::string read_text_file(const std::string& path);

}  // namespace zipfmax
