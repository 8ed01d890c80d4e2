#include "kegat/linker.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "kegat/error.hpp"

namespace kegat::linker {

namespace {

constexpr std::array<std::string_view, 4> kMarkers = {"[CLS]", "[SEP]", "[PAD]", "[UNK]"};

constexpr std::array<std::string_view, 56> kStopwords = {
    "a",     "an",    "the",  "this",   "that",  "these", "those", "i",     "me",    "my",
    "you",   "your",  "he",   "him",    "his",   "she",   "her",   "it",    "its",   "we",
    "us",    "our",   "they", "them",   "their", "is",    "am",    "are",   "was",   "were",
    "be",    "been",  "being", "do",    "does",  "did",   "have",  "has",   "had",   "will",
    "would", "shall", "should", "can",  "could", "may",   "might", "must",  "of",    "to",
    "in",    "on",    "at",   "and",    "or",    "not"};

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

bool is_reserved_marker(std::string_view token) {
  return std::find(kMarkers.begin(), kMarkers.end(), token) != kMarkers.end();
}

bool is_stopword(std::string_view token) {
  return std::find(kStopwords.begin(), kStopwords.end(), token) != kStopwords.end();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view chunk = text.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;
    if (is_reserved_marker(chunk)) {
      out.emplace_back(chunk);
      continue;
    }
    std::string word;
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const auto c = static_cast<unsigned char>(chunk[k]);
      if (word_char(c)) {
        word.push_back(static_cast<char>(std::tolower(c)));
      } else if (c == '\'' && !word.empty() && k + 1 < chunk.size() &&
                 word_char(static_cast<unsigned char>(chunk[k + 1]))) {
        word.push_back('\'');
      } else if (!word.empty()) {
        out.push_back(std::move(word));
        word.clear();
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  }
  return out;
}

std::vector<TokenSpan> extract_entities(std::span<const std::string> tokens,
                                        const kgstore::KnowledgeGraph& graph,
                                        std::size_t max_ngram) {
  if (max_ngram < 1) throw UsageError("max_ngram must be at least 1");
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    const std::size_t longest = std::min(max_ngram, tokens.size() - i);
    for (std::size_t n = longest; n >= 1 && !matched; --n) {
      bool has_marker = false;
      std::string id;
      for (std::size_t k = i; k < i + n; ++k) {
        has_marker = has_marker || is_reserved_marker(tokens[k]);
        if (k > i) id.push_back('_');
        id += tokens[k];
      }
      if (has_marker || is_stopword(id) || !graph.contains(id)) continue;
      spans.push_back({i, i + n, std::move(id)});
      i += n;
      matched = true;
    }
    if (!matched) ++i;
  }
  return spans;
}

}  // namespace kegat::linker
