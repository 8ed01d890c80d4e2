#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kegat/kgstore.hpp"

namespace kegat::linker {

// Lowercased word tokens. Punctuation separates words and is dropped, except
// an apostrophe between two word characters. The reserved markers [CLS],
// [SEP], [PAD] and [UNK] pass through unchanged.
std::vector<std::string> tokenize(std::string_view text);

bool is_reserved_marker(std::string_view token);

// Articles, pronouns, auxiliaries and similar words that are never linked.
bool is_stopword(std::string_view token);

struct TokenSpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::string concept_id;
  bool operator==(const TokenSpan&) const = default;
};

inline constexpr std::size_t kDefaultMaxNgram = 4;

// Greedy left-to-right longest match of underscore-joined n-grams against
// the graph's concept ids. Spans never overlap and come back in start order.
std::vector<TokenSpan> extract_entities(std::span<const std::string> tokens,
                                        const kgstore::KnowledgeGraph& graph,
                                        std::size_t max_ngram = kDefaultMaxNgram);

}  // namespace kegat::linker
