#include <doctest.h>

#include <random>
#include <set>

#include "kegat/linker.hpp"
#include "test_support.hpp"

using namespace kegat;
using Tokens = std::vector<std::string>;

TEST_CASE("tokenize lowercases and drops punctuation") {
  CHECK(linker::tokenize("He put an elephant into the fridge.") ==
        Tokens{"he", "put", "an", "elephant", "into", "the", "fridge"});
  CHECK(linker::tokenize("").empty());
  CHECK(linker::tokenize("  \t \n ").empty());
  CHECK(linker::tokenize("don't stop") == Tokens{"don't", "stop"});
  CHECK(linker::tokenize("[CLS] Hi [SEP]") == Tokens{"[CLS]", "hi", "[SEP]"});
}

TEST_CASE("single-word entities are found in order") {
  const auto g = testing::sugar_coffee_graph();
  const Tokens toks = linker::tokenize("he put sugar in the coffee");
  const auto spans = linker::extract_entities(toks, g);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == linker::TokenSpan{2, 3, "sugar"});
  CHECK(spans[1] == linker::TokenSpan{5, 6, "coffee"});
}

TEST_CASE("longest match wins over shorter prefixes") {
  const auto g = testing::graph_of({{"ice", "/r/IsA", "water", 1.0},
                                    {"ice_cream", "/r/IsA", "dessert", 1.0},
                                    {"ice_cream_cone", "/r/IsA", "snack", 1.0}});
  const Tokens toks = {"an", "ice", "cream", "cone", "melted"};
  const auto spans = linker::extract_entities(toks, g);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == linker::TokenSpan{1, 4, "ice_cream_cone"});
  const auto short_spans = linker::extract_entities(toks, g, 2);
  REQUIRE(short_spans.size() == 1);
  CHECK(short_spans[0] == linker::TokenSpan{1, 3, "ice_cream"});
}

TEST_CASE("stopwords and markers are never linked") {
  const auto g = testing::graph_of({{"the", "/r/IsA", "article", 1.0}, {"cat", "/r/IsA", "animal", 1.0}});
  const Tokens toks = {"[CLS]", "the", "cat", "[SEP]"};
  const auto spans = linker::extract_entities(toks, g);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].concept_id == "cat");
}

namespace {

std::string join(const Tokens& t, std::size_t a, std::size_t b) {
  std::string s;
  for (std::size_t i = a; i < b; ++i) s += (i > a ? "_" : "") + t[i];
  return s;
}

// Does any n-gram (n <= max_n) starting at i match a linkable concept?
bool matches_at(const Tokens& t, std::size_t i, std::size_t n, const kgstore::KnowledgeGraph& g) {
  if (i + n > t.size()) return false;
  const auto id = join(t, i, i + n);
  return g.contains(id) && !linker::is_stopword(id);
}

}  // namespace

TEST_CASE("random inputs satisfy the greedy longest-match characterization") {
  std::mt19937_64 rng(3);
  const Tokens words = {"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<kgstore::Edge> edges;
    std::uniform_int_distribution<int> len(1, 4);
    for (int c = 0; c < 6; ++c) {
      Tokens w(len(rng));
      for (auto& x : w) x = words[pick(rng)];
      edges.push_back({join(w, 0, w.size()), "/r/IsA", "zz" + std::to_string(c), 1.0});
    }
    const auto g = testing::graph_of(edges);
    Tokens toks(12);
    for (auto& x : toks) x = words[pick(rng)];
    const auto spans = linker::extract_entities(toks, g, 4);

    std::vector<int> covered(toks.size(), -1);
    std::size_t last_end = 0;
    for (std::size_t s = 0; s < spans.size(); ++s) {
      const auto& sp = spans[s];
      CHECK(sp.start >= last_end);  // in order, no overlap
      last_end = sp.end;
      CHECK(sp.concept_id == join(toks, sp.start, sp.end));
      CHECK(g.contains(sp.concept_id));
      for (std::size_t n = sp.end - sp.start + 1; n <= 4; ++n) CHECK_FALSE(matches_at(toks, sp.start, n, g));
      for (std::size_t i = sp.start; i < sp.end; ++i) covered[i] = static_cast<int>(s);
    }
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (covered[i] >= 0) continue;
      for (std::size_t n = 1; n <= 4; ++n) CHECK_FALSE(matches_at(toks, i, n, g));
    }

    // Deleting a token after the last span leaves every span unchanged.
    if (!spans.empty() && last_end + 4 < toks.size()) {
      Tokens shorter = toks;
      shorter.erase(shorter.begin() + static_cast<std::ptrdiff_t>(last_end + 4));
      const auto again = linker::extract_entities(shorter, g, 4);
      REQUIRE(again.size() >= spans.size());
      for (std::size_t s = 0; s < spans.size(); ++s) CHECK(again[s] == spans[s]);
    }
  }
}
