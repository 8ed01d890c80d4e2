#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "kegat/error.hpp"
#include "kegat/kemb.hpp"
#include "test_support.hpp"

using namespace kegat;
using Tokens = std::vector<std::string>;

namespace {

kemb::InjectedTree sugar_tree(std::size_t limit) {
  const auto g = testing::sugar_coffee_graph();
  const Tokens toks = linker::tokenize("he put sugar in the coffee");
  const auto spans = linker::extract_entities(toks, g);
  return kemb::build_tree(toks, spans, g, limit, kemb::TemplateSet::defaults());
}

encoder::Vocab vocab_for(const kemb::InjectedTree& tree) {
  Tokens all = tree.trunk;
  for (const auto& b : tree.branches) all.insert(all.end(), b.tokens.begin(), b.tokens.end());
  return encoder::Vocab::from_tokens(all);
}

// Visibility from group labels: -1 trunk, otherwise branch id; anchors given.
kemb::VisibilityMatrix visibility_oracle(const std::vector<int>& group, const std::vector<int>& anchor_or_pos) {
  const std::size_t n = group.size();
  kemb::VisibilityMatrix v(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      bool vis;
      if (group[i] < 0 && group[j] < 0) vis = true;
      else if (group[i] >= 0 && group[j] >= 0) vis = group[i] == group[j];
      else if (group[i] >= 0) vis = anchor_or_pos[i] == anchor_or_pos[j];
      else vis = anchor_or_pos[j] == anchor_or_pos[i];
      v.set(i, j, vis);
    }
  }
  return v;
}

}  // namespace

TEST_CASE("triples are realized through templates") {
  const auto t = kemb::TemplateSet::defaults();
  CHECK(kemb::realize_triple({"sugar", "/r/UsedFor", "sweetening_coffee", 3.0}, t) ==
        Tokens{"sugar", "is", "used", "to", "sweetening", "coffee"});
  CHECK(kemb::realize_triple({"elephant", "/r/IsA", "animal", 1.0}, t) ==
        Tokens{"elephant", "is", "a", "animal"});
  CHECK(kemb::realize_triple({"x", "/r/Foo", "y_z", 1.0}, t) == Tokens{"x", "is", "related", "to", "y", "z"});
}

TEST_CASE("template files override defaults and reject bad slots") {
  auto t = kemb::TemplateSet::from_json_text(R"({"/r/IsA": "{tail} contains {head}"})");
  CHECK(kemb::realize_triple({"dog", "/r/IsA", "animal", 1.0}, t) == Tokens{"animal", "contains", "dog"});
  CHECK(t.find("/r/UsedFor") != nullptr);
  CHECK_THROWS_AS(kemb::TemplateSet::from_json_text(R"({"/r/IsA": "{head} only"})"), DataError);
  CHECK_THROWS_AS(kemb::TemplateSet::from_json_text(R"({"/r/IsA": "{head} {tail} {tail}"})"), DataError);
  const auto round = kemb::TemplateSet::from_json_text(t.to_json_text());
  CHECK(round.to_json_text() == t.to_json_text());
}

TEST_CASE("build_tree keeps the heaviest edges per entity") {
  const auto tree = sugar_tree(2);
  REQUIRE(tree.branches.size() == 4);
  CHECK(tree.branches[0].anchor == 2);
  CHECK(tree.branches[0].weight == 3.0);
  CHECK(tree.branches[1].weight == 2.0);
  for (const auto& b : tree.branches) {
    CHECK(std::find(b.tokens.begin(), b.tokens.end(), "carbohydrate") == b.tokens.end());
  }
  CHECK(tree.branches[2].anchor == 5);
}

TEST_CASE("no spans or a zero limit leave the sentence untouched") {
  const auto g = testing::sugar_coffee_graph();
  const Tokens toks = {"nothing", "here"};
  const auto t = kemb::build_tree(toks, {}, g, 2, kemb::TemplateSet::defaults());
  CHECK(t.branches.empty());
  CHECK(sugar_tree(0).branches.empty());
  const auto seq = kemb::flatten(t, vocab_for(t), 16);
  CHECK(seq.soft_pos == std::vector<int>{0, 1});
  CHECK(seq.visibility == kemb::VisibilityMatrix(2, true));
}

TEST_CASE("branch soft positions continue from the anchor") {
  kemb::InjectedTree tree;
  tree.trunk = {"a", "b", "c", "d"};
  tree.branches.push_back({2, {"w", "x", "y", "z"}, 1.0});
  tree.branches.push_back({2, {"p", "q"}, 0.5});
  const auto pos = kemb::assign_soft_positions(tree);
  CHECK(pos == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 3, 4, 3});
}

TEST_CASE("visibility separates branches and links them to their anchor") {
  const auto tree = sugar_tree(2);
  const auto layout = kemb::flatten_layout(tree);
  std::vector<int> group, anchor;
  for (const auto& s : layout) {
    group.push_back(s.trunk ? -1 : static_cast<int>(s.branch));
    anchor.push_back(static_cast<int>(s.trunk_index));
  }
  const auto vis = kemb::build_visibility(tree);
  CHECK(vis == visibility_oracle(group, anchor));
  for (std::size_t i = 0; i < vis.size(); ++i) {
    CHECK(vis(i, i));
    for (std::size_t j = 0; j < vis.size(); ++j) CHECK(vis(i, j) == vis(j, i));
  }
}

TEST_CASE("sugar and coffee match the hand-derived golden layout") {
  std::ifstream in(std::string(KEGAT_TEST_DATA) + "/golden/kemb_sugar_coffee.json");
  REQUIRE(in);
  const auto golden = nlohmann::json::parse(in);
  const auto tree = sugar_tree(golden["per_entity_limit"].get<std::size_t>());
  const auto seq = kemb::flatten(tree, vocab_for(tree), 128);
  CHECK(seq.text == golden["tokens"].get<Tokens>());
  CHECK(seq.soft_pos == golden["soft_positions"].get<std::vector<int>>());
  CHECK(std::vector<int>(seq.trunk_mask.begin(), seq.trunk_mask.end()) ==
        golden["trunk_mask"].get<std::vector<int>>());
  const auto rows = golden["visibility"].get<std::vector<std::string>>();
  REQUIRE(rows.size() == seq.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) CHECK(seq.visibility(i, j) == (rows[i][j] == '1'));
  }
}

TEST_CASE("over-long inputs drop light branches first") {
  const auto tree = sugar_tree(2);  // trunk 6, branches 6+5+4+3
  const auto vocab = vocab_for(tree);
  // 24 tokens in all; dropping only the 3-token weight-1.5 branch fits 21.
  const auto seq = kemb::flatten(tree, vocab, 21);
  CHECK(seq.size() == 21);
  CHECK(std::find(seq.text.begin(), seq.text.end(), "sweet") != seq.text.end());
  CHECK(std::find(seq.text.begin(), seq.text.end(), "caffeine") == seq.text.end());
  CHECK(std::find(seq.text.begin(), seq.text.end(), "drink") != seq.text.end());
  const auto bare = kemb::flatten(tree, vocab, 6);
  CHECK(bare.size() == 6);
  CHECK(std::all_of(bare.trunk_mask.begin(), bare.trunk_mask.end(), [](auto m) { return m == 1; }));
}

TEST_CASE("trunk truncation keeps the closing separator") {
  kemb::InjectedTree tree;
  tree.trunk = {"[CLS]"};
  for (int i = 0; i < 12; ++i) tree.trunk.push_back("w" + std::to_string(i));
  tree.trunk.push_back("[SEP]");
  tree.branches.push_back({12, {"late", "branch"}, 5.0});
  const auto vocab = vocab_for(tree);
  const auto seq = kemb::flatten(tree, vocab, 8);
  REQUIRE(seq.size() == 8);
  CHECK(seq.text.front() == "[CLS]");
  CHECK(seq.text.back() == "[SEP]");
  CHECK_THROWS_AS(kemb::flatten(tree, vocab, 7), DataError);
}

TEST_CASE("restricting to the trunk recovers the plain sentence") {
  const auto tree = sugar_tree(2);
  const auto vocab = vocab_for(tree);
  const auto seq = kemb::flatten(tree, vocab, 128);
  const auto trunk = kemb::restrict_to_trunk(seq);
  CHECK(trunk.text == tree.trunk);
  CHECK(trunk.soft_pos == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(trunk.visibility == kemb::VisibilityMatrix(6, true));
}

TEST_CASE("padding is isolated") {
  const auto tree = sugar_tree(1);
  auto seq = kemb::flatten(tree, vocab_for(tree), 128);
  const std::size_t n = seq.size();
  kemb::pad_sequence(seq, n + 3);
  REQUIRE(seq.size() == n + 3);
  for (std::size_t p = n; p < n + 3; ++p) {
    CHECK(seq.tokens[p] == encoder::Vocab::kPad);
    for (std::size_t j = 0; j < n + 3; ++j) CHECK(seq.visibility(p, j) == (p == j));
  }
}

TEST_CASE("random trees satisfy the positional and visibility invariants") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    kemb::InjectedTree tree;
    std::uniform_int_distribution<int> tl(1, 10);
    const int trunk = tl(rng);
    for (int i = 0; i < trunk; ++i) tree.trunk.push_back("t" + std::to_string(i));
    std::uniform_int_distribution<int> nb(0, 6), blen(1, 5), anchor(0, trunk - 1), w(1, 3);
    const int branches = nb(rng);
    for (int b = 0; b < branches; ++b) {
      kemb::Branch br{static_cast<std::size_t>(anchor(rng)), {}, w(rng) * 1.0};
      for (int o = blen(rng); o > 0; --o) br.tokens.push_back("b" + std::to_string(b));
      tree.branches.push_back(br);
    }
    const auto vocab = vocab_for(tree);
    const auto seq = kemb::flatten(tree, vocab, 1000);
    const auto layout = kemb::flatten_layout(tree);
    REQUIRE(layout.size() == seq.size());
    std::vector<int> group, anchors;
    int trunk_seen = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& s = layout[i];
      group.push_back(s.trunk ? -1 : static_cast<int>(s.branch));
      anchors.push_back(static_cast<int>(s.trunk_index));
      if (s.trunk) {
        CHECK(seq.soft_pos[i] == trunk_seen++);
      } else {
        CHECK(seq.soft_pos[i] == static_cast<int>(s.trunk_index + 1 + s.offset));
      }
    }
    CHECK(seq.visibility == visibility_oracle(group, anchors));
    CHECK(kemb::restrict_to_trunk(seq).text == tree.trunk);
  }
}
