#include <doctest.h>

#include <algorithm>
#include <random>

#include "kegat/error.hpp"
#include "kegat/kgstore.hpp"
#include "test_support.hpp"

using namespace kegat;
using kegat::kgstore::Edge;

namespace {

const char* kSugarTsv =
    "# head\trelation\ttail\tweight\n"
    "/c/en/sugar\t/r/UsedFor\t/c/en/sweetening_coffee\t3.0\n"
    "/c/en/sugar\t/r/IsA\t/c/en/sweet_food\t2.0\n"
    "/c/en/sugar\t/r/IsA\t/c/en/carbohydrate\t1.0\n"
    "/c/en/sugar\t/r/ExternalURL\t/c/en/sugar_page\t1.0\n"
    "/c/en/coffee\t/r/IsA\t/c/en/drink\t2.5\n";

kgstore::KnowledgeGraph load_text(const std::string& name, const std::string& text) {
  const auto dir = testing::scratch_dir(name);
  testing::write_text(dir / "kb.tsv", text);
  return kgstore::load_graph(dir / "kb.tsv", kgstore::default_blocklist());
}

}  // namespace

TEST_CASE("concept and relation normalization") {
  CHECK(kgstore::normalize_concept("/c/en/Sweet_Food") == "sweet_food");
  CHECK(kgstore::normalize_concept("/c/en/ice_cream/n") == "ice_cream");
  CHECK(kgstore::normalize_concept("Ice  Cream") == "ice_cream");
  CHECK(kgstore::normalize_relation("IsA") == "/r/IsA");
  CHECK(kgstore::normalize_relation("/r/IsA") == "/r/IsA");
}

TEST_CASE("sugar edges are reachable from both endpoints") {
  const auto g = load_text("sugar", kSugarTsv);
  const auto& n = g.neighbors("sugar");
  REQUIRE(n.size() == 3);
  CHECK(n[0] == Edge{"sugar", "/r/UsedFor", "sweetening_coffee", 3.0});
  CHECK(n[1] == Edge{"sugar", "/r/IsA", "sweet_food", 2.0});
  CHECK(n[2] == Edge{"sugar", "/r/IsA", "carbohydrate", 1.0});
  const auto& back = g.neighbors("sweet_food");
  REQUIRE(back.size() == 1);
  CHECK(back[0].other("sweet_food") == "sugar");
  CHECK(g.adjacent("sugar", "carbohydrate"));
  CHECK(g.adjacent("carbohydrate", "sugar"));
  CHECK_FALSE(g.adjacent("sugar", "drink"));
}

TEST_CASE("blocklisted relations are skipped and counted") {
  const auto g = load_text("block", kSugarTsv);
  CHECK(g.stats().loaded == 4);
  CHECK(g.stats().skipped_blocklist == 1);
  CHECK(g.stats().skipped_by_relation.at("/r/ExternalURL") == 1);
  CHECK(g.stats().comment_lines == 1);
  CHECK_FALSE(g.contains("sugar_page"));
}

TEST_CASE("malformed rows name the line") {
  auto expect_error = [](const std::string& text, const std::string& fragment) {
    try {
      load_text("bad", text);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK_MESSAGE(msg.find(fragment) != std::string::npos, msg);
    }
  };
  expect_error("/c/en/a\t/r/IsA\t/c/en/b\t0\n", "nonpositive weight");
  expect_error("/c/en/a\t/r/IsA\t/c/en/b\t1\n/c/en/a\t/r/IsA\t/c/en/c\t-2\n", "2");
  expect_error("/c/en/a\t/r/IsA\t/c/en/b\n", "columns");
  expect_error("/c/en/a\t/r/IsA\t/c/en/b\theavy\n", "non-numeric");
}

TEST_CASE("empty file and unknown concepts give empty results") {
  const auto g = load_text("empty", "");
  CHECK(g.concept_count() == 0);
  CHECK(g.neighbors("anything").empty());
  CHECK(g.top_neighbors("anything", 5).empty());
}

TEST_CASE("ties in weight break by relation then other endpoint") {
  const auto g = testing::graph_of({{"x", "/r/RelatedTo", "zeta", 1.0},
                                    {"x", "/r/IsA", "beta", 1.0},
                                    {"x", "/r/IsA", "alpha", 1.0},
                                    {"x", "/r/AtLocation", "omega", 1.0}});
  const auto& n = g.neighbors("x");
  REQUIRE(n.size() == 4);
  CHECK(n[0].tail == "omega");
  CHECK(n[1].tail == "alpha");
  CHECK(n[2].tail == "beta");
  CHECK(n[3].tail == "zeta");
}

TEST_CASE("top_neighbors limits") {
  const auto g = testing::sugar_coffee_graph();
  CHECK(g.top_neighbors("sugar", 0).empty());
  CHECK(g.top_neighbors("sugar", 10).size() == 3);
  const auto top2 = g.top_neighbors("sugar", 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].tail == "sweetening_coffee");
  CHECK(top2[1].tail == "sweet_food");
}

TEST_CASE("random graphs keep sorted, symmetric, prefix-consistent neighbor lists") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Edge> edges;
    std::uniform_int_distribution<int> node(0, 14), rel(0, 3), w(1, 4);
    const char* rels[] = {"/r/IsA", "/r/UsedFor", "/r/HasA", "/r/AtLocation"};
    for (int e = 0; e < 40; ++e) {
      int a = node(rng), b = node(rng);
      if (a == b) continue;
      edges.push_back({"n" + std::to_string(a), rels[rel(rng)], "n" + std::to_string(b), w(rng) * 0.5});
    }
    const auto g = testing::graph_of(edges);
    for (const auto& id : g.concept_ids()) {
      const auto& n = g.neighbors(id);
      for (std::size_t i = 1; i < n.size(); ++i) {
        const auto& p = n[i - 1];
        const auto& q = n[i];
        const bool ordered = p.weight > q.weight ||
                             (p.weight == q.weight &&
                              std::tie(p.relation, p.other(id)) <= std::tie(q.relation, q.other(id)));
        CHECK(ordered);
      }
      for (const auto& e : n) {
        const auto& other = g.neighbors(e.other(id));
        CHECK(std::find(other.begin(), other.end(), e) != other.end());
      }
      for (std::size_t k = 0; k <= n.size() + 1; ++k) {
        const auto top = g.top_neighbors(id, k);
        REQUIRE(top.size() == std::min(k, n.size()));
        CHECK(std::equal(top.begin(), top.end(), n.begin()));
      }
    }
  }
}

TEST_CASE("loading twice yields identical graphs") {
  const auto a = load_text("idem1", kSugarTsv);
  const auto b = load_text("idem2", kSugarTsv);
  CHECK(a.edges() == b.edges());
  CHECK(a.stats() == b.stats());
  for (const auto& id : a.concept_ids()) CHECK(a.neighbors(id) == b.neighbors(id));
}

TEST_CASE("binary image round-trips") {
  const auto dir = testing::scratch_dir("kbbin");
  const auto a = load_text("kbsrc", kSugarTsv);
  kgstore::save_binary(a, dir / "kb.bin");
  const auto b = kgstore::load_binary(dir / "kb.bin");
  CHECK(a.edges() == b.edges());
  CHECK(a.stats() == b.stats());
  CHECK(a.concept_ids() == b.concept_ids());
  for (const auto& id : a.concept_ids()) CHECK(a.neighbors(id) == b.neighbors(id));
  const auto c = kgstore::load_any(dir / "kb.bin", kgstore::default_blocklist());
  CHECK(c.edges() == a.edges());
}
