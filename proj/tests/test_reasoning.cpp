#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "kegat/error.hpp"
#include "kegat/params.hpp"
#include "kegat/reasoning.hpp"
#include "test_support.hpp"

using namespace kegat;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

namespace {

double elu(double x) { return x > 0 ? x : std::expm1(x); }
Matrix elu(const Matrix& m) { return m.unaryExpr([](double x) { return elu(x); }); }

reasoning::GatParams random_gat(std::mt19937_64& rng, int layers, int heads, int dim) {
  reasoning::GatConfig c;
  c.layers = layers;
  c.heads = heads;
  c.node_dim = dim;
  return reasoning::init_gat(c, rng);
}

reasoning::Subgraph random_subgraph(std::mt19937_64& rng, int n, int dim) {
  reasoning::Subgraph s;
  for (int i = 0; i < n; ++i) s.nodes.push_back("n" + std::to_string(i));
  s.adjacency.assign(n, {});
  std::bernoulli_distribution edge(0.4);
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) {
    adj[i][i] = true;
    for (int j = i + 1; j < n; ++j) adj[i][j] = adj[j][i] = edge(rng);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adj[i][j]) s.adjacency[i].push_back(j);
  s.node_init = testing::random_matrix(rng, n, dim);
  s.entity_count = static_cast<std::size_t>(n);
  return s;
}

Matrix run_gat(const reasoning::Subgraph& s, const reasoning::GatParams& p) {
  Matrix h = s.node_init;
  for (std::size_t l = 0; l < p.layers.size(); ++l) h = reasoning::gat_layer(h, s, p, static_cast<int>(l));
  return h;
}

// Inclusion probabilities of each item under k weighted draws without
// replacement, by enumerating every ordered draw sequence.
std::vector<double> inclusion_oracle(const std::vector<double>& w, std::size_t k) {
  std::vector<double> incl(w.size(), 0.0);
  std::vector<bool> used(w.size(), false);
  std::function<void(std::size_t, double)> rec = [&](std::size_t depth, double prob) {
    if (depth == k) return;
    double total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) if (!used[i]) total += w[i];
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (used[i]) continue;
      const double p = prob * w[i] / total;
      incl[i] += p;
      used[i] = true;
      rec(depth + 1, p);
      used[i] = false;
    }
  };
  rec(0, 1.0);
  return incl;
}

}  // namespace

TEST_CASE("low-degree concepts keep every neighbor") {
  const auto g = testing::sugar_coffee_graph();
  std::mt19937_64 rng(1);
  auto got = reasoning::sample_neighbors(g, "sugar", 3, rng);
  std::sort(got.begin(), got.end());
  CHECK(got == std::vector<std::string>{"carbohydrate", "sweet_food", "sweetening_coffee"});
  CHECK(reasoning::sample_neighbors(g, "sugar", 10, rng).size() == 3);
  CHECK(reasoning::sample_neighbors(g, "unknown", 3, rng).empty());
}

TEST_CASE("weighted sampling frequencies track the enumeration oracle") {
  const auto g = testing::graph_of(
      {{"hub", "/r/IsA", "a", 2.0}, {"hub", "/r/IsA", "b", 1.0}, {"hub", "/r/IsA", "c", 1.0}});
  const auto want = inclusion_oracle({2.0, 1.0, 1.0}, 2);
  CHECK(want[0] == doctest::Approx(5.0 / 6.0));
  std::map<std::string, int> hits;
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) {
    std::mt19937_64 rng(1000 + d);
    for (const auto& id : reasoning::sample_neighbors(g, "hub", 2, rng)) ++hits[id];
  }
  CHECK(std::abs(hits["a"] / double(draws) - want[0]) < 0.015);
  CHECK(std::abs(hits["b"] / double(draws) - want[1]) < 0.015);
  CHECK(std::abs(hits["c"] / double(draws) - want[2]) < 0.015);
}

TEST_CASE("parallel edges to one neighbor pool their weights") {
  const auto g = testing::graph_of({{"hub", "/r/IsA", "a", 1.0},
                                    {"hub", "/r/UsedFor", "a", 2.0},
                                    {"hub", "/r/IsA", "b", 1.0}});
  int a_first = 0;
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) {
    std::mt19937_64 rng(d);
    const auto got = reasoning::sample_neighbors(g, "hub", 1, rng);
    REQUIRE(got.size() == 1);
    a_first += got[0] == "a";
  }
  CHECK(std::abs(a_first / double(draws) - 0.75) < 0.015);
}

TEST_CASE("subgraphs contain entities first and are reproducible") {
  const auto g = testing::sugar_coffee_graph();
  const std::vector<std::string> toks = {"sugar", "and", "coffee"};
  const auto a = reasoning::build_subgraph(toks, g, 2, 99);
  const auto b = reasoning::build_subgraph(toks, g, 2, 99);
  CHECK(a.nodes == b.nodes);
  CHECK(a.entity_count == 2);
  CHECK(a.nodes[0] == "sugar");
  CHECK(a.nodes[1] == "coffee");
  CHECK(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::find(a.adjacency[i].begin(), a.adjacency[i].end(), int(i)) != a.adjacency[i].end());
    for (int j : a.adjacency[i]) {
      if (j != int(i)) CHECK(g.adjacent(a.nodes[i], a.nodes[j]));
    }
  }
  const auto empty = reasoning::build_subgraph(std::vector<std::string>{"nothing"}, g, 2, 1);
  CHECK(empty.size() == 0);
}

TEST_CASE("node initialization copies known rows and zeros the rest") {
  reasoning::ConceptTable table(3);
  table.add("sugar", RowVector::Constant(3, 0.5));
  reasoning::Subgraph s;
  s.nodes = {"sugar", "mystery"};
  const Matrix h = reasoning::init_node_embeddings(s, table, 3);
  CHECK(h.row(0) == RowVector::Constant(3, 0.5));
  CHECK(h.row(1).isZero(0.0));
  CHECK_THROWS_AS(reasoning::init_node_embeddings(s, table, 4), DataError);
}

TEST_CASE("attention coefficients in simple configurations") {
  std::mt19937_64 rng(2);
  const auto p = random_gat(rng, 1, 1, 3);
  reasoning::Subgraph solo;
  solo.nodes = {"x"};
  solo.adjacency = {{0}};
  const Matrix h1 = testing::random_matrix(rng, 1, 3);
  CHECK(reasoning::attention_coeffs(h1, solo, p, 0, 0)[0][0] == doctest::Approx(1.0).epsilon(1e-15));

  reasoning::Subgraph pair;
  pair.nodes = {"x", "y"};
  pair.adjacency = {{0, 1}, {0, 1}};
  Matrix same(2, 3);
  same.row(0) = h1.row(0);
  same.row(1) = h1.row(0);
  const auto alpha = reasoning::attention_coeffs(same, pair, p, 0, 0);
  CHECK(alpha[0][0] == doctest::Approx(0.5));
  CHECK(alpha[0][1] == doctest::Approx(0.5));
}

TEST_CASE("scalar attention matches a hand computation") {
  reasoning::GatParams p;
  p.layers = {{{Matrix::Constant(1, 1, 2.0), (Matrix(1, 2) << 0.3, -0.7).finished()}}};
  reasoning::Subgraph s;
  s.nodes = {"x", "y"};
  s.adjacency = {{0, 1}, {0, 1}};
  const Matrix h = (Matrix(2, 1) << 1.0, -0.5).finished();
  // Wh = (2, -1). Node 0: e00 = .3*2 - .7*2 = -0.8 -> -0.16; e01 = .6 + .7 = 1.3.
  const double e00 = -0.16, e01 = 1.3;
  const double a01 = std::exp(e01) / (std::exp(e00) + std::exp(e01));
  const auto alpha = reasoning::attention_coeffs(h, s, p, 0, 0);
  CHECK(alpha[0][1] == doctest::Approx(a01).epsilon(1e-12));
  const Matrix out = reasoning::gat_layer(h, s, p, 0);
  CHECK(out(0, 0) == doctest::Approx(elu((1 - a01) * 2.0 + a01 * -1.0)).epsilon(1e-12));
}

TEST_CASE("an isolated node reduces to ELU of its averaged projections") {
  std::mt19937_64 rng(3);
  const auto p = random_gat(rng, 1, 3, 4);
  reasoning::Subgraph solo;
  solo.nodes = {"x"};
  solo.adjacency = {{0}};
  const Matrix h = testing::random_matrix(rng, 1, 4);
  Matrix avg = Matrix::Zero(1, 4);
  for (const auto& head : p.layers[0]) avg += h * head.w / 3.0;
  CHECK((reasoning::gat_layer(h, solo, p, 0) - elu(avg)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("relabeling nodes permutes the outputs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial;
    const auto p = random_gat(rng, 2, 2, 4);
    const auto s = random_subgraph(rng, n, 4);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    reasoning::Subgraph t = s;
    t.adjacency.assign(n, {});
    for (int i = 0; i < n; ++i) {
      t.node_init.row(perm[i]) = s.node_init.row(i);
      for (int j : s.adjacency[i]) t.adjacency[perm[i]].push_back(perm[j]);
    }
    const Matrix a = run_gat(s, p);
    const Matrix b = run_gat(t, p);
    for (int i = 0; i < n; ++i) CHECK(b.row(perm[i]) == a.row(i));
    CHECK((reasoning::pool_subgraph(a, 4) - reasoning::pool_subgraph(b, 4)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pooling and empty subgraphs") {
  const Matrix h = (Matrix(2, 2) << 1, 2, 3, 6).finished();
  CHECK(reasoning::pool_subgraph(h, 2) == (RowVector(2) << 2, 4).finished());
  CHECK(reasoning::pool_subgraph(Matrix(0, 3), 3) == RowVector::Zero(3));
  reasoning::GatConfig c;
  c.node_dim = 5;
  ad::Tape t;
  std::mt19937_64 rng(5);
  const auto params = reasoning::init_gat(c, rng);
  const auto w = trainkit::constant_weights(t, params);
  const auto out = reasoning::gat_forward(t, reasoning::Subgraph{}, w, 0.2, 5);
  CHECK(t.value(out).isZero(0.0));
  CHECK(t.value(out).cols() == 5);
}

TEST_CASE("zero layers pool the initial embeddings") {
  std::mt19937_64 rng(6);
  auto s = random_subgraph(rng, 4, 3);
  reasoning::GatParams none;
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, none);
  const auto out = reasoning::gat_forward(t, s, w, 0.2, 3);
  CHECK((t.value(out) - s.node_init.colwise().mean()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fusion of zero weights and of a pass-through MLP") {
  std::mt19937_64 rng(7);
  auto f = reasoning::init_fuse(2, 2, 4, 3, rng);
  f.w1.setZero();
  f.w2.setZero();
  const RowVector base = RowVector::Constant(2, 1.0), gnn = RowVector::Constant(2, -1.0);
  CHECK(reasoning::fuse(base, gnn, f).isZero(0.0));
  // Identity first layer kept in ELU's linear range by a large bias.
  f.w1 = Matrix::Identity(4, 4);
  f.b1 = RowVector::Constant(4, 10.0);
  f.w2 = Matrix::Identity(4, 3);
  f.b2 = RowVector::Constant(3, -10.0);
  const RowVector got = reasoning::fuse(base, gnn, f);
  CHECK((got - (RowVector(3) << 1, 1, -1).finished()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fusion gradient with respect to the graph vector matches finite differences") {
  std::mt19937_64 rng(8);
  const auto f = reasoning::init_fuse(3, 2, 5, 4, rng);
  const RowVector base = testing::random_matrix(rng, 1, 3), gnn = testing::random_matrix(rng, 1, 2);
  const RowVector probe = testing::random_matrix(rng, 1, 4);
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, f);
  const ad::Var g = t.variable(gnn);
  const ad::Var out = reasoning::fuse(t, t.constant(base), g, w);
  t.backward(ad::sum_all(t, ad::hadamard(t, out, t.constant(probe))));
  for (int c = 0; c < 2; ++c) {
    RowVector up = gnn, dn = gnn;
    up(c) += 1e-6;
    dn(c) -= 1e-6;
    const double fd = (reasoning::fuse(base, up, f) - reasoning::fuse(base, dn, f)).dot(probe) / 2e-6;
    CHECK(t.grad(g)(0, c) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("self-refinement gate") {
  std::mt19937_64 rng(9);
  auto r = reasoning::init_refine(6, 4, rng);
  const RowVector e = testing::random_matrix(rng, 1, 6);
  CHECK(reasoning::refine_gate(e, r).sum() == doctest::Approx(6.0).epsilon(1e-12));

  auto flat = r;
  flat.w2.setZero();
  CHECK((reasoning::refine_gate(e, flat) - RowVector::Ones(6)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((reasoning::self_refine(e, flat) - elu(e)).cwiseAbs().maxCoeff() < 1e-12);

  // A huge score on one dimension gives it the whole budget.
  auto sharp = r;
  sharp.w1 = Matrix::Identity(6, 4) * 50.0;
  sharp.w2 = Matrix::Zero(4, 6);
  sharp.w2(0, 2) = 1000.0;
  RowVector pos = RowVector::Zero(6);
  pos(0) = 1.0;
  const RowVector gate = reasoning::refine_gate(pos, sharp);
  CHECK(gate(2) == doctest::Approx(6.0));
  CHECK(gate.sum() == doctest::Approx(6.0));
}

TEST_CASE("final representation puts the refined vector first") {
  const RowVector g = (RowVector(2) << 1, 2).finished();
  const RowVector base = (RowVector(3) << 3, 4, 5).finished();
  CHECK(reasoning::concat_final(g, base) == (RowVector(5) << 1, 2, 3, 4, 5).finished());
}
