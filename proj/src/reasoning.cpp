#include "kegat/reasoning.hpp"

#include <algorithm>
#include <cmath>

#include "kegat/error.hpp"
#include "kegat/params.hpp"

namespace kegat::reasoning {

std::vector<std::string> sample_neighbors(const kgstore::KnowledgeGraph& graph,
                                          const std::string& node, std::size_t k,
                                          std::mt19937_64& rng) {
  std::vector<std::string> ids;
  std::vector<double> weights;
  for (const auto& e : graph.neighbors(node)) {
    const std::string& other = e.other(node);
    if (other == node) continue;
    auto it = std::find(ids.begin(), ids.end(), other);
    if (it == ids.end()) {
      ids.push_back(other);
      weights.push_back(e.weight);
    } else {
      weights[it - ids.begin()] += e.weight;
    }
  }
  std::vector<std::string> picked;
  if (ids.size() <= k) return ids;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (picked.size() < k) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = unit(rng) * total;
    std::size_t chosen = weights.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    picked.push_back(ids[chosen]);
    ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(chosen));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

Subgraph build_subgraph(std::span<const linker::TokenSpan> spans, const kgstore::KnowledgeGraph& graph,
                        std::size_t k, std::uint64_t seed) {
  Subgraph sub;
  sub.sample_cap = k;
  auto include = [&sub](const std::string& id) {
    if (std::find(sub.nodes.begin(), sub.nodes.end(), id) == sub.nodes.end()) sub.nodes.push_back(id);
  };
  for (const auto& s : spans) include(s.concept_id);
  sub.entity_count = sub.nodes.size();
  std::mt19937_64 rng(seed);
  for (std::size_t e = 0; e < sub.entity_count; ++e) {
    const std::string entity = sub.nodes[e];
    for (const auto& id : sample_neighbors(graph, entity, k, rng)) include(id);
  }
  const std::size_t n = sub.nodes.size();
  sub.adjacency.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || graph.adjacent(sub.nodes[i], sub.nodes[j])) {
        sub.adjacency[i].push_back(static_cast<int>(j));
      }
    }
  }
  return sub;
}

Subgraph build_subgraph(std::span<const std::string> tokens, const kgstore::KnowledgeGraph& graph,
                        std::size_t k, std::uint64_t seed, std::size_t max_ngram) {
  const auto spans = linker::extract_entities(tokens, graph, max_ngram);
  return build_subgraph(spans, graph, k, seed);
}

Matrix init_node_embeddings(const Subgraph& sub, const ConceptTable& table, int dim) {
  if (table.dim() != dim) {
    throw DataError("concept embedding dimension " + std::to_string(table.dim()) +
                    " does not match node dimension " + std::to_string(dim));
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(sub.size()), dim);
  for (std::size_t i = 0; i < sub.size(); ++i) {
    if (const auto* row = table.find(sub.nodes[i])) out.row(static_cast<Eigen::Index>(i)) = *row;
  }
  return out;
}

GatParams init_gat(const GatConfig& c, std::mt19937_64& rng) {
  GatParams p;
  p.layers.resize(c.layers);
  for (auto& layer : p.layers) {
    layer.resize(c.heads);
    for (auto& h : layer) {
      h.w = trainkit::xavier(rng, c.node_dim, c.node_dim);
      h.a = trainkit::xavier(rng, 1, 2 * c.node_dim);
    }
  }
  return p;
}

GatWeightsT<ad::Var> gat_shape(const GatConfig& c) {
  GatWeightsT<ad::Var> v;
  v.layers.assign(c.layers, std::vector<GatHeadT<ad::Var>>(c.heads));
  return v;
}

FuseParams init_fuse(int base_dim, int gnn_dim, int hidden, int out, std::mt19937_64& rng) {
  FuseParams p;
  p.w1 = trainkit::xavier(rng, base_dim + gnn_dim, hidden);
  p.b1 = Matrix::Zero(1, hidden);
  p.w2 = trainkit::xavier(rng, hidden, out);
  p.b2 = Matrix::Zero(1, out);
  return p;
}

RefineParams init_refine(int dim, int hidden, std::mt19937_64& rng) {
  RefineParams p;
  p.w1 = trainkit::xavier(rng, dim, hidden);
  p.w2 = trainkit::xavier(rng, hidden, dim);
  return p;
}

// ---- tape level -------------------------------------------------------------

ad::Var gat_layer(ad::Tape& t, ad::Var h, const Subgraph& sub, const GatWeightsT<ad::Var>& w,
                  int layer, double slope) {
  const auto& heads = w.layers.at(layer);
  ad::Var total;
  for (const auto& head : heads) {
    const ad::Var wh = ad::matmul(t, h, head.w);
    const ad::Var agg = ad::gat_aggregate(t, wh, head.a, sub.adjacency, slope);
    total = total.valid() ? ad::add(t, total, agg) : agg;
  }
  return ad::elu(t, ad::scale(t, total, 1.0 / static_cast<double>(heads.size())));
}

ad::Var gat_forward(ad::Tape& t, const Subgraph& sub, const GatWeightsT<ad::Var>& w, double slope,
                    int dim) {
  if (sub.size() == 0) return t.constant(Matrix::Zero(1, dim));
  ad::Var h = t.constant_ref(sub.node_init);
  for (std::size_t l = 0; l < w.layers.size(); ++l) h = gat_layer(t, h, sub, w, static_cast<int>(l), slope);
  return ad::mean_rows(t, h);
}

ad::Var fuse(ad::Tape& t, ad::Var e_base, ad::Var e_gnn, const FuseWeightsT<ad::Var>& w) {
  const ad::Var parts[] = {e_base, e_gnn};
  const ad::Var x = ad::concat_cols(t, parts);
  const ad::Var hidden = ad::elu(t, ad::affine(t, x, w.w1, w.b1));
  return ad::affine(t, hidden, w.w2, w.b2);
}

namespace {
ad::Var gate(ad::Tape& t, ad::Var e_all, const RefineWeightsT<ad::Var>& w) {
  const ad::Var scores = ad::matmul(t, ad::tanh(t, ad::matmul(t, e_all, w.w1)), w.w2);
  const double dim = static_cast<double>(t.value(e_all).cols());
  return ad::scale(t, ad::softmax_rows(t, scores), dim);
}
}  // namespace

ad::Var self_refine(ad::Tape& t, ad::Var e_all, const RefineWeightsT<ad::Var>& w) {
  return ad::elu(t, ad::hadamard(t, gate(t, e_all, w), e_all));
}

ad::Var concat_final(ad::Tape& t, ad::Var g, ad::Var e_base) {
  const ad::Var parts[] = {g, e_base};
  return ad::concat_cols(t, parts);
}

// ---- value level ------------------------------------------------------------

std::vector<std::vector<double>> attention_coeffs(const Matrix& h, const Subgraph& sub,
                                                  const GatParams& params, int layer, int head,
                                                  double slope) {
  ad::Tape t;
  const auto& hp = params.layers.at(layer).at(head);
  const ad::Var wh = ad::matmul(t, t.constant_ref(h), t.constant_ref(hp.w));
  kernels::GatCache cache;
  ad::gat_aggregate(t, wh, t.constant_ref(hp.a), sub.adjacency, slope, &cache);
  return cache.alpha;
}

Matrix gat_layer(const Matrix& h, const Subgraph& sub, const GatParams& params, int layer, double slope) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, params);
  return t.value(gat_layer(t, t.constant_ref(h), sub, w, layer, slope));
}

RowVector pool_subgraph(const Matrix& h, int dim) {
  if (h.rows() == 0) return RowVector::Zero(dim);
  return h.colwise().mean();
}

RowVector fuse(const RowVector& e_base, const RowVector& e_gnn, const FuseParams& weights) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, weights);
  return t.value(fuse(t, t.constant(e_base), t.constant(e_gnn), w)).row(0);
}

RowVector self_refine(const RowVector& e_all, const RefineParams& weights) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, weights);
  return t.value(self_refine(t, t.constant(e_all), w)).row(0);
}

RowVector refine_gate(const RowVector& e_all, const RefineParams& weights) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, weights);
  return t.value(gate(t, t.constant(e_all), w)).row(0);
}

RowVector concat_final(const RowVector& g, const RowVector& e_base) {
  RowVector out(g.size() + e_base.size());
  out << g, e_base;
  return out;
}

}  // namespace kegat::reasoning
