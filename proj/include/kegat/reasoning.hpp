#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kegat/autodiff.hpp"
#include "kegat/concept_table.hpp"
#include "kegat/kgstore.hpp"
#include "kegat/linker.hpp"

// Entity-level reasoning: sampled knowledge subgraphs refined by graph
// attention, then fused with the sentence representation.
namespace kegat::reasoning {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct GatConfig {
  int layers = 2;
  int heads = 2;
  int node_dim = 32;
  int sample_k = 4;
  double slope = 0.2;  // LeakyReLU slope inside the scoring function
};

struct Subgraph {
  std::vector<std::string> nodes;  // entities first, then sampled neighbors
  kernels::Adjacency adjacency;    // sorted, self-loop included
  Matrix node_init;                // nodes x node_dim
  std::size_t entity_count = 0;
  std::size_t sample_cap = 0;

  std::size_t size() const { return nodes.size(); }
};

// Up to k distinct neighbors of `node`, drawn one at a time without
// replacement with probability proportional to edge weight (parallel edges
// to one neighbor pool their weights). Returned in draw order.
std::vector<std::string> sample_neighbors(const kgstore::KnowledgeGraph& graph,
                                          const std::string& node, std::size_t k,
                                          std::mt19937_64& rng);

// Links entities in `tokens`, samples each one's neighborhood, and joins the
// union with every knowledge-graph edge among the included nodes.
Subgraph build_subgraph(std::span<const std::string> tokens, const kgstore::KnowledgeGraph& graph,
                        std::size_t k, std::uint64_t seed,
                        std::size_t max_ngram = linker::kDefaultMaxNgram);
Subgraph build_subgraph(std::span<const linker::TokenSpan> spans, const kgstore::KnowledgeGraph& graph,
                        std::size_t k, std::uint64_t seed);

// Known concepts copy their table row; unknown ones get zeros. Throws
// DataError if the table dimension is not `dim`.
Matrix init_node_embeddings(const Subgraph& sub, const ConceptTable& table, int dim);

template <class T>
struct GatHeadT {
  T w;  // node_dim x node_dim
  T a;  // 1 x 2*node_dim, [self half; neighbor half]
};

template <class T>
struct GatWeightsT {
  std::vector<std::vector<GatHeadT<T>>> layers;

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }
  template <class U>
  GatWeightsT<U> rebind() const {
    GatWeightsT<U> out;
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) out.layers[l].resize(layers[l].size());
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      for (std::size_t m = 0; m < s.layers[l].size(); ++m) {
        const std::string p = "layer" + std::to_string(l) + ".head" + std::to_string(m) + ".";
        f(p + "w", s.layers[l][m].w);
        f(p + "a", s.layers[l][m].a);
      }
    }
  }
};

// One-hidden-layer ELU MLP over [e_base; e_gnn].
template <class T>
struct FuseWeightsT {
  T w1, b1, w2, b2;
  template <class F>
  void visit(F&& f) { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
  template <class F>
  void visit(F&& f) const { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
  template <class U>
  FuseWeightsT<U> rebind() const { return {}; }
};

// Dimension gate: scores = tanh(e W1) W2.
template <class T>
struct RefineWeightsT {
  T w1, w2;
  template <class F>
  void visit(F&& f) { f("w1", w1); f("w2", w2); }
  template <class F>
  void visit(F&& f) const { f("w1", w1); f("w2", w2); }
  template <class U>
  RefineWeightsT<U> rebind() const { return {}; }
};

using GatParams = GatWeightsT<Matrix>;
using FuseParams = FuseWeightsT<Matrix>;
using RefineParams = RefineWeightsT<Matrix>;

GatParams init_gat(const GatConfig& config, std::mt19937_64& rng);
GatWeightsT<ad::Var> gat_shape(const GatConfig& config);
FuseParams init_fuse(int base_dim, int gnn_dim, int hidden, int out, std::mt19937_64& rng);
RefineParams init_refine(int dim, int hidden, std::mt19937_64& rng);

// alpha[i][p]: coefficient of neighbor adjacency[i][p] for node i.
std::vector<std::vector<double>> attention_coeffs(const Matrix& h, const Subgraph& sub,
                                                  const GatParams& params, int layer, int head,
                                                  double slope = 0.2);
// h_i' = ELU(mean over heads of sum_j alpha_ij W h_j).
Matrix gat_layer(const Matrix& h, const Subgraph& sub, const GatParams& params, int layer,
                 double slope = 0.2);
// Mean over nodes; zeros when there are none.
RowVector pool_subgraph(const Matrix& h, int dim);
RowVector fuse(const RowVector& e_base, const RowVector& e_gnn, const FuseParams& weights);
// weights = softmax(scores) * dim, G = ELU(weights .* e_all).
RowVector self_refine(const RowVector& e_all, const RefineParams& weights);
// Same gate weights self_refine applies; they sum to dim(e_all).
RowVector refine_gate(const RowVector& e_all, const RefineParams& weights);
RowVector concat_final(const RowVector& g, const RowVector& e_base);

struct FusedRepr {
  RowVector e_gnn;
  RowVector e_all;
  RowVector g;
  RowVector e_final;
};

// Tape-level versions.
ad::Var gat_layer(ad::Tape& t, ad::Var h, const Subgraph& sub, const GatWeightsT<ad::Var>& w,
                  int layer, double slope);
ad::Var gat_forward(ad::Tape& t, const Subgraph& sub, const GatWeightsT<ad::Var>& w, double slope,
                    int dim);
ad::Var fuse(ad::Tape& t, ad::Var e_base, ad::Var e_gnn, const FuseWeightsT<ad::Var>& w);
ad::Var self_refine(ad::Tape& t, ad::Var e_all, const RefineWeightsT<ad::Var>& w);
ad::Var concat_final(ad::Tape& t, ad::Var g, ad::Var e_base);

}  // namespace kegat::reasoning
