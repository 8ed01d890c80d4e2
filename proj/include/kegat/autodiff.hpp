#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kegat/kernels.hpp"

namespace kegat::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Every node holds a dense matrix; vectors are 1xN rows.
// Nodes whose parents are all constants record no backward closure, so
// inference through a tape costs no more than a plain forward pass.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::int32_t self)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // References external storage; `value` must outlive the tape.
  Var constant_ref(const Matrix& value);
  Var variable(Matrix value);
  Var variable_ref(const Matrix& value);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Zero-sized until some gradient reaches the node.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  // Op construction. `parents` decides whether the result needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);
  void accumulate(Var v, const Matrix& g);
  const Matrix& grad_of(std::int32_t self) const { return nodes_[self].grad; }

  // Seeds d(sum_i w_i * root_i)/d(root_i) = w_i for 1x1 roots and sweeps back.
  void backward(std::span<const std::pair<Var, double>> seeds);
  void backward(Var root) {
    const std::pair<Var, double> seed{root, 1.0};
    backward(std::span(&seed, 1));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra ops. Shapes follow Eigen conventions.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var hadamard(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
// a (RxC) + bias (1xC) broadcast over rows.
Var add_row(Tape& t, Var a, Var bias);
// x*W + b for a row batch x.
Var affine(Tape& t, Var x, Var w, Var b);

Var tanh(Tape& t, Var a);
Var elu(Tape& t, Var a);
Var gelu(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope);

Var layer_norm_rows(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_rows(Tape& t, Var x);

Var gather_rows(Tape& t, Var table, std::span<const int> rows);
Var row(Tape& t, Var x, Eigen::Index r);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var mean_rows(Tape& t, Var x);
Var sum_all(Tape& t, Var x);

// Multiplies by a constant mask (dropout, gating).
Var mask_mul(Tape& t, Var x, const Matrix& mask);

// Sum over rows r with include[r] of -log softmax(logits[r])[targets[r]].
Var cross_entropy_rows(Tape& t, Var logits, std::span<const int> targets,
                       std::span<const std::uint8_t> include);

// -log softmax(scores)[target] for a 1xA score row, clamped at -log(1e-12).
Var nll_of_softmax(Tape& t, Var scores, int target);

// Fused multi-head attention over visible pairs (see kernels.hpp). When
// `probs` is non-null the per-head distributions are copied there.
Var masked_attention(Tape& t, Var q, Var k, Var v, std::vector<std::uint8_t> visible,
                     int heads, kernels::AttentionCache* probs = nullptr);

// One GAT head: out_i = sum_j alpha_ij wh_j over nbrs[i], with
// alpha_i = softmax_j LeakyReLU([a_self; a_nbr] . [wh_i; wh_j]).
// `a` is 1 x 2g. When `cache` is non-null the coefficients are copied there.
Var gat_aggregate(Tape& t, Var wh, Var a, kernels::Adjacency nbrs, double slope,
                  kernels::GatCache* cache = nullptr);

}  // namespace kegat::ad
