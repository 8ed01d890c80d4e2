#include "kegat/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <memory>

namespace kegat::ad {

// ---- Tape -------------------------------------------------------------------

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant_ref(const Matrix& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Matrix value) {
  Var v = constant(std::move(value));
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::variable_ref(const Matrix& value) {
  Var v = constant_ref(value);
  nodes_[v.id].requires_grad = true;
  return v;
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.owned;
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
  Node n;
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(std::span<const std::pair<Var, double>> seeds) {
  std::int32_t top = -1;
  for (const auto& [v, w] : seeds) {
    assert(value(v).size() == 1);
    accumulate(v, Matrix::Constant(1, 1, w));
    top = std::max(top, v.id);
  }
  for (std::int32_t id = top; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

// ---- Ops --------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) * t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) + t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  Matrix out = t.value(a) - t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

Var hadamard(Tape& t, Var a, Var b) {
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var scale(Tape& t, Var a, double c) {
  Matrix out = t.value(a) * c;
  return t.push(std::move(out), {a}, [a, c](Tape& tp, std::int32_t self) {
    tp.accumulate(a, tp.grad_of(self) * c);
  });
}

Var add_row(Tape& t, Var a, Var bias) {
  const Matrix& bv = t.value(bias);
  assert(bv.rows() == 1 && bv.cols() == t.value(a).cols());
  Matrix out = t.value(a);
  out.rowwise() += bv.row(0);
  return t.push(std::move(out), {a, bias}, [a, bias](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    tp.accumulate(a, g);
    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
  });
}

Var affine(Tape& t, Var x, Var w, Var b) { return add_row(t, matmul(t, x, w), b); }

Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  return t.push(std::move(out), {a}, [a](Tape& tp, std::int32_t self) {
    // Value of this node is tanh(a); recompute from the parent to stay local.
    const Matrix y = tp.value(a).array().tanh().matrix();
    tp.accumulate(a, tp.grad_of(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var elu(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out = x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  return t.push(std::move(out), {a}, [a](Tape& tp, std::int32_t self) {
    const Matrix d = tp.value(a).unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
    tp.accumulate(a, tp.grad_of(self).cwiseProduct(d));
  });
}

Var gelu(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
  return t.push(std::move(out), {a}, [a](Tape& tp, std::int32_t self) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
    const Matrix d = tp.value(a).unaryExpr([inv_sqrt_2pi](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
      return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    tp.accumulate(a, tp.grad_of(self).cwiseProduct(d));
  });
}

Var leaky_relu(Tape& t, Var a, double slope) {
  Matrix out = t.value(a).unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return t.push(std::move(out), {a}, [a, slope](Tape& tp, std::int32_t self) {
    const Matrix d = tp.value(a).unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    tp.accumulate(a, tp.grad_of(self).cwiseProduct(d));
  });
}

Var layer_norm_rows(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = t.value(x);
  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= t.value(gamma).row(0).array();
  out.rowwise() += t.value(beta).row(0);
  return t.push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& tp, std::int32_t self) {
                  const Matrix& g = tp.grad_of(self);
                  if (tp.requires_grad(gamma)) tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(beta)) tp.accumulate(beta, g.colwise().sum());
                  if (!tp.requires_grad(x)) return;
                  Matrix gh = g;
                  gh.array().rowwise() *= tp.value(gamma).row(0).array();
                  const double n = static_cast<double>(gh.cols());
                  Matrix dx(gh.rows(), gh.cols());
                  for (Eigen::Index r = 0; r < gh.rows(); ++r) {
                    const double m1 = gh.row(r).sum() / n;
                    const double m2 = gh.row(r).dot(xhat.row(r)) / n;
                    dx.row(r) = ((gh.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
                  }
                  tp.accumulate(x, dx);
                });
}

Var softmax_rows(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double m = xv.row(r).maxCoeff();
    out.row(r) = (xv.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Matrix saved = out;
  return t.push(std::move(out), {x}, [x, y = std::move(saved)](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    tp.accumulate(x, dx);
  });
}

Var gather_rows(Tape& t, Var table, std::span<const int> rows) {
  const Matrix& tv = t.value(table);
  Matrix out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = tv.row(rows[r]);
  std::vector<int> idx(rows.begin(), rows.end());
  return t.push(std::move(out), {table}, [table, idx = std::move(idx)](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& tv = tp.value(table);
    Matrix dt = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) dt.row(idx[r]) += g.row(r);
    tp.accumulate(table, dt);
  });
}

Var row(Tape& t, Var x, Eigen::Index r) {
  Matrix out = t.value(x).row(r);
  return t.push(std::move(out), {x}, [x, r](Tape& tp, std::int32_t self) {
    const Matrix& xv = tp.value(x);
    Matrix dx = Matrix::Zero(xv.rows(), xv.cols());
    dx.row(r) = tp.grad_of(self).row(0);
    tp.accumulate(x, dx);
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    assert(t.value(p).rows() == rows);
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (Var p : parts) {
    offsets.push_back(c);
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [ps, offsets](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!tp.requires_grad(ps[i])) continue;
      tp.accumulate(ps[i], g.middleCols(offsets[i], tp.value(ps[i]).cols()));
    }
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    assert(t.value(p).cols() == cols);
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (Var p : parts) {
    offsets.push_back(r);
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [ps, offsets](Tape& tp, std::int32_t self) {
    const Matrix& g = tp.grad_of(self);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!tp.requires_grad(ps[i])) continue;
      tp.accumulate(ps[i], g.middleRows(offsets[i], tp.value(ps[i]).rows()));
    }
  });
}

Var mean_rows(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  const double n = static_cast<double>(xv.rows());
  Matrix out = xv.colwise().sum() / n;
  return t.push(std::move(out), {x}, [x, n](Tape& tp, std::int32_t self) {
    const Matrix& xv = tp.value(x);
    Matrix dx = tp.grad_of(self).replicate(xv.rows(), 1) / n;
    tp.accumulate(x, dx);
  });
}

Var sum_all(Tape& t, Var x) {
  Matrix out = Matrix::Constant(1, 1, t.value(x).sum());
  return t.push(std::move(out), {x}, [x](Tape& tp, std::int32_t self) {
    const Matrix& xv = tp.value(x);
    tp.accumulate(x, Matrix::Constant(xv.rows(), xv.cols(), tp.grad_of(self)(0, 0)));
  });
}

Var mask_mul(Tape& t, Var x, const Matrix& mask) {
  Matrix out = t.value(x).cwiseProduct(mask);
  return t.push(std::move(out), {x}, [x, mask](Tape& tp, std::int32_t self) {
    tp.accumulate(x, tp.grad_of(self).cwiseProduct(mask));
  });
}

Var cross_entropy_rows(Tape& t, Var logits, std::span<const int> targets,
                       std::span<const std::uint8_t> include) {
  const Matrix& z = t.value(logits);
  assert(static_cast<std::size_t>(z.rows()) == targets.size());
  Matrix probs = Matrix::Zero(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (!include[r]) continue;
    const double m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp().matrix();
    const double total = probs.row(r).sum();
    probs.row(r) /= total;
    loss += -(z(r, targets[r]) - m - std::log(total));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<std::uint8_t> inc(include.begin(), include.end());
  return t.push(Matrix::Constant(1, 1, loss), {logits},
                [logits, probs = std::move(probs), tg = std::move(tg), inc = std::move(inc)](
                    Tape& tp, std::int32_t self) {
                  Matrix d = probs;
                  for (Eigen::Index r = 0; r < d.rows(); ++r) {
                    if (inc[r]) d(r, tg[r]) -= 1.0;
                  }
                  tp.accumulate(logits, d * tp.grad_of(self)(0, 0));
                });
}

Var nll_of_softmax(Tape& t, Var scores, int target) {
  const Matrix& z = t.value(scores);
  const double m = z.maxCoeff();
  Matrix p = (z.array() - m).exp().matrix();
  const double total = p.sum();
  p /= total;
  const double raw = -(z(0, target) - m - std::log(total));
  const double cap = -std::log(1e-12);
  const bool clamped = raw > cap;
  return t.push(Matrix::Constant(1, 1, clamped ? cap : raw), {scores},
                [scores, p = std::move(p), target, clamped](Tape& tp, std::int32_t self) {
                  if (clamped) return;
                  Matrix d = p;
                  d(0, target) -= 1.0;
                  tp.accumulate(scores, d * tp.grad_of(self)(0, 0));
                });
}

// ---- Fused kernels ------------------------------------------------------------

Var masked_attention(Tape& t, Var q, Var k, Var v, std::vector<std::uint8_t> visible,
                     int heads, kernels::AttentionCache* probs) {
  auto cache = std::make_shared<kernels::AttentionCache>();
  Matrix out;
  if (kernels::backend() == kernels::Backend::kOpenMP) {
    kernels::omp::attention_forward(t.value(q), t.value(k), t.value(v), visible, heads, *cache, out);
  } else {
    kernels::serial::attention_forward(t.value(q), t.value(k), t.value(v), visible, heads, *cache, out);
  }
  if (probs) *probs = *cache;
  return t.push(std::move(out), {q, k, v},
                [q, k, v, visible = std::move(visible), heads, cache](Tape& tp, std::int32_t self) {
                  Matrix dq, dk, dv;
                  if (kernels::backend() == kernels::Backend::kOpenMP) {
                    kernels::omp::attention_backward(tp.value(q), tp.value(k), tp.value(v), visible,
                                                     heads, *cache, tp.grad_of(self), dq, dk, dv);
                  } else {
                    kernels::serial::attention_backward(tp.value(q), tp.value(k), tp.value(v), visible,
                                                        heads, *cache, tp.grad_of(self), dq, dk, dv);
                  }
                  tp.accumulate(q, dq);
                  tp.accumulate(k, dk);
                  tp.accumulate(v, dv);
                });
}

Var gat_aggregate(Tape& t, Var wh, Var a, kernels::Adjacency nbrs, double slope,
                  kernels::GatCache* out_cache) {
  const Matrix& av = t.value(a);
  const Eigen::Index g = t.value(wh).cols();
  assert(av.rows() == 1 && av.cols() == 2 * g);
  const RowVector a_self = av.row(0).head(g);
  const RowVector a_nbr = av.row(0).tail(g);
  auto cache = std::make_shared<kernels::GatCache>();
  Matrix out;
  if (kernels::backend() == kernels::Backend::kOpenMP) {
    kernels::omp::gat_forward(t.value(wh), a_self, a_nbr, nbrs, slope, *cache, out);
  } else {
    kernels::serial::gat_forward(t.value(wh), a_self, a_nbr, nbrs, slope, *cache, out);
  }
  if (out_cache) *out_cache = *cache;
  return t.push(std::move(out), {wh, a},
                [wh, a, nbrs = std::move(nbrs), slope, cache, g](Tape& tp, std::int32_t self) {
                  const Matrix& av = tp.value(a);
                  const RowVector a_self = av.row(0).head(g);
                  const RowVector a_nbr = av.row(0).tail(g);
                  Matrix dwh;
                  RowVector das, dan;
                  if (kernels::backend() == kernels::Backend::kOpenMP) {
                    kernels::omp::gat_backward(tp.value(wh), a_self, a_nbr, nbrs, slope, *cache,
                                               tp.grad_of(self), dwh, das, dan);
                  } else {
                    kernels::serial::gat_backward(tp.value(wh), a_self, a_nbr, nbrs, slope, *cache,
                                                  tp.grad_of(self), dwh, das, dan);
                  }
                  tp.accumulate(wh, dwh);
                  if (tp.requires_grad(a)) {
                    Matrix da(1, 2 * g);
                    da.row(0).head(g) = das;
                    da.row(0).tail(g) = dan;
                    tp.accumulate(a, da);
                  }
                });
}

}  // namespace kegat::ad
