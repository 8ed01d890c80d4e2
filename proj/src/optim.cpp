#include "kegat/optim.hpp"

#include <cmath>

#include "kegat/error.hpp"

namespace kegat::trainkit {

void OptimizerState::reset(const ParamStore& store) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& t : store.tensors()) {
    m.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    v.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
}

void adam_step(ParamStore& store, OptimizerState& opt) {
  if (opt.m.size() != store.size()) opt.reset(store);
  ++opt.step;
  const auto& c = opt.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor& t = store.at(i);
    if (t.frozen) continue;
    Matrix& m = opt.m[i];
    Matrix& v = opt.v[i];
    m = c.beta1 * m + (1.0 - c.beta1) * t.grad;
    v = c.beta2 * v + (1.0 - c.beta2) * t.grad.cwiseProduct(t.grad);
    const auto m_hat = m.array() / bc1;
    const auto v_hat = v.array() / bc2;
    t.value.array() -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
  }
}

void check_finite_gradients(const ParamStore& store) {
  for (const auto& t : store.tensors()) {
    if (!t.grad.allFinite()) throw NumericError("non-finite gradient in parameter " + t.name);
  }
}

double compute_gradients(ParamStore& store, const LossBuilder& loss) {
  store.zero_grad();
  ad::Tape tape;
  Binder binder(tape, store);
  const ad::Var root = loss(tape, binder);
  const double value = tape.scalar(root);
  if (!std::isfinite(value)) throw NumericError("non-finite loss");
  tape.backward(root);
  std::vector<Matrix> grads;
  binder.collect(grads);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (grads[i].size() != 0 && !store.at(i).frozen) store.at(i).grad = grads[i];
  }
  check_finite_gradients(store);
  return value;
}

Schedule Schedule::reference() { return Schedule{{1e-3, 4}, {5e-6, 8}}; }

Schedule Schedule::desk() { return Schedule{{1e-3, 2}, {1e-3, 4}}; }

void Schedule::validate() const {
  if (!(phase1.lr > 0.0) || !(phase2.lr > 0.0)) throw UsageError("learning rates must be positive");
  if (phase1.epochs < 1) throw UsageError("phase 1 needs at least one epoch");
  if (phase2.epochs < 0) throw UsageError("phase 2 epoch count must be nonnegative");
}

}  // namespace kegat::trainkit
