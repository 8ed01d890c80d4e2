#include "kegat/params.hpp"

#include <cmath>

#include "kegat/error.hpp"

namespace kegat::trainkit {

std::size_t ParamStore::add(const std::string& name, Matrix init, const std::string& group) {
  if (index_.count(name)) throw UsageError("duplicate parameter name " + name);
  Tensor t;
  t.name = name;
  t.grad = Matrix::Zero(init.rows(), init.cols());
  t.value = std::move(init);
  t.group = group;
  tensors_.push_back(std::move(t));
  index_[name] = tensors_.size() - 1;
  return tensors_.size() - 1;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("unknown parameter " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.grad.setZero(t.value.rows(), t.value.cols());
}

void ParamStore::freeze_all_except(const std::string& group) {
  for (auto& t : tensors_) t.frozen = t.group != group;
}

void ParamStore::unfreeze_all() {
  for (auto& t : tensors_) t.frozen = false;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

Binder::Binder(ad::Tape& tape, const ParamStore& store, bool constants)
    : tape_(tape), store_(store), bound_(store.size()), constants_(constants) {}

ad::Var Binder::operator()(const std::string& name) { return at(store_.index(name)); }

ad::Var Binder::at(std::size_t index) {
  ad::Var& v = bound_.at(index);
  if (!v.valid()) {
    const Tensor& t = store_.at(index);
    v = (t.frozen || constants_) ? tape_.constant_ref(t.value) : tape_.variable_ref(t.value);
  }
  return v;
}

void Binder::collect(std::vector<Matrix>& grads) const {
  grads.resize(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    const ad::Var v = bound_[i];
    if (!v.valid() || !tape_.requires_grad(v) || tape_.grad(v).size() == 0) {
      grads[i].resize(0, 0);
      continue;
    }
    grads[i] = tape_.grad(v);
  }
}

Matrix normal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

Matrix xavier(std::mt19937_64& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  return normal(rng, fan_in, fan_out, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
}

}  // namespace kegat::trainkit
