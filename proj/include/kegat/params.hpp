#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kegat/autodiff.hpp"

namespace kegat::trainkit {

using Matrix = Eigen::MatrixXd;

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;
  std::string group;
};

// Named parameter tensors in registration order. Names are unique.
class ParamStore {
 public:
  std::size_t add(const std::string& name, Matrix init, const std::string& group);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  Tensor& operator[](const std::string& name) { return tensors_[index(name)]; }
  const Tensor& operator[](const std::string& name) const { return tensors_[index(name)]; }
  std::size_t size() const { return tensors_.size(); }
  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }

  void zero_grad();
  void freeze_all_except(const std::string& group);
  void unfreeze_all();
  std::size_t scalar_count() const;

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binds store tensors into one tape on first use. Unfrozen tensors become
// gradient-carrying leaves that reference the store's storage; frozen ones
// are constants.
class Binder {
 public:
  // With `constants` set every tensor binds as a constant (inference).
  Binder(ad::Tape& tape, const ParamStore& store, bool constants = false);
  ad::Var operator()(const std::string& name);
  ad::Var at(std::size_t index);
  ad::Tape& tape() { return tape_; }

  // grads[i] receives the gradient of tensor i, or stays empty when the
  // tensor was unused or frozen.
  void collect(std::vector<Matrix>& grads) const;

 private:
  ad::Tape& tape_;
  const ParamStore& store_;
  std::vector<ad::Var> bound_;
  bool constants_ = false;
};

// Helpers over the weight-bundle structs (EncoderWeightsT and friends), which
// expose visit(f(name, member)) and rebind<U>().
template <class W>
void register_weights(ParamStore& store, const std::string& prefix, const std::string& group,
                      const W& weights) {
  weights.visit([&](const std::string& name, const Matrix& m) { store.add(prefix + name, m, group); });
}

template <class W>
auto bind_weights(Binder& binder, const std::string& prefix, const W& shape) {
  auto out = shape.template rebind<ad::Var>();
  out.visit([&](const std::string& name, ad::Var& v) { v = binder(prefix + name); });
  return out;
}

template <class W>
auto constant_weights(ad::Tape& tape, const W& weights) {
  auto out = weights.template rebind<ad::Var>();
  std::vector<const Matrix*> values;
  weights.visit([&](const std::string&, const Matrix& m) { values.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, ad::Var& v) { v = tape.constant_ref(*values[i++]); });
  return out;
}

template <class W>
W extract_weights(const ParamStore& store, const std::string& prefix, W shape) {
  shape.visit([&](const std::string& name, Matrix& m) { m = store[prefix + name].value; });
  return shape;
}

// Xavier-normal initialization for a fan_in x fan_out matrix.
Matrix xavier(std::mt19937_64& rng, Eigen::Index fan_in, Eigen::Index fan_out);
Matrix normal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

}  // namespace kegat::trainkit
