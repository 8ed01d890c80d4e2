#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kegat/params.hpp"

namespace kegat::trainkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
};

struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  // Zero moments shaped like `store`, step 0.
  void reset(const ParamStore& store);
};

// Bias-corrected Adam update of every unfrozen tensor from its grad buffer.
// Frozen tensors and their moments are left untouched.
void adam_step(ParamStore& store, OptimizerState& opt);

// Throws NumericError naming the first tensor whose gradient is not finite.
void check_finite_gradients(const ParamStore& store);

// Zeroes store gradients, runs `loss` on a fresh tape, backpropagates and
// writes gradients of unfrozen tensors into the store. Returns the loss.
using LossBuilder = std::function<ad::Var(ad::Tape&, Binder&)>;
double compute_gradients(ParamStore& store, const LossBuilder& loss);

struct Phase {
  double lr = 1e-3;
  int epochs = 1;
};

// Phase 1 trains only the classification head; phase 2 everything.
struct Schedule {
  Phase phase1{1e-3, 4};
  Phase phase2{5e-6, 8};

  // Settings used for the full-size pretrained setup.
  static Schedule reference();
  // Shorter default for from-scratch desk-scale runs.
  static Schedule desk();
  // Throws UsageError for nonpositive rates, negative epoch counts or an
  // empty first phase.
  void validate() const;
};

}  // namespace kegat::trainkit
