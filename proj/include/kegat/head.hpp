#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kegat/autodiff.hpp"

// Option scoring, classification and reconstruction losses, the
// uncertainty-weighted combination of the two, and ensemble averaging.
namespace kegat::head {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct OptionScores {
  RowVector raw;    // P
  RowVector probs;  // softmax(P)
  int predicted = 0;
};

// ELU hidden layer, scalar output.
template <class T>
struct MlpWeightsT {
  T w1, b1, w2, b2;
  template <class F>
  void visit(F&& f) { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
  template <class F>
  void visit(F&& f) const { f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); }
  template <class U>
  MlpWeightsT<U> rebind() const { return {}; }
};
using MlpParams = MlpWeightsT<Matrix>;

MlpParams init_mlp(int in_dim, int hidden, std::mt19937_64& rng);

// Index of the largest entry; the lowest index wins ties.
int argmax(const RowVector& v);
OptionScores scores_from_logits(const RowVector& raw);
// Scores every option representation with the MLP. Throws UsageError for
// fewer than two options or mismatched dimensions.
OptionScores predict(std::span<const RowVector> reprs, const MlpParams& mlp);

struct ClassificationLoss {
  double value = 0.0;
  bool clamped = false;  // probs[target] was below 1e-12
};
// -log probs[target].
ClassificationLoss classification_loss(const RowVector& probs, int target);

// Sum over trunk, non-pad positions of the cross-entropy of each row
// against its own token.
double lm_loss(const Matrix& logits, std::span<const int> tokens,
               std::span<const std::uint8_t> trunk_mask, std::span<const std::uint8_t> pad_mask);

// s_i = log sigma_i^2.
struct LossParams {
  double s1 = 0.0;
  double s2 = 0.0;
  double sigma1() const;
  double sigma2() const;
};

struct LossState {
  double l1 = 0.0;
  double l2 = 0.0;
  double combined = 0.0;
};

struct CombinedLoss {
  double value = 0.0;
  double d_l1 = 0.0;
  double d_l2 = 0.0;
  double d_s1 = 0.0;
  double d_s2 = 0.0;
};

// L = l1/(2 sigma1^2) + l2/(2 sigma2^2) + log(sigma1 sigma2).
CombinedLoss combined_loss(double l1, double l2, const LossParams& params);
// Same loss written directly in terms of sigma.
double combined_loss_sigma(double l1, double l2, double sigma1, double sigma2);
// dL/dsigma1 = -l1/sigma1^3 + 1/sigma1.
double combined_loss_dsigma1(double l1, double sigma1);

// Arithmetic mean of probability vectors. Throws UsageError when empty or
// when lengths differ.
RowVector ensemble_average(std::span<const RowVector> probs);

// Tape-level scorer: 1x1 score for one option representation.
ad::Var score_option(ad::Tape& t, ad::Var repr, const MlpWeightsT<ad::Var>& w);

}  // namespace kegat::head
