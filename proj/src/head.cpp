#include "kegat/head.hpp"

#include <cmath>

#include "kegat/error.hpp"
#include "kegat/params.hpp"

namespace kegat::head {

MlpParams init_mlp(int in_dim, int hidden, std::mt19937_64& rng) {
  MlpParams p;
  p.w1 = trainkit::xavier(rng, in_dim, hidden);
  p.b1 = Matrix::Zero(1, hidden);
  p.w2 = trainkit::xavier(rng, hidden, 1);
  p.b2 = Matrix::Zero(1, 1);
  return p;
}

int argmax(const RowVector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

OptionScores scores_from_logits(const RowVector& raw) {
  OptionScores s;
  s.raw = raw;
  const double m = raw.maxCoeff();
  s.probs = (raw.array() - m).exp().matrix();
  s.probs /= s.probs.sum();
  s.predicted = argmax(s.probs);
  return s;
}

ad::Var score_option(ad::Tape& t, ad::Var repr, const MlpWeightsT<ad::Var>& w) {
  const ad::Var hidden = ad::elu(t, ad::affine(t, repr, w.w1, w.b1));
  return ad::affine(t, hidden, w.w2, w.b2);
}

OptionScores predict(std::span<const RowVector> reprs, const MlpParams& mlp) {
  if (reprs.size() < 2) throw UsageError("prediction needs at least two options");
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, mlp);
  RowVector raw(static_cast<Eigen::Index>(reprs.size()));
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    if (reprs[i].size() != mlp.w1.rows()) throw UsageError("option representation dimension mismatch");
    raw(static_cast<Eigen::Index>(i)) = t.scalar(score_option(t, t.constant(reprs[i]), w));
  }
  return scores_from_logits(raw);
}

ClassificationLoss classification_loss(const RowVector& probs, int target) {
  if (target < 0 || target >= probs.size()) throw UsageError("target index out of range");
  constexpr double kFloor = 1e-12;
  const double p = probs(target);
  if (p < kFloor) return {-std::log(kFloor), true};
  return {-std::log(p), false};
}

double lm_loss(const Matrix& logits, std::span<const int> tokens,
               std::span<const std::uint8_t> trunk_mask, std::span<const std::uint8_t> pad_mask) {
  if (static_cast<std::size_t>(logits.rows()) != tokens.size() || tokens.size() != trunk_mask.size() ||
      tokens.size() != pad_mask.size()) {
    throw UsageError("lm_loss shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (!trunk_mask[r] || pad_mask[r]) continue;
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    total += lse - logits(r, tokens[r]);
  }
  return total;
}

double LossParams::sigma1() const { return std::exp(0.5 * s1); }
double LossParams::sigma2() const { return std::exp(0.5 * s2); }

CombinedLoss combined_loss(double l1, double l2, const LossParams& p) {
  CombinedLoss c;
  const double e1 = std::exp(-p.s1);
  const double e2 = std::exp(-p.s2);
  c.value = 0.5 * e1 * l1 + 0.5 * e2 * l2 + 0.5 * (p.s1 + p.s2);
  c.d_l1 = 0.5 * e1;
  c.d_l2 = 0.5 * e2;
  c.d_s1 = -0.5 * e1 * l1 + 0.5;
  c.d_s2 = -0.5 * e2 * l2 + 0.5;
  return c;
}

double combined_loss_sigma(double l1, double l2, double sigma1, double sigma2) {
  return l1 / (2.0 * sigma1 * sigma1) + l2 / (2.0 * sigma2 * sigma2) + std::log(sigma1 * sigma2);
}

double combined_loss_dsigma1(double l1, double sigma1) {
  return -l1 / (sigma1 * sigma1 * sigma1) + 1.0 / sigma1;
}

RowVector ensemble_average(std::span<const RowVector> probs) {
  if (probs.empty()) throw UsageError("ensemble needs at least one probability vector");
  RowVector out = RowVector::Zero(probs[0].size());
  for (const auto& p : probs) {
    if (p.size() != out.size()) throw UsageError("ensemble members disagree on option count");
    out += p;
  }
  return out / static_cast<double>(probs.size());
}

}  // namespace kegat::head
