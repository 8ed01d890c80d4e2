#include "kegat/encoder.hpp"

#include <cmath>

#include "kegat/error.hpp"
#include "kegat/params.hpp"

namespace kegat::encoder {

using trainkit::normal;
using trainkit::xavier;

EncoderParams init_params(const EncoderConfig& c, std::mt19937_64& rng) {
  if (c.vocab_size <= 0) throw UsageError("encoder vocab_size must be positive");
  if (c.d_model % c.heads != 0) throw UsageError("d_model must be divisible by heads");
  EncoderParams p;
  p.heads = c.heads;
  const Eigen::Index d = c.d_model;
  p.tok_emb = normal(rng, c.vocab_size, d, 0.1);
  p.pos_emb = normal(rng, c.max_pos, d, 0.1);
  p.layers.resize(c.layers);
  for (auto& L : p.layers) {
    L.wq = xavier(rng, d, d);
    L.wk = xavier(rng, d, d);
    L.wv = xavier(rng, d, d);
    L.wo = xavier(rng, d, d);
    L.bq = L.bk = L.bv = L.bo = Matrix::Zero(1, d);
    L.ln1_g = Matrix::Ones(1, d);
    L.ln1_b = Matrix::Zero(1, d);
    L.w1 = xavier(rng, d, c.ffn);
    L.b1 = Matrix::Zero(1, c.ffn);
    L.w2 = xavier(rng, c.ffn, d);
    L.b2 = Matrix::Zero(1, d);
    L.ln2_g = Matrix::Ones(1, d);
    L.ln2_b = Matrix::Zero(1, d);
  }
  p.pool_w = xavier(rng, d, d);
  p.pool_b = Matrix::Zero(1, d);
  p.lm_w = xavier(rng, d, c.vocab_size);
  p.lm_b = Matrix::Zero(1, c.vocab_size);
  return p;
}

EncoderVars shape(const EncoderConfig& c) {
  EncoderVars v;
  v.heads = c.heads;
  v.layers.resize(c.layers);
  return v;
}

namespace {

void check_sequence(const kemb::InjectedSequence& seq, Eigen::Index vocab, Eigen::Index max_pos) {
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq.soft_pos[t] < 0 || seq.soft_pos[t] >= max_pos) {
      throw DataError("soft position overflow: " + std::to_string(seq.soft_pos[t]) +
                      " >= " + std::to_string(max_pos));
    }
    if (seq.tokens[t] < 0 || seq.tokens[t] >= vocab) {
      throw DataError("token id " + std::to_string(seq.tokens[t]) + " outside vocabulary");
    }
  }
}

std::vector<std::uint8_t> mask_of(const kemb::VisibilityMatrix& vis) {
  return {vis.raw().begin(), vis.raw().end()};
}

ad::Var dropout(ad::Tape& t, ad::Var x, Dropout d) {
  if (!d.active()) return x;
  const Matrix& xv = t.value(x);
  std::bernoulli_distribution keep(1.0 - d.rate);
  Matrix mask(xv.rows(), xv.cols());
  const double s = 1.0 / (1.0 - d.rate);
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(*d.rng) ? s : 0.0;
  }
  return ad::mask_mul(t, x, mask);
}

ad::Var attention(ad::Tape& t, const EncoderLayerT<ad::Var>& L, ad::Var x,
                  const std::vector<std::uint8_t>& mask, int heads, kernels::AttentionCache* probs) {
  const ad::Var q = ad::affine(t, x, L.wq, L.bq);
  const ad::Var k = ad::affine(t, x, L.wk, L.bk);
  const ad::Var v = ad::affine(t, x, L.wv, L.bv);
  const ad::Var ctx = ad::masked_attention(t, q, k, v, mask, heads, probs);
  return ad::affine(t, ctx, L.wo, L.bo);
}

}  // namespace

ad::Var embed(ad::Tape& t, const EncoderVars& w, const kemb::InjectedSequence& seq) {
  check_sequence(seq, t.value(w.tok_emb).rows(), t.value(w.pos_emb).rows());
  const ad::Var tok = ad::gather_rows(t, w.tok_emb, seq.tokens);
  const ad::Var pos = ad::gather_rows(t, w.pos_emb, seq.soft_pos);
  return ad::add(t, tok, pos);
}

EncodedVars encode(ad::Tape& t, const EncoderVars& w, ad::Var E,
                   const kemb::VisibilityMatrix& visibility, Dropout drop) {
  if (static_cast<std::size_t>(t.value(E).rows()) != visibility.size()) {
    throw UsageError("embedding rows and visibility size differ");
  }
  const auto mask = mask_of(visibility);
  ad::Var x = E;
  for (const auto& L : w.layers) {
    const ad::Var att = dropout(t, attention(t, L, x, mask, w.heads, nullptr), drop);
    x = ad::layer_norm_rows(t, ad::add(t, x, att), L.ln1_g, L.ln1_b);
    const ad::Var hidden = ad::gelu(t, ad::affine(t, x, L.w1, L.b1));
    const ad::Var ff = dropout(t, ad::affine(t, hidden, L.w2, L.b2), drop);
    x = ad::layer_norm_rows(t, ad::add(t, x, ff), L.ln2_g, L.ln2_b);
  }
  const ad::Var cls = ad::row(t, x, 0);
  const ad::Var pooled = ad::tanh(t, ad::affine(t, cls, w.pool_w, w.pool_b));
  return {x, pooled};
}

ad::Var lm_logits(ad::Tape& t, const EncoderVars& w, ad::Var H) {
  return ad::affine(t, H, w.lm_w, w.lm_b);
}

Matrix embed(const kemb::InjectedSequence& seq, const EncoderParams& params) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, params);
  return t.value(embed(t, w, seq));
}

EncoderOutput encode(const Matrix& E, const kemb::VisibilityMatrix& visibility,
                     const EncoderParams& params) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, params);
  const auto out = encode(t, w, t.constant_ref(E), visibility);
  return {t.value(out.H), t.value(out.pooled).row(0)};
}

Matrix lm_logits(const Matrix& H, const EncoderParams& params) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, params);
  return t.value(lm_logits(t, w, t.constant_ref(H)));
}

Matrix attention_sublayer(const Matrix& X, const kemb::VisibilityMatrix& visibility,
                          const EncoderParams& params, int layer, kernels::AttentionCache* probs) {
  ad::Tape t;
  const auto w = trainkit::constant_weights(t, params);
  return t.value(attention(t, w.layers.at(layer), t.constant_ref(X), mask_of(visibility), w.heads, probs));
}

}  // namespace kegat::encoder
