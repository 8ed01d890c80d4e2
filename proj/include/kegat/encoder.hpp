#pragma once

#include <random>
#include <string>
#include <vector>

#include "kegat/autodiff.hpp"
#include "kegat/kemb.hpp"
#include "kegat/vocab.hpp"

// Small post-LN transformer encoder whose attention is restricted by the
// injected sequence's visibility matrix and whose positions are the soft
// positions of the injected tree.
namespace kegat::encoder {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 256;
  int max_pos = 160;
  double dropout = 0.1;
};

template <class T>
struct EncoderLayerT {
  T wq, bq, wk, bk, wv, bv, wo, bo;
  T ln1_g, ln1_b;
  T w1, b1, w2, b2;
  T ln2_g, ln2_b;

  template <class Self, class F>
  static void visit_impl(Self& s, F&& f) {
    f("wq", s.wq); f("bq", s.bq); f("wk", s.wk); f("bk", s.bk);
    f("wv", s.wv); f("bv", s.bv); f("wo", s.wo); f("bo", s.bo);
    f("ln1.gamma", s.ln1_g); f("ln1.beta", s.ln1_b);
    f("ffn.w1", s.w1); f("ffn.b1", s.b1); f("ffn.w2", s.w2); f("ffn.b2", s.b2);
    f("ln2.gamma", s.ln2_g); f("ln2.beta", s.ln2_b);
  }
};

template <class T>
struct EncoderWeightsT {
  int heads = 1;
  T tok_emb, pos_emb;
  std::vector<EncoderLayerT<T>> layers;
  T pool_w, pool_b;
  T lm_w, lm_b;

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

  template <class U>
  EncoderWeightsT<U> rebind() const {
    EncoderWeightsT<U> out;
    out.heads = heads;
    out.layers.resize(layers.size());
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("tok_emb", s.tok_emb);
    f("pos_emb", s.pos_emb);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      EncoderLayerT<T>::visit_impl(s.layers[l], [&](const char* n, auto& m) { f(prefix + n, m); });
    }
    f("pooler.w", s.pool_w);
    f("pooler.b", s.pool_b);
    f("lm.w", s.lm_w);
    f("lm.b", s.lm_b);
  }
};

using EncoderParams = EncoderWeightsT<Matrix>;
using EncoderVars = EncoderWeightsT<ad::Var>;

EncoderParams init_params(const EncoderConfig& config, std::mt19937_64& rng);
EncoderVars shape(const EncoderConfig& config);

struct EncoderOutput {
  Matrix H;          // T x d per-token states
  RowVector pooled;  // tanh-affine of the [CLS] (row 0) state
};

// Row t = token_embedding[tokens[t]] + soft_position_embedding[soft_pos[t]].
// Throws DataError on a soft position or token id past the tables.
Matrix embed(const kemb::InjectedSequence& seq, const EncoderParams& params);
EncoderOutput encode(const Matrix& E, const kemb::VisibilityMatrix& visibility,
                     const EncoderParams& params);
Matrix lm_logits(const Matrix& H, const EncoderParams& params);

// Output of the masked self-attention sublayer (before residual and norm)
// of `layer` applied to `X`; probabilities optionally copied to `probs`.
Matrix attention_sublayer(const Matrix& X, const kemb::VisibilityMatrix& visibility,
                          const EncoderParams& params, int layer,
                          kernels::AttentionCache* probs = nullptr);

// Tape-level building blocks used by the full model.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
  bool active() const { return rate > 0.0 && rng != nullptr; }
};

struct EncodedVars {
  ad::Var H;
  ad::Var pooled;
};

ad::Var embed(ad::Tape& t, const EncoderVars& w, const kemb::InjectedSequence& seq);
EncodedVars encode(ad::Tape& t, const EncoderVars& w, ad::Var E,
                   const kemb::VisibilityMatrix& visibility, Dropout dropout = {});
ad::Var lm_logits(ad::Tape& t, const EncoderVars& w, ad::Var H);

}  // namespace kegat::encoder
