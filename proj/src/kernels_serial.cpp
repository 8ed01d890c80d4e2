#include "kegat/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace kegat::kernels::serial {

void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint8_t> visible, int heads,
                       AttentionCache& cache, Matrix& out) {
  const Eigen::Index T = q.rows();
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.probs = Matrix::Zero(heads * T, T);
  out = Matrix::Zero(T, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dh;
    for (Eigen::Index i = 0; i < T; ++i) {
      double max_score = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < T; ++j) {
        if (!visible[i * T + j]) continue;
        double s = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
        s *= scale;
        cache.probs(h * T + i, j) = s;
        max_score = std::max(max_score, s);
      }
      assert(visible[i * T + i] && "attention row without visible entries");
      double total = 0.0;
      for (Eigen::Index j = 0; j < T; ++j) {
        if (!visible[i * T + j]) continue;
        const double e = std::exp(cache.probs(h * T + i, j) - max_score);
        cache.probs(h * T + i, j) = e;
        total += e;
      }
      for (Eigen::Index j = 0; j < T; ++j) {
        if (!visible[i * T + j]) continue;
        const double p = cache.probs(h * T + i, j) / total;
        cache.probs(h * T + i, j) = p;
        for (Eigen::Index c = 0; c < dh; ++c) out(i, off + c) += p * v(j, off + c);
      }
    }
  }
}

void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::span<const std::uint8_t> visible, int heads,
                        const AttentionCache& cache, const Matrix& d_out,
                        Matrix& d_q, Matrix& d_k, Matrix& d_v) {
  const Eigen::Index T = q.rows();
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  d_q = Matrix::Zero(T, d);
  d_k = Matrix::Zero(T, d);
  d_v = Matrix::Zero(T, d);
  std::vector<double> d_score(T);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dh;
    for (Eigen::Index i = 0; i < T; ++i) {
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < T; ++j) {
        d_score[j] = 0.0;
        if (!visible[i * T + j]) continue;
        double dp = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) dp += d_out(i, off + c) * v(j, off + c);
        d_score[j] = dp;
        weighted += cache.probs(h * T + i, j) * dp;
      }
      for (Eigen::Index j = 0; j < T; ++j) {
        if (!visible[i * T + j]) continue;
        const double p = cache.probs(h * T + i, j);
        const double ds = p * (d_score[j] - weighted) * scale;
        for (Eigen::Index c = 0; c < dh; ++c) {
          d_q(i, off + c) += ds * k(j, off + c);
          d_k(j, off + c) += ds * q(i, off + c);
          d_v(j, off + c) += p * d_out(i, off + c);
        }
      }
    }
  }
}

void gat_forward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                 const Adjacency& nbrs, double slope, GatCache& cache, Matrix& out) {
  const Eigen::Index n = wh.rows();
  const Eigen::Index g = wh.cols();
  cache.raw.assign(n, {});
  cache.alpha.assign(n, {});
  out = Matrix::Zero(n, g);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ni = nbrs[i];
    auto& raw = cache.raw[i];
    auto& alpha = cache.alpha[i];
    raw.resize(ni.size());
    alpha.resize(ni.size());
    double self_term = 0.0;
    for (Eigen::Index c = 0; c < g; ++c) self_term += a_self(c) * wh(i, c);
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < ni.size(); ++p) {
      double s = self_term;
      for (Eigen::Index c = 0; c < g; ++c) s += a_nbr(c) * wh(ni[p], c);
      raw[p] = s;
      alpha[p] = s > 0.0 ? s : slope * s;
      max_score = std::max(max_score, alpha[p]);
    }
    double total = 0.0;
    for (auto& a : alpha) {
      a = std::exp(a - max_score);
      total += a;
    }
    for (std::size_t p = 0; p < ni.size(); ++p) {
      alpha[p] /= total;
      for (Eigen::Index c = 0; c < g; ++c) out(i, c) += alpha[p] * wh(ni[p], c);
    }
  }
}

void gat_backward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                  const Adjacency& nbrs, double slope, const GatCache& cache,
                  const Matrix& d_out, Matrix& d_wh, RowVector& d_a_self,
                  RowVector& d_a_nbr) {
  const Eigen::Index n = wh.rows();
  const Eigen::Index g = wh.cols();
  d_wh = Matrix::Zero(n, g);
  d_a_self = RowVector::Zero(g);
  d_a_nbr = RowVector::Zero(g);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ni = nbrs[i];
    const auto& alpha = cache.alpha[i];
    const auto& raw = cache.raw[i];
    std::vector<double> d_alpha(ni.size());
    double weighted = 0.0;
    for (std::size_t p = 0; p < ni.size(); ++p) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < g; ++c) s += d_out(i, c) * wh(ni[p], c);
      d_alpha[p] = s;
      weighted += alpha[p] * s;
    }
    for (std::size_t p = 0; p < ni.size(); ++p) {
      const int j = ni[p];
      const double d_raw = alpha[p] * (d_alpha[p] - weighted) * (raw[p] > 0.0 ? 1.0 : slope);
      for (Eigen::Index c = 0; c < g; ++c) {
        d_wh(j, c) += alpha[p] * d_out(i, c);
        d_wh(i, c) += d_raw * a_self(c);
        d_wh(j, c) += d_raw * a_nbr(c);
        d_a_self(c) += d_raw * wh(i, c);
        d_a_nbr(c) += d_raw * wh(j, c);
      }
    }
  }
}

}  // namespace kegat::kernels::serial
