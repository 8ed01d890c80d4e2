#include "kegat/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>

#ifdef KEGAT_HAVE_OPENMP
#include <omp.h>
#endif

namespace kegat::kernels {

namespace {
#ifdef KEGAT_HAVE_OPENMP
std::atomic<Backend> g_backend{Backend::kOpenMP};
#else
std::atomic<Backend> g_backend{Backend::kSerial};
#endif
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

bool openmp_available() {
#ifdef KEGAT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

void set_threads(int n) {
#ifdef KEGAT_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef KEGAT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

// Columns of the transposed buffers are tokens (or nodes), so every
// per-row segment below is contiguous.

void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint8_t> visible, int heads,
                       AttentionCache& cache, Matrix& out) {
  const Eigen::Index T = q.rows();
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix qt = q.transpose();
  const Matrix kt = k.transpose();
  const Matrix vt = v.transpose();
  Matrix out_t = Matrix::Zero(d, T);
  cache.probs = Matrix::Zero(heads * T, T);
  const long work = static_cast<long>(heads) * T;

#pragma omp parallel for schedule(static)
  for (long w = 0; w < work; ++w) {
    const Eigen::Index h = w / T;
    const Eigen::Index i = w % T;
    const Eigen::Index off = h * dh;
    const auto qi = qt.col(i).segment(off, dh);
    double max_score = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(T, 0.0);
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!visible[i * T + j]) continue;
      scores[j] = qi.dot(kt.col(j).segment(off, dh)) * scale;
      max_score = std::max(max_score, scores[j]);
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!visible[i * T + j]) continue;
      scores[j] = std::exp(scores[j] - max_score);
      total += scores[j];
    }
    auto oi = out_t.col(i).segment(off, dh);
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!visible[i * T + j]) continue;
      const double p = scores[j] / total;
      cache.probs(h * T + i, j) = p;
      oi.noalias() += p * vt.col(j).segment(off, dh);
    }
  }
  out = out_t.transpose();
}

void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::span<const std::uint8_t> visible, int heads,
                        const AttentionCache& cache, const Matrix& d_out,
                        Matrix& d_q, Matrix& d_k, Matrix& d_v) {
  const Eigen::Index T = q.rows();
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix qt = q.transpose();
  const Matrix kt = k.transpose();
  const Matrix vt = v.transpose();
  const Matrix dot = d_out.transpose();
  Matrix dq_t = Matrix::Zero(d, T);
  Matrix dk_t = Matrix::Zero(d, T);
  Matrix dv_t = Matrix::Zero(d, T);
  // Row h*T+i: gradient wrt the scaled score of (i, j).
  Matrix d_score = Matrix::Zero(heads * T, T);
  const long work = static_cast<long>(heads) * T;

#pragma omp parallel for schedule(static)
  for (long w = 0; w < work; ++w) {
    const Eigen::Index h = w / T;
    const Eigen::Index i = w % T;
    const Eigen::Index off = h * dh;
    const auto gi = dot.col(i).segment(off, dh);
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!visible[i * T + j]) continue;
      const double dp = gi.dot(vt.col(j).segment(off, dh));
      d_score(h * T + i, j) = dp;
      weighted += cache.probs(h * T + i, j) * dp;
    }
    auto dqi = dq_t.col(i).segment(off, dh);
    for (Eigen::Index j = 0; j < T; ++j) {
      if (!visible[i * T + j]) continue;
      const double ds = cache.probs(h * T + i, j) * (d_score(h * T + i, j) - weighted) * scale;
      d_score(h * T + i, j) = ds;
      dqi.noalias() += ds * kt.col(j).segment(off, dh);
    }
  }

#pragma omp parallel for schedule(static)
  for (long w = 0; w < work; ++w) {
    const Eigen::Index h = w / T;
    const Eigen::Index j = w % T;
    const Eigen::Index off = h * dh;
    auto dkj = dk_t.col(j).segment(off, dh);
    auto dvj = dv_t.col(j).segment(off, dh);
    for (Eigen::Index i = 0; i < T; ++i) {
      if (!visible[i * T + j]) continue;
      dkj.noalias() += d_score(h * T + i, j) * qt.col(i).segment(off, dh);
      dvj.noalias() += cache.probs(h * T + i, j) * dot.col(i).segment(off, dh);
    }
  }
  d_q = dq_t.transpose();
  d_k = dk_t.transpose();
  d_v = dv_t.transpose();
}

void gat_forward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                 const Adjacency& nbrs, double slope, GatCache& cache, Matrix& out) {
  const Eigen::Index n = wh.rows();
  const Eigen::Index g = wh.cols();
  const Matrix wt = wh.transpose();
  const Eigen::VectorXd as = a_self.transpose();
  const Eigen::VectorXd an = a_nbr.transpose();
  Matrix out_t = Matrix::Zero(g, n);
  cache.raw.assign(n, {});
  cache.alpha.assign(n, {});

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ni = nbrs[i];
    auto& raw = cache.raw[i];
    auto& alpha = cache.alpha[i];
    raw.resize(ni.size());
    alpha.resize(ni.size());
    const double self_term = as.dot(wt.col(i));
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < ni.size(); ++p) {
      raw[p] = self_term + an.dot(wt.col(ni[p]));
      alpha[p] = raw[p] > 0.0 ? raw[p] : slope * raw[p];
      max_score = std::max(max_score, alpha[p]);
    }
    double total = 0.0;
    for (auto& a : alpha) {
      a = std::exp(a - max_score);
      total += a;
    }
    auto oi = out_t.col(i);
    for (std::size_t p = 0; p < ni.size(); ++p) {
      alpha[p] /= total;
      oi.noalias() += alpha[p] * wt.col(ni[p]);
    }
  }
  out = out_t.transpose();
}

void gat_backward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                  const Adjacency& nbrs, double slope, const GatCache& cache,
                  const Matrix& d_out, Matrix& d_wh, RowVector& d_a_self,
                  RowVector& d_a_nbr) {
  const Eigen::Index n = wh.rows();
  const Eigen::Index g = wh.cols();
  const Matrix wt = wh.transpose();
  const Matrix dot = d_out.transpose();
  const Eigen::VectorXd as = a_self.transpose();
  const Eigen::VectorXd an = a_nbr.transpose();

  std::vector<std::vector<double>> d_raw(n);
  Matrix dwh_t = Matrix::Zero(g, n);
  Matrix part_self = Matrix::Zero(g, n);
  Matrix part_nbr = Matrix::Zero(g, n);

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ni = nbrs[i];
    const auto& alpha = cache.alpha[i];
    const auto& raw = cache.raw[i];
    auto& dr = d_raw[i];
    dr.resize(ni.size());
    double weighted = 0.0;
    for (std::size_t p = 0; p < ni.size(); ++p) {
      dr[p] = dot.col(i).dot(wt.col(ni[p]));
      weighted += alpha[p] * dr[p];
    }
    double self_sum = 0.0;
    for (std::size_t p = 0; p < ni.size(); ++p) {
      dr[p] = alpha[p] * (dr[p] - weighted) * (raw[p] > 0.0 ? 1.0 : slope);
      self_sum += dr[p];
      part_nbr.col(i).noalias() += dr[p] * wt.col(ni[p]);
    }
    part_self.col(i) = self_sum * wt.col(i);
    dwh_t.col(i).noalias() += self_sum * as;
  }

  // Incoming edges per node, in (source, position) order.
  std::vector<std::vector<std::pair<int, int>>> incoming(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < nbrs[i].size(); ++p) {
      incoming[nbrs[i][p]].emplace_back(static_cast<int>(i), static_cast<int>(p));
    }
  }

#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    auto dj = dwh_t.col(j);
    for (const auto& [i, p] : incoming[j]) {
      dj.noalias() += cache.alpha[i][p] * dot.col(i);
      dj.noalias() += d_raw[i][p] * an;
    }
  }

  d_wh = dwh_t.transpose();
  d_a_self = part_self.rowwise().sum().transpose();
  d_a_nbr = part_nbr.rowwise().sum().transpose();
}

}  // namespace omp
}  // namespace kegat::kernels
