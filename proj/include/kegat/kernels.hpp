#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

// Hot loops of the encoder and the graph attention layer. Each kernel has a
// serial reference implementation (plain scalar loops) and an OpenMP
// implementation over contiguous buffers. The OpenMP loops only partition
// independent rows and every cross-row reduction runs in a fixed order, so
// its results do not depend on the thread count. The two variants agree to
// rounding (vectorized dot products reassociate sums).
namespace kegat::kernels {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Adjacency = std::vector<std::vector<int>>;

// Multi-head scaled dot-product attention restricted to visible pairs.
// q, k, v: T x d; visible: T*T row-major (visible[i*T+j] = i may attend j).
// probs: (heads*T) x T, row h*T+i holds head h's distribution for query i.
struct AttentionCache {
  Matrix probs;
};

// GAT scores for one head: raw[i][p] = a_self.wh_i + a_nbr.wh_{N_i[p]},
// alpha[i] = softmax(LeakyReLU(raw[i])).
struct GatCache {
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> alpha;
};

namespace serial {
void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint8_t> visible, int heads,
                       AttentionCache& cache, Matrix& out);
void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::span<const std::uint8_t> visible, int heads,
                        const AttentionCache& cache, const Matrix& d_out,
                        Matrix& d_q, Matrix& d_k, Matrix& d_v);
void gat_forward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                 const Adjacency& nbrs, double slope, GatCache& cache, Matrix& out);
void gat_backward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                  const Adjacency& nbrs, double slope, const GatCache& cache,
                  const Matrix& d_out, Matrix& d_wh, RowVector& d_a_self,
                  RowVector& d_a_nbr);
}  // namespace serial

namespace omp {
void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                       std::span<const std::uint8_t> visible, int heads,
                       AttentionCache& cache, Matrix& out);
void attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                        std::span<const std::uint8_t> visible, int heads,
                        const AttentionCache& cache, const Matrix& d_out,
                        Matrix& d_q, Matrix& d_k, Matrix& d_v);
void gat_forward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                 const Adjacency& nbrs, double slope, GatCache& cache, Matrix& out);
void gat_backward(const Matrix& wh, const RowVector& a_self, const RowVector& a_nbr,
                  const Adjacency& nbrs, double slope, const GatCache& cache,
                  const Matrix& d_out, Matrix& d_wh, RowVector& d_a_self,
                  RowVector& d_a_nbr);
}  // namespace omp

enum class Backend { kSerial, kOpenMP };

// Process-wide switch used by the autodiff ops. Defaults to kOpenMP when the
// library was built with OpenMP, kSerial otherwise.
void set_backend(Backend b);
Backend backend();
bool openmp_available();

// Sets the OpenMP thread count (no-op without OpenMP).
void set_threads(int n);
int max_threads();

}  // namespace kegat::kernels
