// Serial reference kernels vs. their OpenMP counterparts.

#include <random>

#include <benchmark/benchmark.h>

#include "kegat/kernels.hpp"

namespace {

using kegat::kernels::Adjacency;
using kegat::kernels::AttentionCache;
using kegat::kernels::GatCache;
using kegat::kernels::Matrix;
using kegat::kernels::RowVector;

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Trunk of T/2 tokens plus T/8-token branches hanging off trunk positions.
std::vector<std::uint8_t> tree_mask(int T) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(T) * T, 0);
  const int trunk = T / 2;
  auto group = [&](int p) { return p < trunk ? -1 : (p - trunk) / std::max(1, T / 8); };
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) {
      const int gi = group(i);
      const int gj = group(j);
      mask[i * T + j] = (gi == gj) || (gi < 0 && gj < 0) || (gi >= 0 && j == gi % trunk) ||
                        (gj >= 0 && i == gj % trunk);
    }
  }
  return mask;
}

struct AttentionFixture {
  Matrix q, k, v, d_out;
  std::vector<std::uint8_t> mask;
  explicit AttentionFixture(int T) {
    std::mt19937_64 rng(1);
    q = random_matrix(rng, T, 64);
    k = random_matrix(rng, T, 64);
    v = random_matrix(rng, T, 64);
    d_out = random_matrix(rng, T, 64);
    mask = tree_mask(T);
  }
};

template <bool kOmp>
void BM_AttentionForward(benchmark::State& state) {
  AttentionFixture f(static_cast<int>(state.range(0)));
  AttentionCache cache;
  Matrix out;
  for (auto _ : state) {
    if constexpr (kOmp) {
      kegat::kernels::omp::attention_forward(f.q, f.k, f.v, f.mask, 4, cache, out);
    } else {
      kegat::kernels::serial::attention_forward(f.q, f.k, f.v, f.mask, 4, cache, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kOmp>
void BM_AttentionBackward(benchmark::State& state) {
  AttentionFixture f(static_cast<int>(state.range(0)));
  AttentionCache cache;
  Matrix out, dq, dk, dv;
  kegat::kernels::serial::attention_forward(f.q, f.k, f.v, f.mask, 4, cache, out);
  for (auto _ : state) {
    if constexpr (kOmp) {
      kegat::kernels::omp::attention_backward(f.q, f.k, f.v, f.mask, 4, cache, f.d_out, dq, dk, dv);
    } else {
      kegat::kernels::serial::attention_backward(f.q, f.k, f.v, f.mask, 4, cache, f.d_out, dq, dk, dv);
    }
    benchmark::DoNotOptimize(dq.data());
  }
}

struct GatFixture {
  Matrix wh, d_out;
  RowVector a_self, a_nbr;
  Adjacency nbrs;
  explicit GatFixture(int n) {
    std::mt19937_64 rng(2);
    wh = random_matrix(rng, n, 32);
    d_out = random_matrix(rng, n, 32);
    a_self = random_matrix(rng, 1, 32);
    a_nbr = random_matrix(rng, 1, 32);
    std::bernoulli_distribution edge(0.3);
    nbrs.assign(n, {});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j || edge(rng)) nbrs[i].push_back(j);
      }
    }
  }
};

template <bool kOmp>
void BM_GatForward(benchmark::State& state) {
  GatFixture f(static_cast<int>(state.range(0)));
  GatCache cache;
  Matrix out;
  for (auto _ : state) {
    if constexpr (kOmp) {
      kegat::kernels::omp::gat_forward(f.wh, f.a_self, f.a_nbr, f.nbrs, 0.2, cache, out);
    } else {
      kegat::kernels::serial::gat_forward(f.wh, f.a_self, f.a_nbr, f.nbrs, 0.2, cache, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool kOmp>
void BM_GatBackward(benchmark::State& state) {
  GatFixture f(static_cast<int>(state.range(0)));
  GatCache cache;
  Matrix out, d_wh;
  RowVector d_self, d_nbr;
  kegat::kernels::serial::gat_forward(f.wh, f.a_self, f.a_nbr, f.nbrs, 0.2, cache, out);
  for (auto _ : state) {
    if constexpr (kOmp) {
      kegat::kernels::omp::gat_backward(f.wh, f.a_self, f.a_nbr, f.nbrs, 0.2, cache, f.d_out, d_wh, d_self, d_nbr);
    } else {
      kegat::kernels::serial::gat_backward(f.wh, f.a_self, f.a_nbr, f.nbrs, 0.2, cache, f.d_out, d_wh, d_self,
                                           d_nbr);
    }
    benchmark::DoNotOptimize(d_wh.data());
  }
}

}  // namespace

BENCHMARK(BM_AttentionForward<false>)->Name("attention_forward/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_AttentionForward<true>)->Name("attention_forward/omp")->Arg(32)->Arg(128);
BENCHMARK(BM_AttentionBackward<false>)->Name("attention_backward/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_AttentionBackward<true>)->Name("attention_backward/omp")->Arg(32)->Arg(128);
BENCHMARK(BM_GatForward<false>)->Name("gat_forward/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_GatForward<true>)->Name("gat_forward/omp")->Arg(16)->Arg(64);
BENCHMARK(BM_GatBackward<false>)->Name("gat_backward/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_GatBackward<true>)->Name("gat_backward/omp")->Arg(16)->Arg(64);

BENCHMARK_MAIN();
