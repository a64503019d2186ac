#pragma once

// Dense inner loops shared by the autodiff primitives, the pairwise ranking
// loss and the rank-counting step of risk quantification.
//
// Two implementations with identical signatures live side by side:
// `serial` is the reference, `parallel` distributes independent output rows
// over OpenMP threads. Every output element is produced by the same
// sequence of floating-point operations in both, so results are
// bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace svat::kernels {

struct MatView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
};

struct MutMatView {
  double* data;
  std::size_t rows;
  std::size_t cols;
};

namespace serial {

// out = a * b           a: m x k, b: k x n, out: m x n (overwritten)
void gemm(MatView a, MatView b, MutMatView out);
// out = a^T * b         a: k x m, b: k x n
void gemm_tn(MatView a, MatView b, MutMatView out);
// out = a * b^T         a: m x k, b: n x k
void gemm_nt(MatView a, MatView b, MutMatView out);
// out[i] = sum_j max(0, -(s_i - s_j)(y_i - y_j))
void pairwise_hinge_rows(std::span<const double> scores, std::span<const double> labels,
                         std::span<double> out);
// ranks[m] = 1 + #{j != self : clean[j] > probe[m], or clean[j] == probe[m] and j < self}
void rank_against(std::span<const double> clean, std::size_t self,
                  std::span<const double> probe, std::span<int> ranks);

}  // namespace serial

namespace parallel {

void gemm(MatView a, MatView b, MutMatView out);
void gemm_tn(MatView a, MatView b, MutMatView out);
void gemm_nt(MatView a, MatView b, MutMatView out);
void pairwise_hinge_rows(std::span<const double> scores, std::span<const double> labels,
                         std::span<double> out);
void rank_against(std::span<const double> clean, std::size_t self,
                  std::span<const double> probe, std::span<int> ranks);

}  // namespace parallel

// Threads available to the parallel kernels.
int max_threads();

}  // namespace svat::kernels
