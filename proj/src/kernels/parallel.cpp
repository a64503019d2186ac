#include "svat/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cstdint>

namespace svat::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1U << 15;
}  // namespace

int max_threads() { return omp_get_max_threads(); }

namespace parallel {

void gemm(MatView a, MatView b, MutMatView out) {
  assert(a.cols == b.rows && out.rows == a.rows && out.cols == b.cols);
  const auto m = static_cast<std::int64_t>(a.rows);
  const bool wide = a.rows * a.cols * b.cols >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < m; ++i) {
    double* c = out.data + i * out.cols;
    std::fill(c, c + out.cols, 0.0);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a.data[i * a.cols + p];
      const double* brow = b.data + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) c[j] += aip * brow[j];
    }
  }
}

void gemm_tn(MatView a, MatView b, MutMatView out) {
  assert(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols);
  const auto m = static_cast<std::int64_t>(a.cols);
  const bool wide = a.rows * a.cols * b.cols >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < m; ++i) {
    double* c = out.data + i * out.cols;
    std::fill(c, c + out.cols, 0.0);
    for (std::size_t p = 0; p < a.rows; ++p) {
      const double api = a.data[p * a.cols + i];
      const double* brow = b.data + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) c[j] += api * brow[j];
    }
  }
}

void gemm_nt(MatView a, MatView b, MutMatView out) {
  assert(a.cols == b.cols && out.rows == a.rows && out.cols == b.rows);
  const auto m = static_cast<std::int64_t>(a.rows);
  const bool wide = a.rows * a.cols * b.rows >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a.data + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data + j * b.cols;
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) acc += arow[p] * brow[p];
      out.data[i * out.cols + j] = acc;
    }
  }
}

void pairwise_hinge_rows(std::span<const double> scores, std::span<const double> labels,
                         std::span<double> out) {
  const auto n = static_cast<std::int64_t>(scores.size());
  const bool wide = scores.size() * scores.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      acc += std::max(0.0, -((scores[i] - scores[j]) * (labels[i] - labels[j])));
    }
    out[i] = acc;
  }
}

void rank_against(std::span<const double> clean, std::size_t self,
                  std::span<const double> probe, std::span<int> ranks) {
  const auto count = static_cast<std::int64_t>(probe.size());
  const bool wide = probe.size() * clean.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t m = 0; m < count; ++m) {
    int ahead = 0;
    for (std::size_t j = 0; j < clean.size(); ++j) {
      if (j == self) continue;
      if (clean[j] > probe[m] || (clean[j] == probe[m] && j < self)) ++ahead;
    }
    ranks[m] = 1 + ahead;
  }
}

}  // namespace parallel
}  // namespace svat::kernels
