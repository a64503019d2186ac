#include "svat/kernels.hpp"

#include <algorithm>
#include <cassert>

namespace svat::kernels::serial {

void gemm(MatView a, MatView b, MutMatView out) {
  assert(a.cols == b.rows && out.rows == a.rows && out.cols == b.cols);
  std::fill(out.data, out.data + out.rows * out.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* c = out.data + i * out.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a.data[i * a.cols + p];
      const double* brow = b.data + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) c[j] += aip * brow[j];
    }
  }
}

void gemm_tn(MatView a, MatView b, MutMatView out) {
  assert(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols);
  std::fill(out.data, out.data + out.rows * out.cols, 0.0);
  for (std::size_t i = 0; i < a.cols; ++i) {
    double* c = out.data + i * out.cols;
    for (std::size_t p = 0; p < a.rows; ++p) {
      const double api = a.data[p * a.cols + i];
      const double* brow = b.data + p * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) c[j] += api * brow[j];
    }
  }
}

void gemm_nt(MatView a, MatView b, MutMatView out) {
  assert(a.cols == b.cols && out.rows == a.rows && out.cols == b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
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
  const std::size_t n = scores.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += std::max(0.0, -((scores[i] - scores[j]) * (labels[i] - labels[j])));
    }
    out[i] = acc;
  }
}

void rank_against(std::span<const double> clean, std::size_t self,
                  std::span<const double> probe, std::span<int> ranks) {
  for (std::size_t m = 0; m < probe.size(); ++m) {
    int ahead = 0;
    for (std::size_t j = 0; j < clean.size(); ++j) {
      if (j == self) continue;
      if (clean[j] > probe[m] || (clean[j] == probe[m] && j < self)) ++ahead;
    }
    ranks[m] = 1 + ahead;
  }
}

}  // namespace svat::kernels::serial
