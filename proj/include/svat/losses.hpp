#pragma once

// Ranking objectives for one trading day of N stocks.
//
//   clean:    L = sum_i (s_i - y_i)^2 + alpha * sum_i sum_j max(0, -(s_i - s_j)(y_i - y_j))
//   per-stock adversarial:
//             L_i = (a_i - y_i)^2 + alpha * sum_j max(0, -(a_i - a_j)(y_i - y_j))
//   split:    L_adv = sum_i r_i * L_i      (may be negative)
//   combined: L_com = L + lambda * (L_adv + L_KL)
//
// The pairwise sums run over all N^2 ordered pairs; i == j contributes 0.
// An optional N x N 0/1 mask restricts which pairs contribute.

#include <span>
#include <vector>

#include "svat/tape.hpp"

namespace svat::losses {

// scores: N x 1; labels: N values. Throws UsageError for N == 0 or a
// length mismatch.
diff::Var clean_loss(diff::Var scores, std::span<const double> labels, double alpha,
                     const diff::Tensor* pair_mask = nullptr);

// N x 1 column of L_i evaluated on adversarial scores of all stocks.
diff::Var adv_loss_terms(diff::Var adv_scores, std::span<const double> labels, double alpha,
                         const diff::Tensor* pair_mask = nullptr);

// sum_i r_i * terms_i.
diff::Var split_weighted_sum(diff::Var terms, std::span<const double> returns);

diff::Var adv_loss(diff::Var adv_scores, std::span<const double> labels,
                   std::span<const double> returns, double alpha,
                   const diff::Tensor* pair_mask = nullptr);

diff::Var combined_loss(diff::Var clean, diff::Var adv, diff::Var kl, double lambda);
double combined_loss(double clean, double adv, double kl, double lambda);

// Value-level evaluation through the pairwise kernel (no tape).
double clean_loss_value(std::span<const double> scores, std::span<const double> labels,
                        double alpha);
std::vector<double> adv_loss_terms_value(std::span<const double> adv_scores,
                                         std::span<const double> labels, double alpha);
double split_weighted_sum_value(std::span<const double> terms, std::span<const double> returns);

}  // namespace svat::losses
