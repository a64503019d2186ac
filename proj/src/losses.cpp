#include "svat/losses.hpp"

#include <string>

#include "svat/errors.hpp"
#include "svat/kernels.hpp"

namespace svat::losses {

using diff::Tensor;
using diff::Var;

namespace {

void check_lengths(std::size_t scores, std::size_t labels, const char* what) {
  if (scores == 0) throw UsageError(std::string(what) + ": empty batch");
  if (scores != labels) {
    throw UsageError(std::string(what) + ": " + std::to_string(scores) + " scores vs " +
                     std::to_string(labels) + " labels");
  }
}

// N x N matrix of max(0, -(s_i - s_j)(y_i - y_j)).
Var pairwise_hinge(Var scores, std::span<const double> labels, const Tensor* mask) {
  diff::Tape& tape = *scores.tape();
  const std::size_t n = labels.size();
  Tensor label_diff(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) label_diff(i, j) = labels[i] - labels[j];
  }
  Var hinge = diff::max0(diff::scale(diff::mul(diff::pairwise_diff(scores), tape.constant(label_diff)), -1.0));
  if (mask != nullptr) {
    if (mask->rows() != n || mask->cols() != n) {
      throw DimensionError("pair mask " + mask->shape_string() + " for " + std::to_string(n) + " stocks");
    }
    hinge = diff::mul(hinge, tape.constant(*mask));
  }
  return hinge;
}

void require_column(Var v, const char* what) {
  if (v.cols() != 1) throw DimensionError(std::string(what) + ": scores must be N x 1");
}

}  // namespace

Var clean_loss(Var scores, std::span<const double> labels, double alpha, const Tensor* pair_mask) {
  require_column(scores, "clean_loss");
  check_lengths(scores.rows(), labels.size(), "clean_loss");
  diff::Tape& tape = *scores.tape();
  const Var y = tape.constant(Tensor::column(labels));
  const Var regression = diff::sum(diff::square(diff::sub(scores, y)));
  const Var ranking = diff::sum(pairwise_hinge(scores, labels, pair_mask));
  return diff::add(regression, diff::scale(ranking, alpha));
}

Var adv_loss_terms(Var adv_scores, std::span<const double> labels, double alpha,
                   const Tensor* pair_mask) {
  require_column(adv_scores, "adv_loss");
  check_lengths(adv_scores.rows(), labels.size(), "adv_loss");
  diff::Tape& tape = *adv_scores.tape();
  const Var y = tape.constant(Tensor::column(labels));
  const Var regression = diff::square(diff::sub(adv_scores, y));
  const Var ranking = diff::row_sum(pairwise_hinge(adv_scores, labels, pair_mask));
  return diff::add(regression, diff::scale(ranking, alpha));
}

Var split_weighted_sum(Var terms, std::span<const double> returns) {
  check_lengths(terms.rows(), returns.size(), "split_weighted_sum");
  const Var r = terms.tape()->constant(Tensor::column(returns));
  return diff::sum(diff::mul(terms, r));
}

Var adv_loss(Var adv_scores, std::span<const double> labels, std::span<const double> returns,
             double alpha, const Tensor* pair_mask) {
  return split_weighted_sum(adv_loss_terms(adv_scores, labels, alpha, pair_mask), returns);
}

Var combined_loss(Var clean, Var adv, Var kl, double lambda) {
  return diff::add(clean, diff::scale(diff::add(adv, kl), lambda));
}

double combined_loss(double clean, double adv, double kl, double lambda) {
  return clean + lambda * (adv + kl);
}

double clean_loss_value(std::span<const double> scores, std::span<const double> labels,
                        double alpha) {
  check_lengths(scores.size(), labels.size(), "clean_loss");
  std::vector<double> rows(scores.size());
  kernels::parallel::pairwise_hinge_rows(scores, labels, rows);
  double regression = 0.0;
  double ranking = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - labels[i];
    regression += d * d;
    ranking += rows[i];
  }
  return regression + alpha * ranking;
}

std::vector<double> adv_loss_terms_value(std::span<const double> adv_scores,
                                         std::span<const double> labels, double alpha) {
  check_lengths(adv_scores.size(), labels.size(), "adv_loss");
  std::vector<double> rows(adv_scores.size());
  kernels::parallel::pairwise_hinge_rows(adv_scores, labels, rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double d = adv_scores[i] - labels[i];
    rows[i] = d * d + alpha * rows[i];
  }
  return rows;
}

double split_weighted_sum_value(std::span<const double> terms, std::span<const double> returns) {
  check_lengths(terms.size(), returns.size(), "split_weighted_sum");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += returns[i] * terms[i];
  return total;
}

}  // namespace svat::losses
