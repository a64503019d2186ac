#pragma once

// Backbone stock model: an embedding Psi of each stock's lookback window and
// a scoring head shared by every stock.
//
// Psi is either row concatenation (D = T * 5) or a single-layer minimal
// gated recurrence over the T steps (D = hidden):
//   f_t = sigmoid(x_t W_f + h_{t-1} U_f + b_f)
//   c_t = tanh(x_t W_c + (f_t * h_{t-1}) U_c + b_c)
//   h_t = h_{t-1} + f_t * (c_t - h_{t-1})
// with h_0 = 0; the embedding is h_T. The head is
//   score = tanh(x W_1 + b_1) W_2 + b_2
// or, with head_hidden = 0, the linear map x W_2 + b_2.
//
// All stocks share one parameter set and are processed as rows of one
// matrix, so the backbone never mixes information across stocks.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "svat/parameters.hpp"
#include "svat/tape.hpp"

namespace svat::ranker {

enum class PsiKind { concat, recurrent };

PsiKind parse_psi_kind(const std::string& text);
std::string to_string(PsiKind kind);

struct BackboneConfig {
  PsiKind psi = PsiKind::recurrent;
  std::size_t lookback = 8;
  std::size_t features = 5;
  std::size_t hidden = 32;       // D for the recurrent embedding
  std::size_t head_hidden = 64;  // 0 selects a linear head

  std::size_t embedding_dim() const noexcept {
    return psi == PsiKind::concat ? lookback * features : hidden;
  }
  void validate() const;
};

// Adds every backbone parameter under the "ranker." prefix.
void init_parameters(ParameterStore& store, const BackboneConfig& config, std::mt19937_64& rng);

// windows: N x (T * features), each row one stock's window flattened
// row-major. Returns N x D. Throws DimensionError on shape mismatch.
diff::Var embed(const BoundParams& params, const BackboneConfig& config, diff::Var windows);

// embeddings: N x D. Returns N x 1 scores.
diff::Var score(const BoundParams& params, const BackboneConfig& config, diff::Var embeddings);

// score(x + delta) on the same parameters. Throws ContractError when a row of
// delta has l2 norm above epsilon + 1e-9.
diff::Var score_perturbed(const BoundParams& params, const BackboneConfig& config,
                          diff::Var embeddings, diff::Var deltas, double epsilon);

// Clean scores (and adversarial ones when present) next to the labels.
struct ScoreBatch {
  std::vector<double> clean_scores;
  std::optional<std::vector<double>> adv_scores;
  std::vector<double> labels;

  // Throws UsageError unless all vectors share one length.
  void validate() const;
};

// Convenience inference path: one fresh tape, no gradients.
std::vector<double> score_windows(const ParameterStore& store, const BackboneConfig& config,
                                  const diff::Tensor& windows);
diff::Tensor embed_windows(const ParameterStore& store, const BackboneConfig& config,
                           const diff::Tensor& windows);

}  // namespace svat::ranker
