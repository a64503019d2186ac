#pragma once

// Variational perturbation generator.
//
// Training path: the gradient of the clean loss w.r.t. each embedding gives a
// primitive perturbation delta_post = eps * g / |g|. A posterior encoder maps
// [delta_post, x] to a diagonal Gaussian over H latent risk factors; one
// reparameterized sample z = mu + sigma * noise is decoded together with x
// into a perturbation on the eps-sphere. A prior network, conditioned on x
// alone, is pulled towards the posterior by the closed-form KL divergence.
//
// Test path: z is drawn from the prior instead, so no labels or gradients
// are needed. Both paths emit N x D perturbations of identical shape.
//
// Each of F_post, F_prior and F_gen is a two-layer tanh MLP of the configured
// width; F_gen is followed by a linear map to R^D. Parameters live under the
// "vpg." prefix.

#include <cstddef>
#include <random>

#include "svat/parameters.hpp"
#include "svat/tape.hpp"

namespace svat::vpg {

struct VpgConfig {
  double epsilon = 0.05;
  // Not reported for the original experiments; 16 is our default.
  std::size_t latent_dim = 16;
  std::size_t encoder_hidden = 128;
  std::size_t prior_hidden = 128;
  std::size_t decoder_hidden = 128;

  void validate() const;
};

void init_parameters(ParameterStore& store, const VpgConfig& config, std::size_t embedding_dim,
                     std::mt19937_64& rng);

// Value-level diagonal Gaussian (one row per stock).
struct GaussianParams {
  diff::Tensor mu;
  diff::Tensor sigma;
};

// Tape-level counterpart.
struct GaussianVars {
  diff::Var mu;
  diff::Var sigma;

  GaussianParams values() const { return {mu.value(), sigma.value()}; }
};

// Row-wise eps * g_i / |g_i|; zero rows stay zero. Returned as a plain value
// (no gradient path back to the loss).
diff::Tensor extract_posterior_delta(const diff::Tensor& loss_grad, double epsilon);

GaussianVars encode_posterior(const BoundParams& params, const VpgConfig& config,
                              diff::Var delta_post, diff::Var embeddings);
GaussianVars encode_prior(const BoundParams& params, const VpgConfig& config,
                          diff::Var embeddings);

// z = mu + sigma * noise, differentiable in mu and sigma.
diff::Var sample_z(const GaussianVars& dist, diff::Var noise);

// eps * g / |g| with g = F_gen([z, x]); zero g gives zero delta.
diff::Var decode_delta(const BoundParams& params, const VpgConfig& config, diff::Var z,
                       diff::Var embeddings);

// Per-row KL(post || prior) as an N x 1 column:
//   sum_h ln(s_p / s_q) + (s_q^2 + (m_q - m_p)^2) / (2 s_p^2) - 1/2
// (q = posterior, p = prior).
diff::Var kl_divergence(const GaussianVars& posterior, const GaussianVars& prior);

// Scalar KL for a single pair of Gaussians stored as 1 x H (or H x 1)
// tensors. Throws ContractError for non-positive sigma, DimensionError for
// mismatched shapes.
double kl_divergence(const GaussianParams& posterior, const GaussianParams& prior);

// Standard-normal noise of the given shape from `rng`.
diff::Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace svat::vpg
