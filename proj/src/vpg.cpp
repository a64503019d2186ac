#include "svat/vpg.hpp"

#include <cmath>
#include <string>

#include "svat/errors.hpp"
#include "svat/layers.hpp"

namespace svat::vpg {

using diff::Tensor;
using diff::Var;

void VpgConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw UsageError("vpg: epsilon must be > 0");
  if (latent_dim == 0) throw UsageError("vpg: latent dimension must be >= 1");
  if (encoder_hidden == 0 || prior_hidden == 0 || decoder_hidden == 0) {
    throw UsageError("vpg: hidden widths must be >= 1");
  }
}

namespace {

void add_mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t width,
             std::mt19937_64& rng) {
  store.add(prefix + ".W_1", glorot_uniform(in, width, rng));
  store.add(prefix + ".b_1", Tensor(1, width, 0.0));
  store.add(prefix + ".W_2", glorot_uniform(width, width, rng));
  store.add(prefix + ".b_2", Tensor(1, width, 0.0));
}

Var mlp(const BoundParams& params, const std::string& prefix, Var x) {
  const Var h = diff::tanh(dense(x, params[prefix + ".W_1"], params[prefix + ".b_1"]));
  return diff::tanh(dense(h, params[prefix + ".W_2"], params[prefix + ".b_2"]));
}

void add_gaussian_heads(ParameterStore& store, const std::string& prefix, std::size_t width,
                        std::size_t latent, std::mt19937_64& rng) {
  store.add(prefix + ".W_mu", glorot_uniform(width, latent, rng));
  store.add(prefix + ".b_mu", Tensor(1, latent, 0.0));
  store.add(prefix + ".W_sigma", glorot_uniform(width, latent, rng));
  store.add(prefix + ".b_sigma", Tensor(1, latent, 0.0));
}

GaussianVars gaussian_heads(const BoundParams& params, const std::string& prefix, Var h) {
  return {dense(h, params[prefix + ".W_mu"], params[prefix + ".b_mu"]),
          diff::softplus(dense(h, params[prefix + ".W_sigma"], params[prefix + ".b_sigma"]))};
}

}  // namespace

void init_parameters(ParameterStore& store, const VpgConfig& config, std::size_t embedding_dim,
                     std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = embedding_dim;
  const std::size_t h = config.latent_dim;
  add_mlp(store, "vpg.post", 2 * d, config.encoder_hidden, rng);
  add_gaussian_heads(store, "vpg.post", config.encoder_hidden, h, rng);
  add_mlp(store, "vpg.prior", d, config.prior_hidden, rng);
  add_gaussian_heads(store, "vpg.prior", config.prior_hidden, h, rng);
  add_mlp(store, "vpg.gen", h + d, config.decoder_hidden, rng);
  store.add("vpg.gen.W_out", glorot_uniform(config.decoder_hidden, d, rng));
  store.add("vpg.gen.b_out", Tensor(1, d, 0.0));
}

Tensor extract_posterior_delta(const Tensor& loss_grad, double epsilon) {
  return diff::normalize_rows_value(loss_grad, epsilon);
}

GaussianVars encode_posterior(const BoundParams& params, const VpgConfig&, Var delta_post,
                              Var embeddings) {
  if (delta_post.rows() != embeddings.rows() || delta_post.cols() != embeddings.cols()) {
    throw DimensionError("encode_posterior: delta " + delta_post.value().shape_string() +
                         " vs embeddings " + embeddings.value().shape_string());
  }
  return gaussian_heads(params, "vpg.post", mlp(params, "vpg.post", diff::concat(delta_post, embeddings)));
}

GaussianVars encode_prior(const BoundParams& params, const VpgConfig&, Var embeddings) {
  return gaussian_heads(params, "vpg.prior", mlp(params, "vpg.prior", embeddings));
}

Var sample_z(const GaussianVars& dist, Var noise) {
  return diff::add(dist.mu, diff::mul(dist.sigma, noise));
}

Var decode_delta(const BoundParams& params, const VpgConfig& config, Var z, Var embeddings) {
  const Var h = mlp(params, "vpg.gen", diff::concat(z, embeddings));
  const Var g = dense(h, params["vpg.gen.W_out"], params["vpg.gen.b_out"]);
  return diff::normalize_rows(g, config.epsilon);
}

Var kl_divergence(const GaussianVars& posterior, const GaussianVars& prior) {
  diff::Tape& tape = *posterior.mu.tape();
  const Var log_ratio = diff::sub(diff::log(prior.sigma), diff::log(posterior.sigma));
  const Var spread = diff::add(diff::square(posterior.sigma),
                               diff::square(diff::sub(posterior.mu, prior.mu)));
  const Var quad = diff::div(spread, diff::scale(diff::square(prior.sigma), 2.0));
  const Var half = tape.constant(Tensor(posterior.mu.rows(), posterior.mu.cols(), 0.5));
  return diff::row_sum(diff::sub(diff::add(log_ratio, quad), half));
}

double kl_divergence(const GaussianParams& posterior, const GaussianParams& prior) {
  diff::require_same_shape(posterior.mu, posterior.sigma, "kl_divergence posterior");
  diff::require_same_shape(prior.mu, prior.sigma, "kl_divergence prior");
  diff::require_same_shape(posterior.mu, prior.mu, "kl_divergence");
  double total = 0.0;
  for (std::size_t h = 0; h < posterior.mu.size(); ++h) {
    const double sq = posterior.sigma[h];
    const double sp = prior.sigma[h];
    if (!(sq > 0.0) || !(sp > 0.0)) {
      throw ContractError("kl_divergence: sigma must be strictly positive");
    }
    const double dm = posterior.mu[h] - prior.mu[h];
    total += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return total;
}

Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = gauss(rng);
  return t;
}

}  // namespace svat::vpg
