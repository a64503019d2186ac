#include "svat/ranker.hpp"

#include <cmath>

#include "svat/errors.hpp"
#include "svat/layers.hpp"

namespace svat::ranker {

using diff::Tensor;
using diff::Var;

PsiKind parse_psi_kind(const std::string& text) {
  if (text == "concat") return PsiKind::concat;
  if (text == "recurrent") return PsiKind::recurrent;
  throw UsageError("unknown psi kind '" + text + "' (expected concat or recurrent)");
}

std::string to_string(PsiKind kind) { return kind == PsiKind::concat ? "concat" : "recurrent"; }

void BackboneConfig::validate() const {
  if (lookback == 0 || features == 0) throw UsageError("backbone: lookback and features must be >= 1");
  if (psi == PsiKind::recurrent && hidden == 0) throw UsageError("backbone: hidden must be >= 1");
}

void init_parameters(ParameterStore& store, const BackboneConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.features;
  const std::size_t h = config.hidden;
  if (config.psi == PsiKind::recurrent) {
    store.add("ranker.rnn.W_f", glorot_uniform(d, h, rng));
    store.add("ranker.rnn.U_f", glorot_uniform(h, h, rng));
    store.add("ranker.rnn.b_f", Tensor(1, h, 0.0));
    store.add("ranker.rnn.W_c", glorot_uniform(d, h, rng));
    store.add("ranker.rnn.U_c", glorot_uniform(h, h, rng));
    store.add("ranker.rnn.b_c", Tensor(1, h, 0.0));
  }
  const std::size_t dim = config.embedding_dim();
  if (config.head_hidden > 0) {
    store.add("ranker.head.W_1", glorot_uniform(dim, config.head_hidden, rng));
    store.add("ranker.head.b_1", Tensor(1, config.head_hidden, 0.0));
    store.add("ranker.head.W_2", glorot_uniform(config.head_hidden, 1, rng));
  } else {
    store.add("ranker.head.W_2", glorot_uniform(dim, 1, rng));
  }
  store.add("ranker.head.b_2", Tensor(1, 1, 0.0));
}

Var embed(const BoundParams& params, const BackboneConfig& config, Var windows) {
  const std::size_t width = config.lookback * config.features;
  if (windows.cols() != width) {
    throw DimensionError("embed: expected windows with " + std::to_string(width) +
                         " columns, got " + windows.value().shape_string());
  }
  if (config.psi == PsiKind::concat) return windows;

  diff::Tape& tape = *windows.tape();
  const Var w_f = params["ranker.rnn.W_f"];
  const Var u_f = params["ranker.rnn.U_f"];
  const Var b_f = params["ranker.rnn.b_f"];
  const Var w_c = params["ranker.rnn.W_c"];
  const Var u_c = params["ranker.rnn.U_c"];
  const Var b_c = params["ranker.rnn.b_c"];

  Var h = tape.constant(Tensor(windows.rows(), config.hidden, 0.0));
  for (std::size_t s = 0; s < config.lookback; ++s) {
    const Var x = diff::slice_cols(windows, s * config.features, config.features);
    const Var f = diff::sigmoid(diff::add(dense(x, w_f, b_f), diff::matmul(h, u_f)));
    const Var c = diff::tanh(diff::add(dense(x, w_c, b_c), diff::matmul(diff::mul(f, h), u_c)));
    h = diff::add(h, diff::mul(f, diff::sub(c, h)));
  }
  return h;
}

Var score(const BoundParams& params, const BackboneConfig& config, Var embeddings) {
  if (embeddings.cols() != config.embedding_dim()) {
    throw DimensionError("score: expected embeddings with " +
                         std::to_string(config.embedding_dim()) + " columns, got " +
                         embeddings.value().shape_string());
  }
  Var x = embeddings;
  if (config.head_hidden > 0) {
    x = diff::tanh(dense(x, params["ranker.head.W_1"], params["ranker.head.b_1"]));
  }
  return dense(x, params["ranker.head.W_2"], params["ranker.head.b_2"]);
}

Var score_perturbed(const BoundParams& params, const BackboneConfig& config, Var embeddings,
                    Var deltas, double epsilon) {
  const Tensor& d = deltas.value();
  for (std::size_t r = 0; r < d.rows(); ++r) {
    double sq = 0.0;
    for (double v : d.row_span(r)) sq += v * v;
    if (std::sqrt(sq) > epsilon + 1e-9) {
      throw ContractError("score_perturbed: perturbation of stock " + std::to_string(r) +
                          " has norm " + std::to_string(std::sqrt(sq)) + " > epsilon " +
                          std::to_string(epsilon));
    }
  }
  return score(params, config, diff::add(embeddings, deltas));
}

void ScoreBatch::validate() const {
  if (clean_scores.size() != labels.size() ||
      (adv_scores && adv_scores->size() != labels.size())) {
    throw UsageError("ScoreBatch: clean, adversarial and label vectors differ in length");
  }
}

Tensor embed_windows(const ParameterStore& store, const BackboneConfig& config,
                     const Tensor& windows) {
  diff::Tape tape;
  const BoundParams params(store, tape, false);
  return embed(params, config, tape.constant(windows)).value();
}

std::vector<double> score_windows(const ParameterStore& store, const BackboneConfig& config,
                                  const Tensor& windows) {
  diff::Tape tape;
  const BoundParams params(store, tape, false);
  const Var s = score(params, config, embed(params, config, tape.constant(windows)));
  return s.value().values();
}

}  // namespace svat::ranker
