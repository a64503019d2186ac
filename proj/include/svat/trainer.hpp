#pragma once

// Split variational adversarial training.
//
// One optimisation step per trading day (all N stocks form one batch):
//   1. clean forward and clean loss L
//   2. per-stock gradient of L w.r.t. the embeddings -> delta_post (constant)
//   3. posterior Gaussian and one reparameterized z per stock
//   4. decoded perturbations delta on the eps-sphere
//   5. adversarial scores and the return-weighted loss L_adv
//   6. prior Gaussian and L_KL = sum_i KL(post_i || prior_i)
//   7. one Adam step on backbone and generator parameters from
//      L_com = L + lambda (L_adv + L_KL)
// The model with the best validation Sharpe ratio is kept.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "svat/adam.hpp"
#include "svat/backtest.hpp"
#include "svat/market_data.hpp"
#include "svat/parameters.hpp"
#include "svat/ranker.hpp"
#include "svat/vpg.hpp"

namespace svat::train {

struct TrainConfig {
  double alpha = 0.5;
  double lambda = 0.5;
  double epsilon = 0.05;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t lookback = 8;
  std::uint64_t seed = 0;
  // Cap on pairs per anchor stock in the ranking terms; nullopt = all N^2.
  std::optional<std::size_t> pair_subsample;
  // false trains the plain backbone: no generator graph, clean loss only.
  bool svat = true;
  // Portfolio size and risk-free rate used for validation-based selection.
  std::size_t k = 5;
  double r_f = 0.0;
  bool shuffle = true;

  // Throws UsageError on non-positive alpha/epsilon/lr, negative lambda or
  // zero epochs/lookback. lambda = 0 is allowed: it is the ablation switch.
  void validate() const;
};

// Backbone and generator parameters with the configuration that shapes them.
struct Model {
  ranker::BackboneConfig backbone;
  vpg::VpgConfig vpg;
  ParameterStore params;

  // Backbone parameters are drawn first from the init stream, so the
  // backbone initialisation does not depend on the generator's shape.
  static Model initialize(const ranker::BackboneConfig& backbone, const vpg::VpgConfig& vpg,
                          std::uint64_t seed);
};

// Independent RNG stream for (seed, purpose, extra).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0,
                            std::uint64_t b = 0);

enum StreamPurpose : std::uint64_t {
  kInitStream = 1,
  kNoiseStream = 2,
  kShuffleStream = 3,
  kPairStream = 4,
  kEntropyStream = 5,
};

// Every term of the objective for one day, built on `tape`.
struct Objective {
  diff::Var embeddings;   // N x D
  diff::Var clean_scores; // N x 1
  diff::Var clean;        // L
  diff::Tensor delta_post;
  std::optional<diff::Var> deltas;     // N x D, generator output
  std::optional<diff::Var> adv_scores; // N x 1
  std::optional<diff::Var> adv_terms;  // N x 1, L_i before return weighting
  std::optional<diff::Var> adv;        // L_adv
  std::optional<diff::Var> kl;         // L_KL
  diff::Var combined;                  // L_com
};

// Builds the objective. `posterior_noise` (N x H) is required when the
// generator is active. `fixed_delta_post` replaces step 2 (used by gradient
// checks that must hold the stop-gradient input fixed). Non-finite values
// raise NumericError naming the failing term.
Objective build_objective(diff::Tape& tape, const BoundParams& params, const Model& model,
                          const market::DayBatch& batch, const TrainConfig& config,
                          const diff::Tensor* posterior_noise,
                          const diff::Tensor* pair_mask = nullptr,
                          const diff::Tensor* fixed_delta_post = nullptr);

struct StepStats {
  double clean = 0.0;
  double adv = 0.0;
  double kl = 0.0;
  double combined = 0.0;
};

// Draws noise (and a pair mask if configured) and applies one Adam update.
StepStats train_step(Model& model, AdamState& adam, const market::DayBatch& batch,
                     const TrainConfig& config, std::mt19937_64& noise_rng,
                     std::mt19937_64& pair_rng);

struct EpochLog {
  std::size_t epoch = 0;
  double clean = 0.0;
  double adv = 0.0;
  double kl = 0.0;
  double combined = 0.0;
  double valid_irr = 0.0;
  std::optional<double> valid_sr;
  double valid_mdd = 0.0;
};

// A trained model plus everything needed to resume or reproduce it.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  Model model;
  TrainConfig config;
  AdamState adam;
  std::size_t epoch = 0;
  std::string noise_rng_state;
  std::string shuffle_rng_state;
  std::string pair_rng_state;
};

struct TrainResult {
  Checkpoint best;   // highest validation SR
  Checkpoint final;  // after the last epoch
  std::vector<EpochLog> log;
  std::vector<std::string> warnings;
};

struct TrainHooks {
  // Called after every optimizer step with the updated parameters.
  std::function<void(std::size_t step, const ParameterStore&)> on_step;
};

// `panel` must already be normalized. Throws UsageError for an invalid
// config or split, or when no training batch exists.
TrainResult train(const market::StockPanel& panel, const market::SplitSpec& split,
                  const TrainConfig& config, const ranker::BackboneConfig& backbone,
                  const vpg::VpgConfig& vpg, const TrainHooks& hooks = {});

// Clean scores for every batch, keyed by decision day (target day - 1).
backtest::ScoreTable score_batches(const Model& model,
                                   const std::vector<market::DayBatch>& batches);

// Writes `epoch,L,L_adv,L_KL,L_com,valid_IRR,valid_SR,valid_MDD`.
void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

// Binary checkpoint I/O; see docs/checkpoint-format.md.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace svat::train
