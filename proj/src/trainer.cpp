#include "svat/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "svat/errors.hpp"
#include "svat/losses.hpp"

namespace svat::train {

using diff::Tensor;
using diff::Var;

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError(std::string(name) + " must be > 0");
  };
  positive(alpha, "alpha");
  positive(epsilon, "epsilon");
  positive(lr, "lr");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be >= 0");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (lookback < 1) throw UsageError("lookback must be >= 1");
  if (k < 1) throw UsageError("k must be >= 1");
  if (pair_subsample && *pair_subsample < 1) throw UsageError("pair_subsample must be >= 1");
  if (!std::isfinite(r_f)) throw UsageError("rf must be finite");
}

Model Model::initialize(const ranker::BackboneConfig& backbone, const vpg::VpgConfig& vpg,
                        std::uint64_t seed) {
  Model model;
  model.backbone = backbone;
  model.vpg = vpg;
  auto rng = make_stream(seed, kInitStream);
  ranker::init_parameters(model.params, backbone, rng);
  vpg::init_parameters(model.params, vpg, backbone.embedding_dim(), rng);
  return model;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a,
                            std::uint64_t b) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(purpose), lo(a), hi(a), lo(b), hi(b)};
  return std::mt19937_64(seq);
}

namespace {

template <class F>
auto guarded(const char* term, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError(std::string("non-finite value in ") + term + ": " + e.what());
  }
}

Tensor draw_pair_mask(std::size_t n, std::size_t cap, std::mt19937_64& rng) {
  Tensor mask(n, n, 0.0);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    const std::size_t take = std::min(cap, others.size());
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (std::size_t s = 0; s < take; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, others.size() - 1);
      std::swap(others[s], others[pick(rng)]);
      mask(i, others[s]) = 1.0;
    }
  }
  return mask;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

Objective build_objective(diff::Tape& tape, const BoundParams& params, const Model& model,
                          const market::DayBatch& batch, const TrainConfig& config,
                          const Tensor* posterior_noise, const Tensor* pair_mask,
                          const Tensor* fixed_delta_post) {
  const auto& labels = batch.labels;
  Objective obj;
  obj.embeddings = guarded("embedding", [&] {
    return ranker::embed(params, model.backbone, tape.constant(batch.windows));
  });
  obj.clean_scores = guarded("clean scores", [&] {
    return ranker::score(params, model.backbone, obj.embeddings);
  });
  obj.clean = guarded("L", [&] {
    return losses::clean_loss(obj.clean_scores, labels, config.alpha, pair_mask);
  });
  if (!config.svat) {
    obj.combined = obj.clean;
    return obj;
  }

  if (model.vpg.epsilon != config.epsilon) {
    throw UsageError("generator epsilon differs from the training epsilon");
  }
  if (posterior_noise == nullptr || posterior_noise->rows() != batch.stock_count() ||
      posterior_noise->cols() != model.vpg.latent_dim) {
    throw UsageError("build_objective: posterior noise must be N x latent_dim");
  }

  if (fixed_delta_post != nullptr) {
    obj.delta_post = *fixed_delta_post;
  } else {
    const diff::Gradients g = tape.backward(obj.clean);
    obj.delta_post = vpg::extract_posterior_delta(g[obj.embeddings], config.epsilon);
  }

  const Var delta_post = tape.constant(obj.delta_post);
  const auto posterior = guarded("posterior encoder", [&] {
    return vpg::encode_posterior(params, model.vpg, delta_post, obj.embeddings);
  });
  const Var z = vpg::sample_z(posterior, tape.constant(*posterior_noise));
  obj.deltas = guarded("generator", [&] {
    return vpg::decode_delta(params, model.vpg, z, obj.embeddings);
  });
  obj.adv_scores = guarded("adversarial scores", [&] {
    return ranker::score_perturbed(params, model.backbone, obj.embeddings, *obj.deltas,
                                   config.epsilon);
  });
  obj.adv_terms = guarded("L_adv", [&] {
    return losses::adv_loss_terms(*obj.adv_scores, labels, config.alpha, pair_mask);
  });
  obj.adv = guarded("L_adv", [&] { return losses::split_weighted_sum(*obj.adv_terms, labels); });
  const auto prior = guarded("prior network", [&] {
    return vpg::encode_prior(params, model.vpg, obj.embeddings);
  });
  obj.kl = guarded("L_KL", [&] { return diff::sum(vpg::kl_divergence(posterior, prior)); });
  obj.combined = guarded("L_com", [&] {
    return losses::combined_loss(obj.clean, *obj.adv, *obj.kl, config.lambda);
  });
  return obj;
}

StepStats train_step(Model& model, AdamState& adam, const market::DayBatch& batch,
                     const TrainConfig& config, std::mt19937_64& noise_rng,
                     std::mt19937_64& pair_rng) {
  std::optional<Tensor> mask;
  if (config.pair_subsample && *config.pair_subsample + 1 < batch.stock_count()) {
    mask = draw_pair_mask(batch.stock_count(), *config.pair_subsample, pair_rng);
  }
  std::optional<Tensor> noise;
  if (config.svat) {
    noise = vpg::standard_normal(batch.stock_count(), model.vpg.latent_dim, noise_rng);
  }

  diff::Tape tape;
  const BoundParams params(model.params, tape);
  const Objective obj = build_objective(tape, params, model, batch, config,
                                        noise ? &*noise : nullptr, mask ? &*mask : nullptr);
  const ParamGrads grads = params.gradients(tape.backward(obj.combined));
  adam_step(model.params, grads, adam, config.lr);

  StepStats stats;
  stats.clean = obj.clean.value().item();
  stats.adv = obj.adv ? obj.adv->value().item() : 0.0;
  stats.kl = obj.kl ? obj.kl->value().item() : 0.0;
  stats.combined = obj.combined.value().item();
  return stats;
}

backtest::ScoreTable score_batches(const Model& model,
                                   const std::vector<market::DayBatch>& batches) {
  backtest::ScoreTable table;
  table.days.reserve(batches.size());
  for (const auto& batch : batches) {
    if (batch.target_day == 0) throw UsageError("score_batches: batch without a decision day");
    table.days.push_back(
        {batch.target_day - 1, ranker::score_windows(model.params, model.backbone, batch.windows)});
  }
  return table;
}

TrainResult train(const market::StockPanel& panel, const market::SplitSpec& split,
                  const TrainConfig& config, const ranker::BackboneConfig& backbone_in,
                  const vpg::VpgConfig& vpg_in, const TrainHooks& hooks) {
  config.validate();
  split.validate(panel.day_count());
  if (config.k > panel.stock_count()) {
    throw UsageError("k = " + std::to_string(config.k) + " exceeds the " +
                     std::to_string(panel.stock_count()) + " stocks in the panel");
  }

  TrainResult result;
  if (!panel.normalized) result.warnings.push_back("training on a panel that is not normalized");

  ranker::BackboneConfig backbone = backbone_in;
  backbone.lookback = config.lookback;
  backbone.features = market::kFeatureCount;
  vpg::VpgConfig vpg = vpg_in;
  vpg.epsilon = config.epsilon;

  auto train_set = market::build_examples(panel, config.lookback, split.train);
  auto valid_set = market::build_examples(panel, config.lookback, split.valid);
  for (auto& w : train_set.warnings) result.warnings.push_back("train: " + w);
  for (auto& w : valid_set.warnings) result.warnings.push_back("valid: " + w);
  if (train_set.batches.empty()) throw UsageError("train: no training batch (lookback too long?)");

  Checkpoint state;
  state.model = Model::initialize(backbone, vpg, config.seed);
  state.config = config;
  state.adam = AdamState::for_store(state.model.params);
  auto noise_rng = make_stream(config.seed, kNoiseStream);
  auto shuffle_rng = make_stream(config.seed, kShuffleStream);
  auto pair_rng = make_stream(config.seed, kPairStream);

  auto snapshot = [&](std::size_t epoch) {
    state.epoch = epoch;
    state.noise_rng_state = rng_state(noise_rng);
    state.shuffle_rng_state = rng_state(shuffle_rng);
    state.pair_rng_state = rng_state(pair_rng);
    return state;
  };

  std::vector<std::size_t> order(train_set.batches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const backtest::Strategy strategy{config.k, backtest::Weighting::sum};
  double best_sr = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t idx : order) {
      const StepStats s = train_step(state.model, state.adam, train_set.batches[idx], config,
                                     noise_rng, pair_rng);
      entry.clean += s.clean;
      entry.adv += s.adv;
      entry.kl += s.kl;
      entry.combined += s.combined;
      ++step;
      if (hooks.on_step) hooks.on_step(step, state.model.params);
    }
    const auto batches = static_cast<double>(order.size());
    entry.clean /= batches;
    entry.adv /= batches;
    entry.kl /= batches;
    entry.combined /= batches;

    double sr_key = -std::numeric_limits<double>::infinity();
    if (!valid_set.batches.empty()) {
      const auto report = backtest::run_backtest(score_batches(state.model, valid_set.batches),
                                                 panel, strategy, config.r_f);
      entry.valid_irr = report.irr_total;
      entry.valid_sr = report.sr;
      entry.valid_mdd = report.mdd;
      if (report.sr) sr_key = *report.sr;
    }
    if (!have_best || sr_key > best_sr) {
      best_sr = sr_key;
      have_best = true;
      result.best = snapshot(epoch);
    }
    result.log.push_back(entry);
  }
  result.final = snapshot(config.epochs);
  return result;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  out << "epoch,L,L_adv,L_KL,L_com,valid_IRR,valid_SR,valid_MDD\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << num(e.clean) << ',' << num(e.adv) << ',' << num(e.kl) << ','
        << num(e.combined) << ',' << num(e.valid_irr) << ','
        << (e.valid_sr ? num(*e.valid_sr) : std::string("nan")) << ',' << num(e.valid_mdd)
        << '\n';
  }
}

}  // namespace svat::train
