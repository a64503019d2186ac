#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "svat/errors.hpp"
#include "svat/trainer.hpp"

using namespace svat;
using namespace svat::train;
using diff::Tape;
using diff::Tensor;
namespace fs = std::filesystem;

namespace {

struct Setup {
  market::StockPanel panel;
  market::SplitSpec split;
  TrainConfig config;
  ranker::BackboneConfig backbone;
  vpg::VpgConfig vpg;
};

Setup small_setup() {
  Setup s;
  const auto raw = market::synth_market(4, 6, 60);
  s.split = market::split_by_fraction(raw.day_count(), 0.6, 0.2);
  s.panel = market::normalize(raw, s.split.train);
  s.config.epochs = 2;
  s.config.lookback = 3;
  s.config.k = 2;
  s.config.seed = 77;
  s.config.lr = 1e-2;
  s.backbone.lookback = 3;
  s.backbone.hidden = 4;
  s.backbone.head_hidden = 4;
  s.vpg.latent_dim = 2;
  s.vpg.encoder_hidden = s.vpg.prior_hidden = s.vpg.decoder_hidden = 6;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("svat_tr_" + name); }

ParameterStore backbone_only(const ParameterStore& all) {
  ParameterStore out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.name(i).rfind("ranker.", 0) == 0) out.add(all.name(i), all.at(i));
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = 0.0;
  CHECK_NOTHROW(c.validate());
  for (auto bad : {+[](TrainConfig& t) { t.alpha = -1; }, +[](TrainConfig& t) { t.epsilon = 0; },
                   +[](TrainConfig& t) { t.lr = 0; }, +[](TrainConfig& t) { t.lambda = -0.1; },
                   +[](TrainConfig& t) { t.epochs = 0; }, +[](TrainConfig& t) { t.lookback = 0; }}) {
    TrainConfig t;
    bad(t);
    CHECK_THROWS_AS(t.validate(), UsageError);
  }
}

TEST_CASE("same seed and config give a bit-identical checkpoint") {
  const auto s = small_setup();
  const auto a = train::train(s.panel, s.split, s.config, s.backbone, s.vpg);
  const auto b = train::train(s.panel, s.split, s.config, s.backbone, s.vpg);
  save_checkpoint(temp_file("a.svat"), a.final);
  save_checkpoint(temp_file("b.svat"), b.final);
  CHECK(slurp(temp_file("a.svat")) == slurp(temp_file("b.svat")));
  CHECK(a.log.size() == 2);

  auto other = s.config;
  other.seed = 78;
  const auto c = train::train(s.panel, s.split, other, s.backbone, s.vpg);
  CHECK_FALSE(c.final.model.params.bit_equal(a.final.model.params));
}

TEST_CASE("lambda = 0 follows the plain backbone trajectory exactly") {
  const auto s = small_setup();
  auto zero = s.config;
  zero.lambda = 0.0;
  auto plain = s.config;
  plain.svat = false;

  std::vector<ParameterStore> ta, tb;
  train::train(s.panel, s.split, zero, s.backbone, s.vpg,
        {[&](std::size_t, const ParameterStore& p) { ta.push_back(backbone_only(p)); }});
  train::train(s.panel, s.split, plain, s.backbone, s.vpg,
        {[&](std::size_t, const ParameterStore& p) { tb.push_back(backbone_only(p)); }});
  REQUIRE(ta.size() == tb.size());
  REQUIRE_FALSE(ta.empty());
  bool identical = true;
  for (std::size_t i = 0; i < ta.size(); ++i) identical = identical && ta[i].bit_equal(tb[i]);
  CHECK(identical);
  CHECK_FALSE(ta.front().bit_equal(ta.back()));
}

TEST_CASE("a small step on the combined loss does not raise a profitable stock's adversarial term") {
  auto s = small_setup();
  s.config.alpha = 0.0;
  s.config.lambda = 0.5;
  s.config.epsilon = s.vpg.epsilon = 0.05;
  s.backbone.features = 5;
  const auto model0 = Model::initialize(s.backbone, s.vpg, 3);

  market::DayBatch batch;
  batch.target_day = 5;
  batch.lookback = 3;
  batch.windows = Tensor(1, 15);
  for (std::size_t j = 0; j < 15; ++j) batch.windows(0, j) = 0.1 * static_cast<double>(j % 4) - 0.1;
  batch.labels = {0.02};
  const Tensor noise = Tensor::from_rows({{0.3, -0.8}});

  auto evaluate = [&](const Model& m, Tensor* dpost_in, Tensor* dpost_out, ParamGrads* grads) {
    Tape tape;
    const BoundParams params(m.params, tape);
    const auto obj = build_objective(tape, params, m, batch, s.config, &noise, nullptr, dpost_in);
    if (dpost_out) *dpost_out = obj.delta_post;
    if (grads) *grads = params.gradients(tape.backward(obj.combined));
    return obj.adv_terms->value()[0];
  };

  Tensor dpost;
  ParamGrads grads;
  const double before = evaluate(model0, nullptr, &dpost, &grads);
  Model moved = model0;
  for (std::size_t i = 0; i < moved.params.size(); ++i) {
    if (moved.params.name(i).rfind("ranker.", 0) != 0) continue;  // generator frozen
    auto data = moved.params.at(i).data();
    for (std::size_t k = 0; k < data.size(); ++k) data[k] -= 1e-4 * grads[i][k];
  }
  const double after = evaluate(moved, &dpost, nullptr, nullptr);
  CHECK(after <= before);
  CHECK(after < before);
}

TEST_CASE("checkpoint round trip reproduces validation metrics") {
  const auto s = small_setup();
  const auto result = train::train(s.panel, s.split, s.config, s.backbone, s.vpg);
  const auto path = temp_file("roundtrip.svat");
  save_checkpoint(path, result.best);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.model.params.bit_equal(result.best.model.params));
  CHECK(loaded.epoch == result.best.epoch);
  CHECK(loaded.adam.step_count == result.best.adam.step_count);
  CHECK(loaded.noise_rng_state == result.best.noise_rng_state);

  const auto valid = market::build_examples(s.panel, s.config.lookback, s.split.valid).batches;
  auto metrics = [&](const Model& m) {
    return backtest::run_backtest(score_batches(m, valid), s.panel, {s.config.k, backtest::Weighting::sum},
                                  s.config.r_f);
  };
  const auto a = metrics(result.best.model);
  const auto b = metrics(loaded.model);
  CHECK(a.daily_irr == b.daily_irr);
  CHECK(a.sr == b.sr);
  CHECK(a.mdd == b.mdd);
  const auto& logged = result.log.at(result.best.epoch - 1);
  CHECK(logged.valid_irr == a.irr_total);
  CHECK(logged.valid_mdd == a.mdd);

  // Truncated and corrupted files are usage errors.
  const std::string bytes = slurp(path);
  {
    std::ofstream out(temp_file("short.svat"), std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(temp_file("short.svat")), UsageError);
  {
    std::ofstream out(temp_file("magic.svat"), std::ios::binary);
    out << "NOTACKPT" << bytes.substr(8);
  }
  CHECK_THROWS_AS(load_checkpoint(temp_file("magic.svat")), UsageError);
}

TEST_CASE("non-finite losses name the failing term") {
  auto s = small_setup();
  auto model = Model::initialize(s.backbone, s.vpg, 5);
  for (double& v : model.params.at("ranker.head.b_2").data()) v = 1e200;
  const auto batches = market::build_examples(s.panel, 3, s.split.train).batches;
  auto adam = AdamState::for_store(model.params);
  auto n = make_stream(1, kNoiseStream);
  auto p = make_stream(1, kPairStream);
  try {
    train_step(model, adam, batches.front(), s.config, n, p);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("non-finite value in L") != std::string::npos);
  }
}

TEST_CASE("training refuses impossible setups") {
  auto s = small_setup();
  auto big_k = s.config;
  big_k.k = 7;
  CHECK_THROWS_AS(train::train(s.panel, s.split, big_k, s.backbone, s.vpg), UsageError);
  auto long_window = s.config;
  long_window.lookback = 40;
  CHECK_THROWS_AS(train::train(s.panel, s.split, long_window, s.backbone, s.vpg), UsageError);
}

TEST_CASE("rng streams are independent of each other and reproducible") {
  auto a = make_stream(9, kNoiseStream, 1, 2);
  auto b = make_stream(9, kNoiseStream, 1, 2);
  auto c = make_stream(9, kShuffleStream, 1, 2);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
}
