#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "svat/errors.hpp"
#include "svat/kernels.hpp"
#include "svat/risk_entropy.hpp"

using namespace svat;
using namespace svat::risk;
using diff::Tensor;

namespace {

struct Fixture {
  market::StockPanel panel;
  std::vector<market::DayBatch> batches;
  train::Model model;
};

Fixture make_fixture(double epsilon) {
  Fixture f;
  const auto raw = market::synth_market(12, 8, 40);
  f.panel = market::normalize(raw, {0, 30});
  f.batches = market::build_examples(f.panel, 3, {30, 40}).batches;
  ranker::BackboneConfig b;
  b.lookback = 3;
  b.hidden = 4;
  b.head_hidden = 6;
  vpg::VpgConfig v;
  v.epsilon = epsilon;
  v.latent_dim = 2;
  v.encoder_hidden = v.prior_hidden = v.decoder_hidden = 6;
  f.model = train::Model::initialize(b, v, 13);
  return f;
}

}  // namespace

TEST_CASE("ranking entropy examples and bounds") {
  CHECK(ranking_entropy(std::vector<int>{4, 4, 4, 4}) == 0.0);
  CHECK(ranking_entropy(std::vector<int>{3, 3, 7, 9}) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(4.0)).epsilon(1e-15));
  CHECK(ranking_entropy(std::vector<int>{3, 3, 7, 9}) == doctest::Approx(1.0397).epsilon(1e-4));
  CHECK(ranking_entropy(std::vector<int>{1, 2, 3, 4, 5, 6, 7}) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-14));
  CHECK(ranking_entropy(std::vector<int>{2}) == 0.0);
  CHECK_THROWS_AS(ranking_entropy(std::vector<int>{}), UsageError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t m = 1 + rng() % 30;
    std::vector<int> ranks(m);
    for (int& r : ranks) r = 1 + static_cast<int>(rng() % n);
    const double h = ranking_entropy(ranks);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(std::min(m, n))) + 1e-12);
  }
}

TEST_CASE("rank against clean peers") {
  const std::vector<double> clean{0.5, 0.2, 0.1};
  CHECK(rank_against_clean(clean, 1, 0.15) == 2);
  CHECK(rank_against_clean(clean, 1, 0.2) == 2);
  CHECK(rank_against_clean(clean, 1, 0.9) == 1);
  CHECK(rank_against_clean(clean, 0, 0.0) == 3);
  // ties: a lower-indexed peer goes first, a higher-indexed one goes after
  CHECK(rank_against_clean(clean, 2, 0.5) == 2);
  CHECK(rank_against_clean(std::vector<double>{0.3, 0.3}, 0, 0.3) == 1);
  CHECK_THROWS_AS(rank_against_clean(clean, 3, 0.0), UsageError);
}

TEST_CASE("ranks are invariant under strictly monotone score transforms") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> clean(30), probe(200);
  for (double& v : clean) v = g(rng);
  for (double& v : probe) v = g(rng);
  auto transform = [](double x) { return std::exp(3.0 * x) + 7.0; };
  std::vector<double> tc(clean.size()), tp(probe.size());
  for (std::size_t i = 0; i < clean.size(); ++i) tc[i] = transform(clean[i]);
  for (std::size_t i = 0; i < probe.size(); ++i) tp[i] = transform(probe[i]);
  std::vector<int> a(probe.size()), b(probe.size());
  kernels::serial::rank_against(clean, 11, probe, a);
  kernels::serial::rank_against(tc, 11, tp, b);
  CHECK(a == b);
  CHECK(ranking_entropy(a) == ranking_entropy(b));
}

TEST_CASE("zero perturbation keeps the clean rank") {
  const auto f = make_fixture(0.05);
  const auto& batch = f.batches.front();
  const auto day = quantify_day(batch, f.model, {5, 1}, Execution::serial);
  for (std::size_t i = 0; i < batch.stock_count(); ++i) {
    const Tensor zero(1, f.model.backbone.embedding_dim(), 0.0);
    CHECK(rank_under_perturbation(batch, f.model, i, zero) == day.stocks[i].clean_rank);
    CHECK(day.stocks[i].realized_return == batch.labels[i]);
  }
  CHECK_THROWS_AS(rank_under_perturbation(batch, f.model, 99, Tensor(1, 4)), UsageError);
}

TEST_CASE("a single sample has zero entropy") {
  const auto f = make_fixture(0.5);
  for (const auto& day : quantify(f.batches, f.model, {1, 3})) {
    for (const auto& s : day.stocks) CHECK(s.entropy == 0.0);
  }
  CHECK_THROWS_AS(EntropyConfig({0, 1}).validate(), UsageError);
}

TEST_CASE("serial and parallel quantification agree exactly and are reproducible") {
  const auto f = make_fixture(0.5);
  std::vector<RankSample> sa, sb;
  const auto a = quantify_day(f.batches[2], f.model, {40, 4}, Execution::serial, &sa);
  const auto b = quantify_day(f.batches[2], f.model, {40, 4}, Execution::parallel, &sb);
  const auto c = quantify_day(f.batches[2], f.model, {40, 4}, Execution::parallel);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].ranks == sb[i].ranks);
    CHECK(a.stocks[i].entropy == b.stocks[i].entropy);
    CHECK(b.stocks[i].entropy == c.stocks[i].entropy);
    for (int r : sa[i].ranks) {
      CHECK(r >= 1);
      CHECK(r <= static_cast<int>(f.batches[2].stock_count()));
    }
  }
}

TEST_CASE("entropy converges as the sample count grows") {
  // Fixed fixture: every stock's estimate moves by less than 0.05 between
  // M = 500 and M = 1000.
  {
    const auto f = make_fixture(0.05);
    const auto& batch = f.batches[2];
    const auto h500 = quantify_day(batch, f.model, {500, 6});
    const auto h1000 = quantify_day(batch, f.model, {1000, 6});
    double spread = 0.0;
    for (std::size_t i = 0; i < batch.stock_count(); ++i) {
      CHECK(std::abs(h500.stocks[i].entropy - h1000.stocks[i].entropy) < 0.05);
      spread = std::max(spread, h1000.stocks[i].entropy);
    }
    // The fixture must actually move ranks for the check to mean anything.
    CHECK(spread > 0.1);
  }

  // Everywhere else the gap is bounded by the plug-in estimator's own noise:
  // the first 500 draws are shared, so the difference has variance
  // (sum p ln^2 p - H^2) (1/500 - 1/1000).
  const auto f = make_fixture(0.5);
  for (const auto& batch : f.batches) {
    std::vector<RankSample> samples;
    const auto h500 = quantify_day(batch, f.model, {500, 6});
    const auto h1000 = quantify_day(batch, f.model, {1000, 6}, Execution::parallel, &samples);
    for (std::size_t i = 0; i < batch.stock_count(); ++i) {
      std::map<int, double> p;
      for (int r : samples[i].ranks) p[r] += 1.0 / 1000.0;
      double second = 0.0;
      for (const auto& [rank, q] : p) second += q * std::log(q) * std::log(q);
      const double h = h1000.stocks[i].entropy;
      const double se = std::sqrt(std::max(second - h * h, 0.0) * (1.0 / 500.0 - 1.0 / 1000.0));
      CHECK(std::abs(h500.stocks[i].entropy - h) <= 5.0 * se + 1e-12);
    }
  }
}

TEST_CASE("spearman") {
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 20, 30, 40}) == 1.0);
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}) == -1.0);
  CHECK(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}) == 0.0);
  // average ranks: a = [1.5, 1.5, 3], b = [1, 2, 3] -> pearson = sqrt(3)/2
  CHECK(spearman(std::vector<double>{5, 5, 9}, std::vector<double>{1, 2, 3}) ==
        doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), UsageError);
}

TEST_CASE("entropy csv layout") {
  const auto f = make_fixture(0.5);
  const auto days = quantify(f.batches, f.model, {8, 1});
  const auto path = std::filesystem::temp_directory_path() / "svat_entropy.csv";
  write_entropy_csv(path, days, f.panel);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "date,symbol,entropy,clean_rank,realized_return");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == days.size() * f.panel.stock_count());
}
