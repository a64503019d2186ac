#include <cmath>
#include <random>

#include "doctest.h"
#include "svat/errors.hpp"
#include "svat/ranker.hpp"
#include "svat/verify.hpp"

using namespace svat;
using namespace svat::ranker;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

ParameterStore make_store(const BackboneConfig& c, std::uint64_t seed) {
  ParameterStore store;
  std::mt19937_64 rng(seed);
  init_parameters(store, c, rng);
  return store;
}

void zero_all(ParameterStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double& v : store.at(i).data()) v = 0.0;
  }
}

BackboneConfig recurrent_config() {
  BackboneConfig c;
  c.lookback = 3;
  c.features = 2;
  c.hidden = 4;
  c.head_hidden = 5;
  return c;
}

}  // namespace

TEST_CASE("concat embedding flattens the window row-major") {
  BackboneConfig c;
  c.psi = PsiKind::concat;
  c.lookback = 2;
  c.features = 2;
  c.head_hidden = 3;
  const auto store = make_store(c, 1);
  const Tensor x = embed_windows(store, c, Tensor::from_rows({{1, 2, 3, 4}}));
  CHECK(x.bit_equal(Tensor::from_rows({{1, 2, 3, 4}})));
  CHECK(c.embedding_dim() == 4);
  CHECK_THROWS_AS(embed_windows(store, c, Tensor(1, 5)), DimensionError);
}

TEST_CASE("recurrent embedding: zero weights and zero window give zero") {
  const auto c = recurrent_config();
  auto store = make_store(c, 2);
  zero_all(store);
  CHECK(embed_windows(store, c, Tensor(3, 6, 0.0)).bit_equal(Tensor(3, 4, 0.0)));
}

TEST_CASE("recurrent embedding matches a hand-unrolled recurrence") {
  const auto c = recurrent_config();
  const auto store = make_store(c, 3);
  const Tensor windows = random_tensor(2, 6, 4);
  const Tensor got = embed_windows(store, c, windows);

  const auto& wf = store.at("ranker.rnn.W_f");
  const auto& uf = store.at("ranker.rnn.U_f");
  const auto& bf = store.at("ranker.rnn.b_f");
  const auto& wc = store.at("ranker.rnn.W_c");
  const auto& uc = store.at("ranker.rnn.U_c");
  const auto& bc = store.at("ranker.rnn.b_c");
  const std::size_t h = c.hidden;
  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> state(h, 0.0);
    for (std::size_t t = 0; t < c.lookback; ++t) {
      const double* x = windows.row_span(n).data() + t * c.features;
      std::vector<double> f(h), c_t(h), gated(h);
      for (std::size_t j = 0; j < h; ++j) {
        double a = bf(0, j);
        for (std::size_t k = 0; k < c.features; ++k) a += x[k] * wf(k, j);
        for (std::size_t k = 0; k < h; ++k) a += state[k] * uf(k, j);
        f[j] = 1.0 / (1.0 + std::exp(-a));
      }
      for (std::size_t k = 0; k < h; ++k) gated[k] = f[k] * state[k];
      for (std::size_t j = 0; j < h; ++j) {
        double a = bc(0, j);
        for (std::size_t k = 0; k < c.features; ++k) a += x[k] * wc(k, j);
        for (std::size_t k = 0; k < h; ++k) a += gated[k] * uc(k, j);
        c_t[j] = std::tanh(a);
      }
      for (std::size_t j = 0; j < h; ++j) state[j] += f[j] * (c_t[j] - state[j]);
    }
    for (std::size_t j = 0; j < h; ++j) {
      CHECK(got(n, j) == doctest::Approx(state[j]).epsilon(1e-13));
    }
  }
}

TEST_CASE("head: zero parameters score zero, shared parameters score alike") {
  const auto c = recurrent_config();
  auto store = make_store(c, 5);
  Tensor windows = random_tensor(4, 6, 6);
  for (std::size_t j = 0; j < 6; ++j) windows(3, j) = windows(1, j);
  const auto s = score_windows(store, c, windows);
  CHECK(s[1] == s[3]);

  zero_all(store);
  for (double v : score_windows(store, c, windows)) CHECK(v == 0.0);
}

TEST_CASE("permuting stocks permutes the scores") {
  const auto c = recurrent_config();
  const auto store = make_store(c, 7);
  const Tensor windows = random_tensor(5, 6, 8);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor permuted(5, 6);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 6; ++j) permuted(i, j) = windows(perm[i], j);
  }
  const auto a = score_windows(store, c, windows);
  const auto b = score_windows(store, c, permuted);
  for (std::size_t i = 0; i < 5; ++i) CHECK(b[i] == a[perm[i]]);
}

TEST_CASE("score gradient with respect to the embedding matches finite differences") {
  const auto c = recurrent_config();
  const auto store = make_store(c, 9);
  const double err = verify::gradient_error(
      [&](std::span<const Var> v) {
        const BoundParams params(store, *v[0].tape(), false);
        return score(params, c, v[0]);
      },
      {random_tensor(3, 4, 10)}, 11);
  CHECK(err < 1e-5);

  const double full = verify::gradient_error(
      [&](std::span<const Var> v) {
        const BoundParams params(store, *v[0].tape(), false);
        return diff::sum(diff::square(score(params, c, embed(params, c, v[0]))));
      },
      {random_tensor(3, 6, 12)}, 13);
  CHECK(full < 1e-5);
}

TEST_CASE("perturbed score") {
  auto c = recurrent_config();
  const auto store = make_store(c, 14);
  const Tensor x = random_tensor(3, 4, 15);
  {
    Tape tape;
    const BoundParams params(store, tape, false);
    const Var e = tape.constant(x);
    const Var clean = score(params, c, e);
    const Var same = score_perturbed(params, c, e, tape.constant(Tensor(3, 4, 0.0)), 0.05);
    CHECK(same.value().bit_equal(clean.value()));
    const Var again = score_perturbed(params, c, e, tape.constant(Tensor(3, 4, 0.0)), 0.05);
    CHECK(again.value().bit_equal(same.value()));

    Tensor big(3, 4, 0.0);
    big(1, 2) = 0.05 + 1e-6;
    CHECK_THROWS_AS(score_perturbed(params, c, e, tape.constant(big), 0.05), ContractError);
    big(1, 2) = 0.05 + 1e-10;
    CHECK_NOTHROW(score_perturbed(params, c, e, tape.constant(big), 0.05));
  }

  // Linear head: the score shift is exactly <w, delta>.
  c.head_hidden = 0;
  const auto linear = make_store(c, 16);
  Tape tape;
  const BoundParams params(linear, tape, false);
  const Tensor delta = Tensor::from_rows({{0.01, -0.02, 0.0, 0.03}, {0, 0, 0, 0}, {0.02, 0.02, 0.02, 0.02}});
  const Var e = tape.constant(x);
  const Tensor clean = score(params, c, e).value();
  const Tensor adv = score_perturbed(params, c, e, tape.constant(delta), 0.05).value();
  const auto& w = linear.at("ranker.head.W_2");
  for (std::size_t i = 0; i < 3; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < 4; ++j) dot += w(j, 0) * delta(i, j);
    CHECK(adv(i, 0) - clean(i, 0) == doctest::Approx(dot).epsilon(1e-12).scale(1e-3));
  }
}

TEST_CASE("score batch and config validation") {
  ScoreBatch b{{1, 2}, std::nullopt, {1, 2}};
  CHECK_NOTHROW(b.validate());
  b.adv_scores = std::vector<double>{1};
  CHECK_THROWS_AS(b.validate(), UsageError);
  CHECK(parse_psi_kind("concat") == PsiKind::concat);
  CHECK(to_string(PsiKind::recurrent) == "recurrent");
  CHECK_THROWS_AS(parse_psi_kind("lstm"), UsageError);
  BackboneConfig bad = recurrent_config();
  bad.lookback = 0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}
