#include "svat/verify.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "svat/backtest.hpp"
#include "svat/losses.hpp"
#include "svat/risk_entropy.hpp"
#include "svat/trainer.hpp"
#include "svat/vpg.hpp"

namespace svat::verify {

using diff::OpKind;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

Tensor uniform(std::size_t r, std::size_t c, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Uniform magnitude in [lo, hi] with a random sign.
Tensor away_from_zero(std::size_t r, std::size_t c, double lo, double hi, std::mt19937_64& rng) {
  Tensor t = uniform(r, c, lo, hi, rng);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.data()) {
    if (flip(rng)) v = -v;
  }
  return t;
}

CheckResult at_most(std::string name, double tol, double observed) {
  return {std::move(name), tol, observed, observed <= tol};
}

}  // namespace

double gradient_error(const std::function<Var(std::span<const Var>)>& f,
                      const std::vector<Tensor>& inputs, std::uint64_t seed, double step) {
  auto rng = train::make_stream(seed, 101);
  Tensor weights;
  auto project = [&](Tape& tape, std::span<const Var> vars) {
    const Var out = f(vars);
    if (weights.size() == 0) weights = uniform(out.rows(), out.cols(), -1.0, 1.0, rng);
    return diff::sum(diff::mul(out, tape.constant(weights)));
  };
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    return project(tape, vars).value().item();
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  const diff::Gradients grads = tape.backward(project(tape, vars));

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = grads[vars[k]];
    double diff2 = 0.0;
    double a2 = 0.0;
    double n2 = 0.0;
    for (std::size_t e = 0; e < inputs[k].size(); ++e) {
      const double x = inputs[k][e];
      probe[k][e] = x + step;
      const double up = eval(probe);
      probe[k][e] = x - step;
      const double down = eval(probe);
      probe[k][e] = x;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[e] - numeric) * (analytic[e] - numeric);
      a2 += analytic[e] * analytic[e];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

std::vector<CheckResult> primitive_gradient_checks(std::uint64_t seed) {
  auto rng = train::make_stream(seed, 102);
  struct Case {
    OpKind kind;
    std::vector<Tensor> inputs;
    double param = 1.0;
    std::size_t param2 = 0;
  };
  std::vector<Case> cases;
  auto sym = [&](std::size_t r, std::size_t c) { return uniform(r, c, -1.0, 1.0, rng); };
  auto pos = [&](std::size_t r, std::size_t c) { return uniform(r, c, 0.5, 2.0, rng); };
  cases.push_back({OpKind::matmul, {sym(3, 4), sym(4, 2)}});
  cases.push_back({OpKind::add, {sym(3, 4), sym(3, 4)}});
  cases.push_back({OpKind::sub, {sym(3, 4), sym(3, 4)}});
  cases.push_back({OpKind::mul, {sym(3, 4), sym(3, 4)}});
  cases.push_back({OpKind::div, {sym(3, 4), away_from_zero(3, 4, 0.5, 2.0, rng)}});
  cases.push_back({OpKind::concat, {sym(3, 2), sym(3, 3)}});
  cases.push_back({OpKind::add_row, {sym(3, 4), sym(1, 4)}});
  cases.push_back({OpKind::tanh, {sym(3, 4)}});
  cases.push_back({OpKind::sigmoid, {sym(3, 4)}});
  cases.push_back({OpKind::softplus, {sym(3, 4)}});
  cases.push_back({OpKind::square, {sym(3, 4)}});
  cases.push_back({OpKind::sum, {sym(3, 4)}});
  cases.push_back({OpKind::mean, {sym(3, 4)}});
  cases.push_back({OpKind::max0, {away_from_zero(3, 4, 0.1, 1.0, rng)}});
  cases.push_back({OpKind::l2_norm, {sym(3, 4)}});
  cases.push_back({OpKind::scale, {sym(3, 4)}, 1.7});
  cases.push_back({OpKind::exp, {sym(3, 4)}});
  cases.push_back({OpKind::log, {pos(3, 4)}});
  cases.push_back({OpKind::row_sum, {sym(3, 4)}});
  cases.push_back({OpKind::normalize_rows, {sym(3, 4)}, 0.3});
  cases.push_back({OpKind::pairwise_diff, {sym(4, 1)}});
  cases.push_back({OpKind::slice_cols, {sym(3, 5)}, 1.0, 3});

  std::vector<CheckResult> out;
  for (const auto& c : cases) {
    const double err = gradient_error(
        [&](std::span<const Var> v) { return diff::forward_primitive(c.kind, v, c.param, c.param2); },
        c.inputs, seed);
    out.push_back(at_most("grad." + std::string(diff::op_name(c.kind)), 1e-5, err));
  }
  return out;
}

CheckResult objective_gradient_check(std::uint64_t seed) {
  auto rng = train::make_stream(seed, 103);
  ranker::BackboneConfig backbone;
  backbone.psi = ranker::PsiKind::recurrent;
  backbone.lookback = 2;
  backbone.features = 2;
  backbone.hidden = 4;
  backbone.head_hidden = 3;
  vpg::VpgConfig gen;
  gen.epsilon = 0.05;
  gen.latent_dim = 2;
  gen.encoder_hidden = 3;
  gen.prior_hidden = 3;
  gen.decoder_hidden = 3;
  train::Model model = train::Model::initialize(backbone, gen, seed);

  market::DayBatch batch;
  batch.target_day = 2;
  batch.lookback = 2;
  batch.windows = uniform(3, 4, -1.0, 1.0, rng);
  std::normal_distribution<double> ret(0.0, 0.05);
  batch.labels = {ret(rng), ret(rng), ret(rng)};

  train::TrainConfig config;
  config.alpha = 0.5;
  config.lambda = 0.5;
  config.epsilon = gen.epsilon;
  const Tensor noise = vpg::standard_normal(3, gen.latent_dim, rng);

  Tensor delta_post;
  {
    Tape tape;
    const BoundParams params(model.params, tape);
    delta_post = train::build_objective(tape, params, model, batch, config, &noise).delta_post;
  }

  auto eval = [&](const ParameterStore& store) {
    Tape tape;
    const BoundParams params(store, tape, false);
    return train::build_objective(tape, params, model, batch, config, &noise, nullptr, &delta_post)
        .combined.value()
        .item();
  };
  Tape tape;
  const BoundParams params(model.params, tape);
  const auto obj =
      train::build_objective(tape, params, model, batch, config, &noise, nullptr, &delta_post);
  const ParamGrads grads = params.gradients(tape.backward(obj.combined));

  ParameterStore probe = model.params;
  const double step = 1e-6;
  double diff2 = 0.0;
  double a2 = 0.0;
  double n2 = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t e = 0; e < probe.at(p).size(); ++e) {
      const double x = model.params.at(p)[e];
      probe.at(p)[e] = x + step;
      const double up = eval(probe);
      probe.at(p)[e] = x - step;
      const double down = eval(probe);
      probe.at(p)[e] = x;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[p][e];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
  }
  const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
  return at_most("grad.objective", 1e-4, err);
}

std::vector<CheckResult> norm_checks(std::uint64_t seed, std::size_t evaluations) {
  std::vector<CheckResult> out;
  const std::size_t d = 8;
  const std::size_t rows = 100;
  for (double eps : {0.001, 0.01, 0.1}) {
    vpg::VpgConfig gen;
    gen.epsilon = eps;
    gen.latent_dim = 4;
    gen.encoder_hidden = gen.prior_hidden = gen.decoder_hidden = 16;
    ParameterStore store;
    auto rng = train::make_stream(seed, 104, static_cast<std::uint64_t>(eps * 1e6));
    vpg::init_parameters(store, gen, d, rng);

    double worst = 0.0;
    std::size_t zeros = 0;
    bool bad_zero = false;
    for (std::size_t done = 0; done < evaluations; done += rows) {
      const std::size_t n = std::min(rows, evaluations - done);
      // The last batch runs with a zeroed output layer to exercise the
      // zero-perturbation branch.
      ParameterStore use = store;
      if (done + rows >= evaluations) {
        use.at("vpg.gen.W_out") = Tensor(use.at("vpg.gen.W_out").rows(), d, 0.0);
        use.at("vpg.gen.b_out") = Tensor(1, d, 0.0);
      }
      Tape tape;
      const BoundParams params(use, tape, false);
      const Tensor z = diff::Tensor(vpg::standard_normal(n, gen.latent_dim, rng));
      const Tensor x = uniform(n, d, -3.0, 3.0, rng);
      const Tensor delta =
          vpg::decode_delta(params, gen, tape.constant(z), tape.constant(x)).value();
      for (std::size_t r = 0; r < n; ++r) {
        double sq = 0.0;
        for (double v : delta.row_span(r)) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
          ++zeros;
          continue;
        }
        worst = std::max(worst, std::abs(norm - eps));
        if (done + rows >= evaluations) bad_zero = true;
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "norm.eps=%g", eps);
    out.push_back(at_most(name, 1e-9, worst));
    std::snprintf(name, sizeof(name), "norm.zero_branch.eps=%g", eps);
    out.push_back({name, 0.0, bad_zero ? 1.0 : 0.0, !bad_zero && zeros > 0});
  }
  return out;
}

std::vector<CheckResult> kl_checks(std::uint64_t seed, bool corrupt_sign) {
  const double sign = corrupt_sign ? -1.0 : 1.0;
  auto kl = [&](const vpg::GaussianParams& q, const vpg::GaussianParams& p) {
    return sign * vpg::kl_divergence(q, p);
  };
  std::vector<CheckResult> out;

  const vpg::GaussianParams n11{Tensor::scalar(1.0), Tensor::scalar(1.0)};
  const vpg::GaussianParams n01{Tensor::scalar(0.0), Tensor::scalar(1.0)};
  const double closed = kl(n11, n01);
  out.push_back(at_most("kl.closed_form", 0.0, std::abs(closed - 0.5)));

  auto rng = train::make_stream(seed, 105);
  std::normal_distribution<double> mean(0.0, 2.0);
  std::uniform_real_distribution<double> spread(0.05, 3.0);
  auto draw = [&](std::size_t h) {
    vpg::GaussianParams g{Tensor(1, h), Tensor(1, h)};
    for (std::size_t i = 0; i < h; ++i) {
      g.mu(0, i) = mean(rng);
      g.sigma(0, i) = spread(rng);
    }
    return g;
  };

  double self_worst = 0.0;
  double min_kl = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10000; ++i) {
    const auto q = draw(4);
    const auto p = draw(4);
    self_worst = std::max(self_worst, std::abs(kl(q, q)));
    min_kl = std::min(min_kl, kl(q, p));
  }
  out.push_back(at_most("kl.self", 1e-12, self_worst));
  out.push_back({"kl.nonnegative", 0.0, min_kl, min_kl >= 0.0});

  // Tape-level rows agree with the value-level formula.
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto q = draw(3);
    const auto p = draw(3);
    Tape tape;
    const vpg::GaussianVars qv{tape.leaf(q.mu), tape.leaf(q.sigma)};
    const vpg::GaussianVars pv{tape.leaf(p.mu), tape.leaf(p.sigma)};
    const double row = sign * vpg::kl_divergence(qv, pv).value().item();
    worst = std::max(worst, std::abs(row - kl(q, p)) / std::max(1.0, std::abs(row)));
  }
  out.push_back(at_most("kl.tape_matches_value", 1e-12, worst));
  return out;
}

std::vector<CheckResult> entropy_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const std::vector<int> same(20, 4);
  out.push_back(at_most("entropy.identical", 0.0, risk::ranking_entropy(same)));

  const std::vector<int> distinct{1, 2, 3, 4, 5, 6, 7};
  out.push_back(
      at_most("entropy.distinct", 1e-12, std::abs(risk::ranking_entropy(distinct) - std::log(7.0))));

  const std::vector<int> fixture{3, 3, 7, 9};
  out.push_back(at_most("entropy.fixture", 1e-4, std::abs(risk::ranking_entropy(fixture) - 1.0397)));

  auto rng = train::make_stream(seed, 106);
  double worst = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < 1000; ++f) {
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
    const int n = std::uniform_int_distribution<int>(2, 30)(rng);
    std::uniform_int_distribution<int> rank(1, n);
    std::vector<int> ranks(m);
    for (int& r : ranks) r = rank(rng);
    const double h = risk::ranking_entropy(ranks);
    const double bound = std::log(static_cast<double>(std::min<std::size_t>(m, n)));
    worst = std::max({worst, h - bound, -h});
  }
  out.push_back(at_most("entropy.bounds", 1e-12, std::max(worst, 0.0)));

  const std::vector<double> clean{0.5, 0.2, 0.1};
  const auto rank = risk::rank_against_clean(clean, 1, 0.15);
  out.push_back({"rank.example", 0.0, static_cast<double>(rank), rank == 2});
  return out;
}

std::vector<CheckResult> backtest_checks() {
  std::vector<CheckResult> out;
  {
    market::StockPanel panel;
    panel.stock_ids = {"A", "B", "C", "D", "E"};
    for (int d = 0; d < 10; ++d) {
      panel.calendar.push_back(market::Date{std::chrono::year{2024}, std::chrono::month{1},
                                            std::chrono::day{static_cast<unsigned>(d + 1)}});
    }
    const double r[5][10] = {
        {0, 0.010, -0.020, 0.005, 0.030, -0.010, 0.000, 0.015, -0.005, 0.020},
        {0, -0.015, 0.025, 0.010, -0.020, 0.005, 0.012, -0.008, 0.018, -0.002},
        {0, 0.004, 0.006, -0.030, 0.011, 0.022, -0.017, 0.009, 0.001, -0.012},
        {0, 0.020, -0.005, 0.015, -0.010, -0.025, 0.030, -0.002, 0.007, 0.005},
        {0, -0.003, 0.012, -0.007, 0.004, 0.016, -0.009, 0.021, -0.014, 0.008},
    };
    for (const auto& row : r) panel.returns.insert(panel.returns.end(), row, row + 10);
    panel.closes.assign(50, 1.0);
    panel.features.assign(50 * market::kFeatureCount, 0.0);
    const double s[9][5] = {
        {0.3, 0.1, 0.5, 0.2, 0.4}, {0.9, 0.8, 0.1, 0.3, 0.2}, {0.2, 0.2, 0.6, 0.7, 0.1},
        {0.5, 0.4, 0.3, 0.2, 0.1}, {0.1, 0.6, 0.6, 0.0, 0.3}, {0.0, 0.0, 0.0, 0.0, 0.0},
        {0.7, 0.2, 0.9, 0.1, 0.8}, {0.3, 0.8, 0.2, 0.9, 0.4}, {0.6, 0.5, 0.4, 0.6, 0.9},
    };
    backtest::ScoreTable table;
    for (std::size_t d = 0; d < 9; ++d) table.days.push_back({d, {s[d], s[d] + 5}});
    const auto report = backtest::run_backtest(table, panel, {2, backtest::Weighting::sum}, 0.001);

    // Worked by hand (exact rational arithmetic).
    const double irr[9] = {0.001, 0.005, -0.015, 0.01, 0.027, 0.012, 0.03, 0.025, 0.028};
    double worst = 0.0;
    for (std::size_t d = 0; d < 9; ++d) worst = std::max(worst, std::abs(report.daily_irr[d] - irr[d]));
    out.push_back(at_most("backtest.fixture.daily_irr", 1e-12, worst));
    out.push_back(at_most("backtest.fixture.irr_total", 1e-12, std::abs(report.irr_total - 0.123)));
    out.push_back(at_most("backtest.fixture.sr", 1e-12,
                          report.sr ? std::abs(*report.sr - 0.8830048834463288) : 1.0));
    out.push_back(at_most("backtest.fixture.mdd", 1e-12, std::abs(report.mdd - 1.5)));
  }
  {
    const double picked[2] = {0.01, -0.02};
    const double irr = picked[0] + picked[1];
    out.push_back(at_most("backtest.example.irr_t", 1e-12, std::abs(irr + 0.01)));
    const double series[2] = {0.01, 0.03};
    const auto sr = backtest::summarize(series, 0.0).sr;
    out.push_back(at_most("backtest.example.sr", 1e-12, sr ? std::abs(*sr - 2.0) : 1.0));
    const double dd[3] = {0.02, -0.05, 0.01};
    out.push_back(at_most("backtest.example.mdd", 1e-12, std::abs(backtest::summarize(dd, 0.0).mdd - 5.0)));
    const double up[3] = {0.02, 0.0, 0.01};
    out.push_back(at_most("backtest.example.mdd_nonnegative", 0.0, backtest::summarize(up, 0.0).mdd));
  }
  return out;
}

CheckResult split_sign_check(std::uint64_t seed) {
  auto rng = train::make_stream(seed, 107);
  const std::size_t n = 6;
  std::normal_distribution<double> g(0.0, 0.03);
  std::vector<double> scores(n);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = g(rng);
    labels[i] = g(rng);
  }
  const auto terms = losses::adv_loss_terms_value(scores, labels, 0.5);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // Stock i's contribution alone, then with its return negated.
    std::vector<double> only(n, 0.0);
    only[i] = labels[i];
    const double before = losses::split_weighted_sum_value(terms, only);
    only[i] = -labels[i];
    const double after = losses::split_weighted_sum_value(terms, only);
    if (std::bit_cast<std::uint64_t>(after) != std::bit_cast<std::uint64_t>(-before)) ++mismatches;

    Tape tape;
    const Var t = tape.constant(Tensor::column(terms));
    only[i] = labels[i];
    const double tb = losses::split_weighted_sum(t, only).value().item();
    only[i] = -labels[i];
    const double ta = losses::split_weighted_sum(t, only).value().item();
    if (std::bit_cast<std::uint64_t>(ta) != std::bit_cast<std::uint64_t>(-tb)) ++mismatches;
  }
  return {"split.sign_flip", 0.0, static_cast<double>(mismatches), mismatches == 0};
}

std::vector<CheckResult> run_all(const VerifyOptions& options) {
  std::vector<CheckResult> all = primitive_gradient_checks(options.seed);
  all.push_back(objective_gradient_check(options.seed));
  for (auto& r : norm_checks(options.seed)) all.push_back(std::move(r));
  for (auto& r : kl_checks(options.seed, options.corrupt_kl_sign)) all.push_back(std::move(r));
  for (auto& r : entropy_checks(options.seed)) all.push_back(std::move(r));
  for (auto& r : backtest_checks()) all.push_back(std::move(r));
  all.push_back(split_sign_check(options.seed));
  return all;
}

std::string format_results(const std::vector<CheckResult>& results) {
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  std::ostringstream os;
  std::size_t passed = 0;
  for (const auto& r : results) {
    os << "check=" << r.name << " status=" << (r.passed ? "PASS" : "FAIL") << " tol=" << num(r.tolerance)
       << " observed=" << num(r.observed) << '\n';
    if (r.passed) ++passed;
  }
  os << "summary passed=" << passed << " failed=" << results.size() - passed << '\n';
  return os.str();
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace svat::verify
