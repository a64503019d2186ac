#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "svat/backtest.hpp"
#include "svat/errors.hpp"
#include "svat/verify.hpp"

using namespace svat;
using namespace svat::backtest;

namespace {

// Panel whose returns are set directly: returns[i][t].
market::StockPanel panel_from_returns(const std::vector<std::vector<double>>& returns) {
  market::StockPanel p;
  const std::size_t n = returns.size();
  const std::size_t days = returns.front().size();
  for (std::size_t i = 0; i < n; ++i) p.stock_ids.push_back("S" + std::to_string(i));
  std::chrono::sys_days d{market::Date{std::chrono::year{2022}, std::chrono::March, std::chrono::day{1}}};
  for (std::size_t t = 0; t < days; ++t) p.calendar.emplace_back(d + std::chrono::days{t});
  p.features.assign(n * days * market::kFeatureCount, 1.0);
  p.closes.assign(n * days, 1.0);
  p.returns.clear();
  for (const auto& row : returns) p.returns.insert(p.returns.end(), row.begin(), row.end());
  return p;
}

ScoreTable random_scores(std::size_t n, std::size_t first, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  ScoreTable t;
  for (std::size_t d = 0; d < count; ++d) {
    DailyScores s{first + d, std::vector<double>(n)};
    for (double& v : s.scores) v = g(rng);
    t.days.push_back(std::move(s));
  }
  return t;
}

market::StockPanel random_panel(std::size_t n, std::size_t days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.02);
  std::vector<std::vector<double>> r(n, std::vector<double>(days));
  for (auto& row : r) {
    row[0] = 0.0;
    for (std::size_t t = 1; t < days; ++t) row[t] = g(rng);
  }
  return panel_from_returns(r);
}

}  // namespace

TEST_CASE("top-k selection") {
  CHECK(select_topk(std::vector<double>{1.0, 1.0, 0.5}, 1) == std::vector<std::size_t>{0});
  CHECK(select_topk(std::vector<double>{0.1, 0.9, 0.5}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(select_topk(std::vector<double>{0.3, 0.1, 0.2}, 3) == std::vector<std::size_t>{0, 2, 1});
  CHECK_THROWS_AS(select_topk(std::vector<double>{1, 2}, 3), UsageError);
  CHECK_THROWS_AS(select_topk(std::vector<double>{1, 2}, 0), UsageError);

  std::mt19937_64 rng(1);
  std::vector<double> s(20), shifted(20);
  for (std::size_t i = 0; i < 20; ++i) s[i] = static_cast<double>(rng() % 5), shifted[i] = s[i] + 3.25;
  CHECK(select_topk(s, 7) == select_topk(shifted, 7));
}

TEST_CASE("metric examples") {
  // two selected stocks returning 0.01 and -0.02
  const auto p = panel_from_returns({{0, 0.01}, {0, -0.02}, {0, 0.5}});
  ScoreTable scores{{{0, {3.0, 2.0, 1.0}}}};
  const auto r = run_backtest(scores, p, {2, Weighting::sum}, 0.0);
  REQUIRE(r.daily_irr.size() == 1);
  CHECK(r.daily_irr[0] == doctest::Approx(-0.01).epsilon(1e-15));
  CHECK(r.realized_days == std::vector<std::size_t>{1});
  CHECK_FALSE(r.sr.has_value());
  CHECK_FALSE(r.warnings.empty());

  const double two[] = {0.01, 0.03};
  CHECK(*summarize(two, 0.0).sr == doctest::Approx(2.0).epsilon(1e-12));
  const double dd[] = {0.02, -0.05, 0.01};
  CHECK(summarize(dd, 0.0).mdd == doctest::Approx(5.0).epsilon(1e-12));
  const double up[] = {0.02, 0.0, 0.01};
  CHECK(summarize(up, 0.0).mdd == 0.0);
}

TEST_CASE("hand-computed fixture and worked examples") {
  for (const auto& c : verify::backtest_checks()) {
    INFO(c.name << " observed " << c.observed);
    CHECK(c.passed);
  }
}

TEST_CASE("irr total is the exact sum and is additive over ranges") {
  const auto panel = random_panel(6, 30, 2);
  const auto scores = random_scores(6, 0, 29, 3);
  const auto all = run_backtest(scores, panel, {2, Weighting::sum}, 0.0);
  double total = 0.0;
  for (double v : all.daily_irr) total += v;
  CHECK(all.irr_total == total);

  ScoreTable first, second;
  first.days.assign(scores.days.begin(), scores.days.begin() + 12);
  second.days.assign(scores.days.begin() + 12, scores.days.end());
  const auto a = run_backtest(first, panel, {2, Weighting::sum}, 0.0);
  const auto b = run_backtest(second, panel, {2, Weighting::sum}, 0.0);
  CHECK(a.irr_total + b.irr_total == doctest::Approx(all.irr_total).epsilon(1e-14));
}

TEST_CASE("buy and hold") {
  const auto sym = panel_from_returns({{0, 0.02}, {0, -0.02}});
  CHECK(buy_and_hold(sym, {1, 2}, 0.0).daily_irr[0] == 0.0);

  const auto panel = random_panel(5, 20, 4);
  const auto bh = buy_and_hold(panel, {5, 20}, 0.001);
  const auto k_all = run_backtest(random_scores(5, 4, 15, 5), panel, {5, Weighting::mean}, 0.001);
  REQUIRE(bh.daily_irr.size() == k_all.daily_irr.size());
  for (std::size_t t = 0; t < bh.daily_irr.size(); ++t) {
    CHECK(bh.daily_irr[t] == doctest::Approx(k_all.daily_irr[t]).epsilon(1e-14));
  }
  CHECK(bh.realized_days == k_all.realized_days);
}

TEST_CASE("alignment errors") {
  const auto panel = random_panel(4, 10, 6);
  ScoreTable last{{{9, {1, 2, 3, 4}}}};
  CHECK_THROWS_AS(run_backtest(last, panel, {2, Weighting::sum}, 0.0), AlignmentError);
  ScoreTable short_row{{{3, {1, 2, 3}}}};
  CHECK_THROWS_AS(run_backtest(short_row, panel, {2, Weighting::sum}, 0.0), AlignmentError);
  ScoreTable ok{{{3, {1, 2, 3, 4}}}};
  CHECK_THROWS_AS(run_backtest(ok, panel, {5, Weighting::sum}, 0.0), UsageError);
}

TEST_CASE("pcc and tsd") {
  const auto a = random_scores(8, 0, 10, 7);
  ScoreTable neg = a, affine = a;
  for (auto& d : neg.days)
    for (double& v : d.scores) v = -v;
  for (auto& d : affine.days)
    for (double& v : d.scores) v = 2.0 * v + 3.0;
  CHECK(pcc(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pcc(a, neg) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(pcc(a, affine) == doctest::Approx(1.0).epsilon(1e-14));
  const auto b = random_scores(8, 0, 10, 8);
  CHECK(pcc(a, b) == pcc(b, a));

  ScoreTable flat = b;
  for (double& v : flat.days[0].scores) v = 1.0;
  std::vector<std::string> warnings;
  CHECK_NOTHROW(pcc(a, flat, &warnings));
  CHECK(warnings.size() == 1);
  ScoreTable shorter = b;
  shorter.days.pop_back();
  CHECK_THROWS_AS(pcc(a, shorter), UsageError);

  using Sel = std::vector<std::vector<std::size_t>>;
  const Sel s1{{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}};
  const Sel s2{{0, 1, 2, 3, 9}, {5, 6, 7, 8, 0}};
  const Sel s3{{5, 6, 7, 8, 9}, {0, 1, 2, 3, 4}};
  CHECK(tsd(s1, s1, 5) == 0.0);
  CHECK(tsd(s1, s3, 5) == 1.0);
  CHECK(tsd(s1, s2, 5) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(tsd(s1, s2, 5) == tsd(s2, s1, 5));
  CHECK_THROWS_AS(tsd(s1, Sel{{0, 1, 2, 3, 4}}, 5), UsageError);
}

TEST_CASE("score csv round trip and report files") {
  const auto panel = random_panel(4, 12, 9);
  const auto scores = random_scores(4, 2, 8, 10);
  const auto dir = std::filesystem::temp_directory_path() / "svat_bt";
  std::filesystem::create_directories(dir);
  write_score_csv(dir / "scores.csv", scores, panel);
  const auto back = read_score_csv(dir / "scores.csv", panel);
  REQUIRE(back.days.size() == scores.days.size());
  for (std::size_t d = 0; d < back.days.size(); ++d) {
    CHECK(back.days[d].decision_day == scores.days[d].decision_day);
    CHECK(back.days[d].scores == scores.days[d].scores);
  }

  {
    std::ofstream out(dir / "bad.csv");
    out << "date,symbol,score\n2022-03-03,S0,1\n2022-03-03,NOPE,2\n";
  }
  CHECK_THROWS_AS(read_score_csv(dir / "bad.csv", panel), AlignmentError);
  {
    std::ofstream out(dir / "garbled.csv");
    out << "date,symbol,score\n2022-03-03,S0\n";
  }
  CHECK_THROWS_AS(read_score_csv(dir / "garbled.csv", panel), IngestionError);

  const auto report = run_backtest(scores, panel, {2, Weighting::sum}, 0.0);
  const std::string text = format_report(report);
  for (const char* key : {"irr_total:", "sr:", "mdd:", "n_days:", "k:", "r_f:"}) {
    CHECK(text.find(key) != std::string::npos);
  }
  write_daily_csv(dir / "daily.csv", report, panel);
  std::ifstream in(dir / "daily.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "date,irr_t,selected_symbols");
  CHECK(first.find('|') != std::string::npos);
}
