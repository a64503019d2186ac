#pragma once

// Daily buy-hold-sell evaluation.
//
// Scores are attached to a decision day t-1: the k best-scored stocks are
// bought at that close and sold at the close of the next calendar day t, so
//   IRR^t = sum_{i in S^{t-1}} r_{i,t}            (sum, not mean: scales with k)
//   IRR   = sum_t IRR^t
//   SR    = mean(IRR^t - r_f) / std(IRR^t - r_f)  (population std, daily scale)
//   MDD   = 100 * |min(min_t IRR^t, 0)|           (percent)

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svat/market_data.hpp"

namespace svat::backtest {

enum class Weighting { sum, mean };

struct Strategy {
  std::size_t k = 5;
  Weighting weighting = Weighting::sum;

  // Throws UsageError unless 1 <= k <= stock_count.
  void validate(std::size_t stock_count) const;
};

// Indices of the k highest scores, best first; ties go to the lower index.
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k);

struct DailyScores {
  std::size_t decision_day = 0;  // calendar index of day t-1
  std::vector<double> scores;    // one per stock, panel order
};

// Scores for consecutive decision days, ascending.
struct ScoreTable {
  std::vector<DailyScores> days;
};

struct Summary {
  double irr_total = 0.0;
  std::optional<double> sr;  // nullopt when the excess returns have zero spread
  double mdd = 0.0;          // percent
};

Summary summarize(std::span<const double> daily_irr, double r_f);

struct BacktestReport {
  std::vector<std::size_t> realized_days;  // calendar index of each day t
  std::vector<double> daily_irr;
  std::vector<std::vector<std::size_t>> selections;  // S^{t-1}, best first
  double irr_total = 0.0;
  std::optional<double> sr;
  double mdd = 0.0;
  double r_f = 0.0;
  std::size_t k = 0;
  std::vector<std::string> warnings;

  std::size_t n_days() const noexcept { return daily_irr.size(); }
};

// Throws AlignmentError when a decision day has no following calendar day or
// a score vector does not cover the stock universe; UsageError for bad k.
BacktestReport run_backtest(const ScoreTable& scores, const market::StockPanel& panel,
                            const Strategy& strategy, double r_f);

// Equal-weighted hold of the whole universe over realized days in `range`.
BacktestReport buy_and_hold(const market::StockPanel& panel, market::DayRange range, double r_f);

// Mean over days of the cross-sectional Pearson correlation between two
// models' scores. Days where either side has zero variance are skipped and
// reported in `warnings` (if given). Throws UsageError when the tables do not
// cover the same days and universe, or every day was skipped.
double pcc(const ScoreTable& a, const ScoreTable& b, std::vector<std::string>* warnings = nullptr);

// Mean over days of |S_a \ S_b| / k. Throws UsageError for mismatched days.
double tsd(std::span<const std::vector<std::size_t>> selections_a,
           std::span<const std::vector<std::size_t>> selections_b, std::size_t k);

// --- files -----------------------------------------------------------------

// `date,symbol,score`, one row per stock-day, date = decision day.
void write_score_csv(const std::filesystem::path& path, const ScoreTable& scores,
                     const market::StockPanel& panel);
// Throws IngestionError on malformed rows, AlignmentError on unknown dates,
// unknown symbols or days that miss a stock.
ScoreTable read_score_csv(const std::filesystem::path& path, const market::StockPanel& panel);

// `key: value` lines: irr_total, sr, mdd, n_days, k, r_f.
std::string format_report(const BacktestReport& report);
void write_report(const std::filesystem::path& path, const BacktestReport& report);
// `date,irr_t,selected_symbols` with symbols joined by '|'.
void write_daily_csv(const std::filesystem::path& path, const BacktestReport& report,
                     const market::StockPanel& panel);

}  // namespace svat::backtest
