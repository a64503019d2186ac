#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svat/tensor.hpp"

namespace svat::market {

using Date = std::chrono::year_month_day;

// Parses YYYY-MM-DD; nullopt on anything else (including invalid days).
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

inline constexpr std::size_t kFeatureCount = 5;
enum Feature : std::size_t { kOpen = 0, kHigh = 1, kLow = 2, kClose = 3, kVolume = 4 };

// Aligned daily history of N stocks over one shared calendar.
//
// features holds N x days x 5 values (open, high, low, close, volume), either
// raw or z-scored (see `normalized`). closes and returns are always raw:
// returns[i][t] = (close[i][t] - close[i][t-1]) / close[i][t-1] for t >= 1,
// and returns[i][0] = 0 is a placeholder that is never used as a label.
struct StockPanel {
  std::vector<std::string> stock_ids;
  std::vector<Date> calendar;
  std::vector<double> features;
  std::vector<double> closes;
  std::vector<double> returns;
  bool normalized = false;

  std::size_t stock_count() const noexcept { return stock_ids.size(); }
  std::size_t day_count() const noexcept { return calendar.size(); }

  double feature(std::size_t stock, std::size_t day, std::size_t f) const {
    return features[(stock * day_count() + day) * kFeatureCount + f];
  }
  double& feature(std::size_t stock, std::size_t day, std::size_t f) {
    return features[(stock * day_count() + day) * kFeatureCount + f];
  }
  double close(std::size_t stock, std::size_t day) const { return closes[stock * day_count() + day]; }
  double ret(std::size_t stock, std::size_t day) const { return returns[stock * day_count() + day]; }

  // Index of `d` in the calendar, nullopt if it is not a trading day.
  std::optional<std::size_t> day_index(Date d) const;
  // First calendar index on or after `d` (day_count() if none).
  std::size_t lower_bound(Date d) const;
};

// Recompute returns from closes (used by constructors of panels).
void compute_returns(StockPanel& panel);

// Half-open range [begin, end) of calendar indices.
struct DayRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool empty() const noexcept { return end <= begin; }
  bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
};

// Disjoint contiguous chronological ranges: train < valid < test.
struct SplitSpec {
  DayRange train;
  DayRange valid;
  DayRange test;

  // Throws UsageError unless the ranges are non-empty, chronological,
  // disjoint and inside [0, day_count).
  void validate(std::size_t day_count) const;
};

// Split by calendar dates: train is [first day, train_end], valid is
// (train_end, valid_end], test is the rest.
SplitSpec split_by_dates(const StockPanel& panel, Date train_end, Date valid_end);
// Split by fractions of the calendar (train, valid; test gets the remainder).
SplitSpec split_by_fraction(std::size_t day_count, double train_fraction, double valid_fraction);

// --- ingestion -------------------------------------------------------------

enum class CalendarPolicy {
  // Calendar is the union of all dates; stocks missing any date are dropped.
  drop_incomplete,
  // Calendar is the intersection of all dates; every stock is kept.
  intersect,
};

struct IngestResult {
  StockPanel panel;
  std::vector<std::string> warnings;
};

// Reads per-stock CSV files (header `date,open,high,low,close,volume`). The
// symbol is the file stem. Files are parsed in parallel.
// Throws IngestionError for malformed rows, DataError for non-positive closes.
IngestResult ingest_csv(std::span<const std::filesystem::path> paths,
                        CalendarPolicy policy = CalendarPolicy::drop_incomplete);
// Every `*.csv` in `dir`, sorted by file name.
IngestResult ingest_directory(const std::filesystem::path& dir,
                              CalendarPolicy policy = CalendarPolicy::drop_incomplete);

// Writes `<dir>/<symbol>.csv` for every stock with shortest round-trip
// decimal formatting. Refuses normalized panels.
void write_panel_csv(const StockPanel& panel, const std::filesystem::path& dir);

// --- examples --------------------------------------------------------------

// One stock's input for one target day. The window covers days
// [target_day - T, target_day - 1]; label is the return on target_day.
struct Example {
  std::size_t stock_index = 0;
  std::size_t target_day = 0;
  diff::Tensor window;  // T x 5
  double label = 0.0;
};

// All N stocks on one target day. Row i of `windows` is stock i's T x 5
// window flattened row-major (oldest day first).
struct DayBatch {
  std::size_t target_day = 0;
  std::size_t lookback = 0;
  diff::Tensor windows;        // N x (T * 5)
  std::vector<double> labels;  // r_{i, target_day}

  std::size_t stock_count() const noexcept { return labels.size(); }
  Example example(std::size_t stock) const;
};

struct BatchList {
  std::vector<DayBatch> batches;
  std::vector<std::string> warnings;
};

// One batch per day t in `range` whose lookback window [t - T, t - 1] lies
// inside the calendar. Days without full history are skipped; an empty
// result carries a warning. Throws UsageError for T == 0.
BatchList build_examples(const StockPanel& panel, std::size_t lookback, DayRange range);

// Per-stock z-score of all five features using the mean and population std
// of `train` days (std floored at 1e-8). Closes and returns are untouched.
StockPanel normalize(const StockPanel& panel, DayRange train);

// --- synthetic markets -----------------------------------------------------

// Hidden-state market used for desk-scale experiments.
//
// Each stock carries a persistent two-state regime a_{i,t} in {+1, -1}
// (a Markov chain that keeps its state with probability `persistence`).
// Returns are
//   r_{i,t} = drift_i + signal_strength * vol_i * a_{i,t} + vol_i * noise
// plus, for the first `risky_stocks` stocks while a_{i,t} = -1, a crash of
// size `crash_size` with probability `crash_probability`. Volume on day t
// loads on the next day's state with coefficient `volume_signal`, so it is
// informative about r_{i,t+1} exactly when signal_strength > 0. Risky stocks
// carry `risky_vol_multiplier` times the base volatility.
struct RegimeSpec {
  double signal_strength = 0.25;
  double persistence = 0.9;
  double drift_sd = 0.0005;
  double vol_low = 0.01;
  double vol_high = 0.03;
  double volume_signal = 0.5;
  double volume_noise = 0.5;
  std::size_t risky_stocks = 0;
  double risky_vol_multiplier = 1.0;
  double crash_probability = 0.0;
  double crash_size = 0.0;
};

// Deterministic in `seed`. Throws UsageError for stocks < 2, days < 20.
StockPanel synth_market(std::uint64_t seed, std::size_t stocks, std::size_t days,
                        const RegimeSpec& spec = {});

}  // namespace svat::market
