#include "svat/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "svat/errors.hpp"

namespace svat::market {

namespace fs = std::filesystem;

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return res.ec == std::errc() && res.ptr == text.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::optional<std::size_t> StockPanel::day_index(Date d) const {
  auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
  if (it == calendar.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - calendar.begin());
}

std::size_t StockPanel::lower_bound(Date d) const {
  return static_cast<std::size_t>(std::lower_bound(calendar.begin(), calendar.end(), d) -
                                  calendar.begin());
}

void compute_returns(StockPanel& panel) {
  const std::size_t days = panel.day_count();
  panel.returns.assign(panel.stock_count() * days, 0.0);
  for (std::size_t i = 0; i < panel.stock_count(); ++i) {
    for (std::size_t t = 1; t < days; ++t) {
      const double prev = panel.close(i, t - 1);
      panel.returns[i * days + t] = (panel.close(i, t) - prev) / prev;
    }
  }
}

void SplitSpec::validate(std::size_t day_count) const {
  if (train.empty() || valid.empty() || test.empty()) {
    throw UsageError("split: train, valid and test ranges must all be non-empty");
  }
  if (!(train.end <= valid.begin && valid.end <= test.begin)) {
    throw UsageError("split: ranges must be chronological and disjoint");
  }
  if (test.end > day_count) throw UsageError("split: test range exceeds the calendar");
}

SplitSpec split_by_dates(const StockPanel& panel, Date train_end, Date valid_end) {
  if (!(train_end < valid_end)) throw UsageError("split: train end must precede valid end");
  SplitSpec s;
  const std::size_t t_end =
      panel.lower_bound(Date{std::chrono::sys_days{train_end} + std::chrono::days{1}});
  const std::size_t v_end =
      panel.lower_bound(Date{std::chrono::sys_days{valid_end} + std::chrono::days{1}});
  s.train = {0, t_end};
  s.valid = {t_end, v_end};
  s.test = {v_end, panel.day_count()};
  s.validate(panel.day_count());
  return s;
}

SplitSpec split_by_fraction(std::size_t day_count, double train_fraction, double valid_fraction) {
  if (!(train_fraction > 0.0) || !(valid_fraction > 0.0) ||
      train_fraction + valid_fraction >= 1.0) {
    throw UsageError("split: fractions must be positive and sum to less than 1");
  }
  const auto n = static_cast<double>(day_count);
  const auto t_end = static_cast<std::size_t>(std::floor(n * train_fraction));
  const auto v_end = static_cast<std::size_t>(std::floor(n * (train_fraction + valid_fraction)));
  SplitSpec s{{0, t_end}, {t_end, v_end}, {v_end, day_count}};
  s.validate(day_count);
  return s;
}

// --- ingestion -------------------------------------------------------------

namespace {

struct Row {
  Date date;
  double values[kFeatureCount];
};

struct ParsedFile {
  std::string symbol;
  std::vector<Row> rows;
};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

ParsedFile parse_file(const fs::path& path) {
  std::ifstream in(path);
  const std::string file = path.string();
  if (!in) throw IngestionError(file, 0, "cannot open file");

  ParsedFile parsed;
  parsed.symbol = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw IngestionError(file, 1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != "date,open,high,low,close,volume") {
    throw IngestionError(file, 1, "expected header 'date,open,high,low,close,volume'");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != 1 + kFeatureCount) {
      throw IngestionError(file, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    }
    Row row{};
    const auto date = parse_date(fields[0]);
    if (!date) throw IngestionError(file, line_no, "bad date '" + std::string(fields[0]) + "'");
    row.date = *date;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const auto text = fields[f + 1];
      const auto res = std::from_chars(text.data(), text.data() + text.size(), row.values[f]);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size() ||
          !std::isfinite(row.values[f])) {
        throw IngestionError(file, line_no, "bad number '" + std::string(text) + "'");
      }
    }
    if (!(row.values[kClose] > 0.0)) {
      throw DataError(file + ":" + std::to_string(line_no) + ": non-positive close");
    }
    if (!parsed.rows.empty() && !(parsed.rows.back().date < row.date)) {
      throw IngestionError(file, line_no, "dates must be strictly ascending");
    }
    parsed.rows.push_back(row);
  }
  return parsed;
}

}  // namespace

IngestResult ingest_csv(std::span<const fs::path> paths, CalendarPolicy policy) {
  std::vector<ParsedFile> parsed(paths.size());
  std::vector<std::exception_ptr> errors(paths.size());
  const auto count = static_cast<std::int64_t>(paths.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < count; ++k) {
    try {
      parsed[k] = parse_file(paths[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  IngestResult result;
  std::vector<const ParsedFile*> usable;
  for (const auto& p : parsed) {
    if (p.rows.size() < 2) {
      result.warnings.push_back("dropping " + p.symbol + ": fewer than 2 trading days");
      continue;
    }
    usable.push_back(&p);
  }

  std::vector<Date> calendar;
  if (!usable.empty()) {
    if (policy == CalendarPolicy::drop_incomplete) {
      std::set<Date> all;
      for (const auto* p : usable) {
        for (const auto& r : p->rows) all.insert(r.date);
      }
      calendar.assign(all.begin(), all.end());
    } else {
      std::map<Date, std::size_t> seen;
      for (const auto* p : usable) {
        for (const auto& r : p->rows) ++seen[r.date];
      }
      for (const auto& [d, n] : seen) {
        if (n == usable.size()) calendar.push_back(d);
      }
    }
  }

  StockPanel& panel = result.panel;
  panel.calendar = calendar;
  const std::size_t days = calendar.size();
  for (const auto* p : usable) {
    std::vector<const Row*> aligned;
    aligned.reserve(days);
    std::size_t k = 0;
    for (const Date d : calendar) {
      while (k < p->rows.size() && p->rows[k].date < d) ++k;
      if (k < p->rows.size() && p->rows[k].date == d) aligned.push_back(&p->rows[k]);
    }
    if (aligned.size() != days) {
      result.warnings.push_back("dropping " + p->symbol + ": missing " +
                                std::to_string(days - aligned.size()) + " calendar day(s)");
      continue;
    }
    panel.stock_ids.push_back(p->symbol);
    for (const Row* r : aligned) {
      panel.features.insert(panel.features.end(), r->values, r->values + kFeatureCount);
      panel.closes.push_back(r->values[kClose]);
    }
  }
  if (days < 2 && !panel.stock_ids.empty()) {
    result.warnings.push_back("calendar has fewer than 2 days; no returns are defined");
  }
  compute_returns(panel);
  return result;
}

IngestResult ingest_directory(const fs::path& dir, CalendarPolicy policy) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  return ingest_csv(paths, policy);
}

void write_panel_csv(const StockPanel& panel, const fs::path& dir) {
  if (panel.normalized) throw UsageError("refusing to write a normalized panel as raw CSV");
  fs::create_directories(dir);
  char buf[64];
  for (std::size_t i = 0; i < panel.stock_count(); ++i) {
    std::ofstream out(dir / (panel.stock_ids[i] + ".csv"), std::ios::binary);
    if (!out) throw UsageError("cannot write " + (dir / (panel.stock_ids[i] + ".csv")).string());
    out << "date,open,high,low,close,volume\n";
    for (std::size_t t = 0; t < panel.day_count(); ++t) {
      out << format_date(panel.calendar[t]);
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        auto res = std::to_chars(buf, buf + sizeof(buf), panel.feature(i, t, f));
        out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
      }
      out << '\n';
    }
  }
}

// --- examples --------------------------------------------------------------

Example DayBatch::example(std::size_t stock) const {
  if (stock >= stock_count()) throw UsageError("example: stock index out of range");
  Example ex;
  ex.stock_index = stock;
  ex.target_day = target_day;
  auto row = windows.row_span(stock);
  ex.window = diff::Tensor(lookback, kFeatureCount, std::vector<double>(row.begin(), row.end()));
  ex.label = labels[stock];
  return ex;
}

BatchList build_examples(const StockPanel& panel, std::size_t lookback, DayRange range) {
  if (lookback == 0) throw UsageError("build_examples: lookback must be at least 1");
  BatchList out;
  const std::size_t n = panel.stock_count();
  const std::size_t end = std::min(range.end, panel.day_count());
  for (std::size_t t = std::max(range.begin, lookback); t < end; ++t) {
    DayBatch batch;
    batch.target_day = t;
    batch.lookback = lookback;
    batch.windows = diff::Tensor(n, lookback * kFeatureCount);
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = batch.windows.row_span(i);
      for (std::size_t s = 0; s < lookback; ++s) {
        const std::size_t day = t - lookback + s;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
          row[s * kFeatureCount + f] = panel.feature(i, day, f);
        }
      }
      batch.labels[i] = panel.ret(i, t);
    }
    out.batches.push_back(std::move(batch));
  }
  if (out.batches.empty()) {
    out.warnings.push_back("build_examples: no day in [" + std::to_string(range.begin) + ", " +
                           std::to_string(range.end) + ") has a full lookback of " +
                           std::to_string(lookback) + " days");
  }
  return out;
}

StockPanel normalize(const StockPanel& panel, DayRange train) {
  constexpr double kStdFloor = 1e-8;
  const std::size_t end = std::min(train.end, panel.day_count());
  if (train.begin >= end) throw UsageError("normalize: empty training range");
  StockPanel out = panel;
  out.normalized = true;
  const auto count = static_cast<double>(end - train.begin);
  for (std::size_t i = 0; i < panel.stock_count(); ++i) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      // Shifted accumulation keeps the mean exact for constant series.
      const double anchor = panel.feature(i, train.begin, f);
      double shift_sum = 0.0;
      for (std::size_t t = train.begin; t < end; ++t) shift_sum += panel.feature(i, t, f) - anchor;
      const double mean = anchor + shift_sum / count;
      double sq = 0.0;
      for (std::size_t t = train.begin; t < end; ++t) {
        const double d = panel.feature(i, t, f) - mean;
        sq += d * d;
      }
      const double sd = std::max(std::sqrt(sq / count), kStdFloor);
      for (std::size_t t = 0; t < panel.day_count(); ++t) {
        out.feature(i, t, f) = (panel.feature(i, t, f) - mean) / sd;
      }
    }
  }
  return out;
}

}  // namespace svat::market
