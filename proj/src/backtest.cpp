#include "svat/backtest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "svat/errors.hpp"

namespace svat::backtest {

namespace fs = std::filesystem;

void Strategy::validate(std::size_t stock_count) const {
  if (k < 1 || k > stock_count) {
    throw UsageError("strategy: k = " + std::to_string(k) + " must lie in [1, " +
                     std::to_string(stock_count) + "]");
  }
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) {
    throw UsageError("select_topk: k = " + std::to_string(k) + " outside [1, " +
                     std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  return order;
}

Summary summarize(std::span<const double> daily_irr, double r_f) {
  Summary s;
  if (daily_irr.empty()) return s;
  double worst = 0.0;
  for (double v : daily_irr) {
    s.irr_total += v;
    worst = std::min(worst, v);
  }
  s.mdd = 100.0 * std::abs(worst);

  const auto n = static_cast<double>(daily_irr.size());
  double mean = 0.0;
  for (double v : daily_irr) mean += v - r_f;
  mean /= n;
  double var = 0.0;
  for (double v : daily_irr) {
    const double d = (v - r_f) - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / n);
  if (sd > 0.0) s.sr = mean / sd;
  return s;
}

namespace {

void finish(BacktestReport& report) {
  const Summary s = summarize(report.daily_irr, report.r_f);
  report.irr_total = s.irr_total;
  report.sr = s.sr;
  report.mdd = s.mdd;
  if (!report.sr && !report.daily_irr.empty()) {
    report.warnings.push_back("excess returns have zero standard deviation; SR undefined");
  }
}

}  // namespace

BacktestReport run_backtest(const ScoreTable& scores, const market::StockPanel& panel,
                            const Strategy& strategy, double r_f) {
  const std::size_t n = panel.stock_count();
  strategy.validate(n);
  BacktestReport report;
  report.r_f = r_f;
  report.k = strategy.k;
  for (const auto& day : scores.days) {
    if (day.scores.size() != n) {
      throw AlignmentError("scores for decision day " + std::to_string(day.decision_day) +
                           " cover " + std::to_string(day.scores.size()) + " of " +
                           std::to_string(n) + " stocks");
    }
    const std::size_t t = day.decision_day + 1;
    if (t >= panel.day_count()) {
      throw AlignmentError("decision day " + std::to_string(day.decision_day) +
                           " has no following trading day");
    }
    auto picked = select_topk(day.scores, strategy.k);
    double irr = 0.0;
    for (std::size_t i : picked) irr += panel.ret(i, t);
    if (strategy.weighting == Weighting::mean) irr /= static_cast<double>(strategy.k);
    report.realized_days.push_back(t);
    report.daily_irr.push_back(irr);
    report.selections.push_back(std::move(picked));
  }
  finish(report);
  return report;
}

BacktestReport buy_and_hold(const market::StockPanel& panel, market::DayRange range, double r_f) {
  const std::size_t n = panel.stock_count();
  if (n == 0) throw UsageError("buy_and_hold: empty universe");
  BacktestReport report;
  report.r_f = r_f;
  report.k = n;
  const std::size_t begin = std::max<std::size_t>(range.begin, 1);
  const std::size_t end = std::min(range.end, panel.day_count());
  if (begin >= end) throw UsageError("buy_and_hold: empty range");
  std::vector<std::size_t> everyone(n);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  for (std::size_t t = begin; t < end; ++t) {
    double irr = 0.0;
    for (std::size_t i = 0; i < n; ++i) irr += panel.ret(i, t);
    report.realized_days.push_back(t);
    report.daily_irr.push_back(irr / static_cast<double>(n));
    report.selections.push_back(everyone);
  }
  finish(report);
  return report;
}

double pcc(const ScoreTable& a, const ScoreTable& b, std::vector<std::string>* warnings) {
  if (a.days.size() != b.days.size()) throw UsageError("pcc: score tables cover different days");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t d = 0; d < a.days.size(); ++d) {
    const auto& x = a.days[d];
    const auto& y = b.days[d];
    if (x.decision_day != y.decision_day || x.scores.size() != y.scores.size() ||
        x.scores.empty()) {
      throw UsageError("pcc: score tables disagree on day " + std::to_string(d));
    }
    const auto n = static_cast<double>(x.scores.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.scores.size(); ++i) {
      mx += x.scores[i];
      my += y.scores[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.scores.size(); ++i) {
      const double dx = x.scores[i] - mx;
      const double dy = y.scores[i] - my;
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
      if (warnings != nullptr) {
        warnings->push_back("pcc: zero variance on decision day " + std::to_string(x.decision_day) +
                            "; skipped");
      }
      continue;
    }
    total += std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    ++used;
  }
  if (used == 0) throw UsageError("pcc: no day with non-zero score variance");
  return total / static_cast<double>(used);
}

double tsd(std::span<const std::vector<std::size_t>> selections_a,
           std::span<const std::vector<std::size_t>> selections_b, std::size_t k) {
  if (selections_a.size() != selections_b.size() || selections_a.empty()) {
    throw UsageError("tsd: selections cover different (or no) days");
  }
  if (k == 0) throw UsageError("tsd: k must be >= 1");
  double total = 0.0;
  for (std::size_t d = 0; d < selections_a.size(); ++d) {
    const auto& sa = selections_a[d];
    const auto& sb = selections_b[d];
    if (sa.size() != k || sb.size() != k) throw UsageError("tsd: selection size differs from k");
    std::size_t missing = 0;
    for (std::size_t i : sa) {
      if (std::find(sb.begin(), sb.end(), i) == sb.end()) ++missing;
    }
    total += static_cast<double>(missing) / static_cast<double>(k);
  }
  return total / static_cast<double>(selections_a.size());
}

// --- files -----------------------------------------------------------------

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_score_csv(const fs::path& path, const ScoreTable& scores,
                     const market::StockPanel& panel) {
  auto out = open_out(path);
  out << "date,symbol,score\n";
  for (const auto& day : scores.days) {
    const std::string date = market::format_date(panel.calendar.at(day.decision_day));
    for (std::size_t i = 0; i < day.scores.size(); ++i) {
      out << date << ',' << panel.stock_ids.at(i) << ',' << shortest(day.scores[i]) << '\n';
    }
  }
}

ScoreTable read_score_csv(const fs::path& path, const market::StockPanel& panel) {
  std::ifstream in(path);
  const std::string file = path.string();
  if (!in) throw IngestionError(file, 0, "cannot open file");
  std::map<std::string, std::size_t> symbol_index;
  for (std::size_t i = 0; i < panel.stock_count(); ++i) symbol_index[panel.stock_ids[i]] = i;

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw IngestionError(file, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,symbol,score") throw IngestionError(file, 1, "expected header 'date,symbol,score'");

  std::map<std::size_t, std::vector<std::optional<double>>> by_day;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw IngestionError(file, line_no, "expected 3 fields");
    }
    const auto date = market::parse_date(std::string_view(line).substr(0, c1));
    if (!date) throw IngestionError(file, line_no, "bad date");
    const std::string symbol = line.substr(c1 + 1, c2 - c1 - 1);
    double value = 0.0;
    const char* first = line.data() + c2 + 1;
    const char* last = line.data() + line.size();
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) {
      throw IngestionError(file, line_no, "bad score");
    }
    const auto day = panel.day_index(*date);
    if (!day) throw AlignmentError(file + ":" + std::to_string(line_no) + ": date not in calendar");
    const auto it = symbol_index.find(symbol);
    if (it == symbol_index.end()) {
      throw AlignmentError(file + ":" + std::to_string(line_no) + ": unknown symbol " + symbol);
    }
    auto& slot = by_day[*day];
    slot.resize(panel.stock_count());
    slot[it->second] = value;
  }

  ScoreTable table;
  for (auto& [day, values] : by_day) {
    DailyScores ds;
    ds.decision_day = day;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!values[i]) {
        throw AlignmentError(file + ": no score for " + panel.stock_ids[i] + " on " +
                             market::format_date(panel.calendar[day]));
      }
      ds.scores.push_back(*values[i]);
    }
    table.days.push_back(std::move(ds));
  }
  return table;
}

std::string format_report(const BacktestReport& report) {
  std::ostringstream os;
  os << "irr_total: " << shortest(report.irr_total) << '\n';
  os << "sr: " << (report.sr ? shortest(*report.sr) : std::string("undefined")) << '\n';
  os << "mdd: " << shortest(report.mdd) << '\n';
  os << "n_days: " << report.n_days() << '\n';
  os << "k: " << report.k << '\n';
  os << "r_f: " << shortest(report.r_f) << '\n';
  return os.str();
}

void write_report(const fs::path& path, const BacktestReport& report) {
  auto out = open_out(path);
  out << format_report(report);
}

void write_daily_csv(const fs::path& path, const BacktestReport& report,
                     const market::StockPanel& panel) {
  auto out = open_out(path);
  out << "date,irr_t,selected_symbols\n";
  for (std::size_t d = 0; d < report.n_days(); ++d) {
    out << market::format_date(panel.calendar.at(report.realized_days[d])) << ','
        << shortest(report.daily_irr[d]) << ',';
    for (std::size_t s = 0; s < report.selections[d].size(); ++s) {
      if (s > 0) out << '|';
      out << panel.stock_ids.at(report.selections[d][s]);
    }
    out << '\n';
  }
}

}  // namespace svat::backtest
