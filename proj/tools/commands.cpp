#include "commands.hpp"

#include <fstream>
#include <ostream>

#include "svat/errors.hpp"
#include "svat/verify.hpp"

namespace svat::cli {

namespace fs = std::filesystem;

namespace {

void prepare_out(const RunConfig& c) {
  if (fs::exists(c.out) && !fs::is_directory(c.out)) {
    throw UsageError(c.out.string() + " exists and is not a directory");
  }
  fs::create_directories(c.out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& log) {
  for (const auto& w : warnings) log << "warning: " << w << '\n';
}

market::StockPanel load_panel(const RunConfig& c, std::ostream& log) {
  auto ingest = market::ingest_directory(c.data);
  print_warnings(ingest.warnings, log);
  return std::move(ingest.panel);
}

train::Checkpoint require_checkpoint(const RunConfig& c) {
  if (!c.checkpoint) throw UsageError("--checkpoint is required");
  if (!fs::exists(*c.checkpoint)) {
    throw UsageError("checkpoint " + c.checkpoint->string() + " does not exist");
  }
  return train::load_checkpoint(*c.checkpoint);
}

// Test-split batches of the normalized panel, for the checkpoint's lookback.
std::vector<market::DayBatch> test_batches(const market::StockPanel& normalized,
                                           const market::SplitSpec& split, std::size_t lookback,
                                           std::ostream& log) {
  auto list = market::build_examples(normalized, lookback, split.test);
  print_warnings(list.warnings, log);
  if (list.batches.empty()) throw UsageError("the test split has no complete lookback window");
  return std::move(list.batches);
}

void emit_report(const fs::path& dir, const std::string& suffix,
                 const backtest::BacktestReport& report, const market::StockPanel& panel,
                 std::ostream& log) {
  print_warnings(report.warnings, log);
  backtest::write_report(dir / ("report" + suffix + ".txt"), report);
  backtest::write_daily_csv(dir / ("daily" + suffix + ".csv"), report, panel);
  log << format_report(report);
}

}  // namespace

int cmd_synth(const RunConfig& c, std::ostream& log) {
  if (c.stocks < 2) throw UsageError("--stocks must be >= 2");
  if (c.days < 20) throw UsageError("--days must be >= 20");
  if (fs::exists(c.out) && fs::is_directory(c.out) && !fs::is_empty(c.out) && !c.force) {
    throw UsageError(c.out.string() + " is not empty; pass --force to overwrite");
  }
  market::RegimeSpec spec;
  spec.signal_strength = c.signal;
  const auto panel = market::synth_market(c.seed, c.stocks, c.days, spec);
  if (c.force && fs::exists(c.out)) {
    for (const auto& entry : fs::directory_iterator(c.out)) {
      if (entry.path().extension() == ".csv") fs::remove(entry.path());
    }
  }
  prepare_out(c);
  market::write_panel_csv(panel, c.out);
  std::string manifest;
  manifest += "generator=regime\n";
  manifest += "seed=" + std::to_string(c.seed) + "\n";
  manifest += "stocks=" + std::to_string(panel.stock_count()) + "\n";
  manifest += "days=" + std::to_string(panel.day_count()) + "\n";
  manifest += "signal=" + RunConfig::format_real(c.signal) + "\n";
  manifest += "first_date=" + market::format_date(panel.calendar.front()) + "\n";
  manifest += "last_date=" + market::format_date(panel.calendar.back()) + "\n";
  write_text(c.out / "manifest.txt", manifest);
  log << "wrote " << panel.stock_count() << " stocks x " << panel.day_count() << " days to "
      << c.out.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& log) {
  validate(c);
  const auto raw = load_panel(c, log);
  const auto split = c.split(raw);
  const auto panel = market::normalize(raw, split.train);
  prepare_out(c);
  write_text(c.out / "run_config.txt", dump_config(c));

  const auto result =
      train::train(panel, split, c.train_config(), c.backbone_config(), c.vpg_config());
  print_warnings(result.warnings, log);
  train::save_checkpoint(c.out / "checkpoint_best.svat", result.best);
  train::save_checkpoint(c.out / "checkpoint_final.svat", result.final);
  train::write_epoch_log(c.out / "epoch_log.csv", result.log);
  const auto& last = result.log.back();
  log << "epochs=" << result.log.size() << " best_epoch=" << result.best.epoch
      << " final_L_com=" << RunConfig::format_real(last.combined) << '\n';
  return 0;
}

int cmd_backtest(const RunConfig& c, std::ostream& log) {
  validate(c);
  const auto raw = load_panel(c, log);
  const auto split = c.split(raw);
  prepare_out(c);

  if (c.strategy == "buyhold") {
    if (c.checkpoint) log << "note: --strategy buyhold ignores the checkpoint\n";
    emit_report(c.out, "_buyhold", backtest::buy_and_hold(raw, split.test, c.rf), raw, log);
    return 0;
  }

  backtest::ScoreTable scores;
  if (c.scores) {
    scores = backtest::read_score_csv(*c.scores, raw);
  } else {
    const auto checkpoint = require_checkpoint(c);
    const auto panel = market::normalize(raw, split.train);
    const auto batches = test_batches(panel, split, checkpoint.model.backbone.lookback, log);
    scores = train::score_batches(checkpoint.model, batches);
    backtest::write_score_csv(c.out / "scores.csv", scores, raw);
  }

  std::size_t lo = c.k;
  std::size_t hi = c.k;
  if (c.sweep_k) std::tie(lo, hi) = *c.sweep_k;
  for (std::size_t k = lo; k <= hi; ++k) {
    const auto report = backtest::run_backtest(scores, raw, {k, backtest::Weighting::sum}, c.rf);
    emit_report(c.out, c.sweep_k ? "_k" + std::to_string(k) : std::string(), report, raw, log);
  }
  return 0;
}

int cmd_quantify(const RunConfig& c, std::ostream& log) {
  validate(c);
  const auto checkpoint = require_checkpoint(c);
  const auto raw = load_panel(c, log);
  const auto split = c.split(raw);
  const auto panel = market::normalize(raw, split.train);
  const auto batches = test_batches(panel, split, checkpoint.model.backbone.lookback, log);
  const auto days = risk::quantify(batches, checkpoint.model, c.entropy_config());
  prepare_out(c);
  risk::write_entropy_csv(c.out / "entropy.csv", days, raw);

  std::vector<double> h;
  std::vector<double> r;
  for (const auto& day : days) {
    for (const auto& s : day.stocks) {
      h.push_back(s.entropy);
      r.push_back(s.realized_return);
    }
  }
  log << "rows=" << h.size() << " spearman(entropy, realized_return)="
      << RunConfig::format_real(risk::spearman(h, r)) << '\n';
  return 0;
}

int cmd_verify(const RunConfig& c, bool corrupt_kl_sign, std::ostream& log) {
  const auto results = verify::run_all({c.seed, corrupt_kl_sign});
  log << verify::format_results(results);
  return verify::all_passed(results) ? 0 : 1;
}

}  // namespace svat::cli
