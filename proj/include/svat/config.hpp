#pragma once

// Run configuration shared by every subcommand.
//
// Values come from three layers: built-in defaults, an optional flat
// key=value file (`--config`), then command-line flags. Keys are the flag
// names without the leading dashes (`latent-dim=16`); '_' and '-' are
// interchangeable and '#' starts a comment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svat/backtest.hpp"
#include "svat/market_data.hpp"
#include "svat/ranker.hpp"
#include "svat/risk_entropy.hpp"
#include "svat/trainer.hpp"
#include "svat/vpg.hpp"

namespace svat::cli {

struct RunConfig {
  std::filesystem::path data = "data";
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  bool force = false;

  // synth
  std::size_t stocks = 20;
  std::size_t days = 300;
  double signal = 0.25;

  // split: explicit dates win over fractions
  std::optional<market::Date> train_end;
  std::optional<market::Date> valid_end;
  double train_frac = 0.6;
  double valid_frac = 0.2;

  // training
  double alpha = 0.5;
  double lambda = 0.5;
  double epsilon = 0.05;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t lookback = 8;
  std::optional<std::size_t> pair_subsample;

  // backbone / generator
  ranker::PsiKind psi = ranker::PsiKind::recurrent;
  std::size_t hidden = 32;
  std::size_t head_hidden = 64;
  std::size_t latent_dim = 16;
  std::size_t vpg_hidden = 128;

  // evaluation
  std::size_t k = 5;
  double rf = 0.0;
  std::string strategy = "topk";  // topk | buyhold
  std::optional<std::pair<std::size_t, std::size_t>> sweep_k;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> scores;
  std::size_t samples = 50;

  train::TrainConfig train_config() const;
  ranker::BackboneConfig backbone_config() const;
  vpg::VpgConfig vpg_config() const;
  risk::EntropyConfig entropy_config() const;
  market::SplitSpec split(const market::StockPanel& panel) const;

  // Shortest round-trip decimal form.
  static std::string format_real(double v);
};

// One configurable key. `set` throws UsageError for malformed values.
struct ConfigKey {
  std::string name;  // flag name without dashes, e.g. "latent-dim"
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// nullptr when unknown. Matching ignores the '-' / '_' distinction.
const ConfigKey* find_key(const std::string& name);

// Applies a key=value file on top of `config`. Throws UsageError with
// file:line for unknown keys or bad values.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Applies (key, value) pairs, in order, on top of `config`.
void apply_overrides(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& overrides);

// Effective configuration in the file format (round-trips through
// apply_config_file).
std::string dump_config(const RunConfig& config);

// Field-level validation shared by every subcommand.
void validate(const RunConfig& config);

}  // namespace svat::cli
