#pragma once

// Test-time risk quantification.
//
// For every stock i on a day, M latent samples are drawn from the prior
// conditioned on i's clean embedding, decoded into perturbations and scored.
// Each perturbed score is ranked against the clean scores of the other
// stocks (one stock perturbed at a time), and the spread of the M ranks is
// summarized by the ranking entropy
//   H = -sum_l p(l) ln p(l),  p(l) = #{m : a^m = l} / M.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "svat/market_data.hpp"
#include "svat/trainer.hpp"

namespace svat::risk {

struct EntropyConfig {
  std::size_t samples = 50;  // M
  std::uint64_t seed = 0;

  // Throws UsageError for M == 0.
  void validate() const;
};

struct RankSample {
  std::size_t stock_index = 0;
  std::vector<int> ranks;  // a^1 .. a^M, each in [1, N]
};

enum class Execution { serial, parallel };

// 1 + #{j != i : clean[j] > probe}, where a tie with a lower-indexed j ranks
// j first. Throws UsageError when i is out of range.
std::size_t rank_against_clean(std::span<const double> clean, std::size_t i, double probe);

// Rank of stock i when only its embedding is moved by `delta` (1 x D).
std::size_t rank_under_perturbation(const market::DayBatch& batch, const train::Model& model,
                                    std::size_t i, const diff::Tensor& delta);

// Natural-log entropy of the empirical rank distribution.
double ranking_entropy(std::span<const int> ranks);
inline double ranking_entropy(const RankSample& sample) { return ranking_entropy(sample.ranks); }

struct StockRisk {
  std::size_t stock_index = 0;
  double entropy = 0.0;
  std::size_t clean_rank = 0;
  double realized_return = 0.0;  // r_{i, target day}
};

struct DayRisk {
  std::size_t target_day = 0;
  std::vector<StockRisk> stocks;
};

// Every (day, stock) pair draws its noise from its own stream, so the serial
// and parallel paths produce identical tables.
DayRisk quantify_day(const market::DayBatch& batch, const train::Model& model,
                     const EntropyConfig& config, Execution execution = Execution::parallel,
                     std::vector<RankSample>* samples = nullptr);

std::vector<DayRisk> quantify(const std::vector<market::DayBatch>& batches,
                              const train::Model& model, const EntropyConfig& config,
                              Execution execution = Execution::parallel);

// `date,symbol,entropy,clean_rank,realized_return`, date = target day.
void write_entropy_csv(const std::filesystem::path& path, const std::vector<DayRisk>& days,
                       const market::StockPanel& panel);

// Spearman rank correlation (average ranks for ties). Throws UsageError for
// fewer than two points; returns 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace svat::risk
