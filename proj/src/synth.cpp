#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "svat/errors.hpp"
#include "svat/market_data.hpp"

namespace svat::market {

namespace {

// Weekday calendar starting 2020-01-02.
std::vector<Date> business_days(std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  std::chrono::sys_days d{Date{std::chrono::year{2020}, std::chrono::January, std::chrono::day{2}}};
  while (out.size() < count) {
    const std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.emplace_back(d);
    d += std::chrono::days{1};
  }
  return out;
}

}  // namespace

StockPanel synth_market(std::uint64_t seed, std::size_t stocks, std::size_t days,
                        const RegimeSpec& spec) {
  if (stocks < 2 || days < 20) {
    throw UsageError("synth_market: need at least 2 stocks and 20 days (got " +
                     std::to_string(stocks) + ", " + std::to_string(days) + ")");
  }
  if (spec.vol_low < 0.0 || spec.vol_high < spec.vol_low || spec.persistence < 0.0 ||
      spec.persistence > 1.0 || spec.crash_probability < 0.0 || spec.crash_probability > 1.0) {
    throw UsageError("synth_market: invalid regime spec");
  }

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5EEDu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  StockPanel panel;
  panel.calendar = business_days(days);
  panel.features.assign(stocks * days * kFeatureCount, 0.0);
  panel.closes.assign(stocks * days, 0.0);

  for (std::size_t i = 0; i < stocks; ++i) {
    char sym[16];
    std::snprintf(sym, sizeof(sym), "S%03zu", i);
    panel.stock_ids.emplace_back(sym);

    const bool risky = i < spec.risky_stocks;
    double vol = spec.vol_low + (spec.vol_high - spec.vol_low) * unit(rng);
    if (risky) vol *= spec.risky_vol_multiplier;
    const double drift = spec.drift_sd * gauss(rng);
    const double base_volume = 1e6 * std::exp(0.5 * gauss(rng));

    // states[t] is the regime active on day t; one extra for the volume lead.
    std::vector<int> states(days + 1);
    states[0] = unit(rng) < 0.5 ? 1 : -1;
    for (std::size_t t = 1; t <= days; ++t) {
      states[t] = unit(rng) < spec.persistence ? states[t - 1] : -states[t - 1];
    }

    double close = 20.0 + 80.0 * unit(rng);
    for (std::size_t t = 0; t < days; ++t) {
      const double prev = close;
      if (t > 0) {
        double r = drift + spec.signal_strength * vol * states[t] + vol * gauss(rng);
        if (risky && states[t] < 0 && unit(rng) < spec.crash_probability) r -= spec.crash_size;
        r = std::max(r, -0.9);
        close = prev * (1.0 + r);
      }
      const double gap = vol * 0.25 * gauss(rng);
      const double open = prev * (1.0 + gap);
      const double hi = std::max(open, close) * (1.0 + vol * 0.5 * std::abs(gauss(rng)));
      const double lo = std::min(open, close) * (1.0 - vol * 0.5 * std::abs(gauss(rng)));
      const double volume = base_volume * std::exp(spec.volume_signal * states[t + 1] +
                                                   spec.volume_noise * gauss(rng));
      double* f = &panel.features[(i * days + t) * kFeatureCount];
      f[kOpen] = open;
      f[kHigh] = hi;
      f[kLow] = std::max(lo, 1e-6);
      f[kClose] = close;
      f[kVolume] = volume;
      panel.closes[i * days + t] = close;
    }
  }
  compute_returns(panel);
  return panel;
}

}  // namespace svat::market
