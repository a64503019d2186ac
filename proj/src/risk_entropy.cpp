#include "svat/risk_entropy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>

#include "svat/errors.hpp"
#include "svat/kernels.hpp"

namespace svat::risk {

using diff::Tensor;
using diff::Var;

void EntropyConfig::validate() const {
  if (samples < 1) throw UsageError("entropy: samples must be >= 1");
}

std::size_t rank_against_clean(std::span<const double> clean, std::size_t i, double probe) {
  if (i >= clean.size()) {
    throw UsageError("rank: stock " + std::to_string(i) + " out of range for " +
                     std::to_string(clean.size()) + " stocks");
  }
  int rank = 0;
  kernels::serial::rank_against(clean, i, std::span<const double>(&probe, 1),
                                std::span<int>(&rank, 1));
  return static_cast<std::size_t>(rank);
}

namespace {

std::vector<double> score_embeddings(const train::Model& model, const Tensor& x) {
  diff::Tape tape;
  const BoundParams params(model.params, tape, false);
  return ranker::score(params, model.backbone, tape.constant(x)).value().values();
}

Tensor repeat_row(const Tensor& x, std::size_t row, std::size_t times) {
  Tensor out(times, x.cols());
  const auto src = x.row_span(row);
  for (std::size_t m = 0; m < times; ++m) {
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(m * x.cols()));
  }
  return out;
}

// M perturbed scores of stock i, drawn through the prior.
std::vector<double> perturbed_scores(const train::Model& model, const Tensor& x,
                                     const vpg::GaussianParams& prior, std::size_t i,
                                     std::size_t target_day, const EntropyConfig& config) {
  const std::size_t m = config.samples;
  const std::size_t h = model.vpg.latent_dim;
  auto rng = train::make_stream(config.seed, train::kEntropyStream, target_day, i);
  const Tensor noise = vpg::standard_normal(m, h, rng);
  Tensor z(m, h);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t c = 0; c < h; ++c) z(s, c) = prior.mu(i, c) + prior.sigma(i, c) * noise(s, c);
  }
  diff::Tape tape;
  const BoundParams params(model.params, tape, false);
  const Var xi = tape.constant(repeat_row(x, i, m));
  const Var delta = vpg::decode_delta(params, model.vpg, tape.constant(z), xi);
  return ranker::score_perturbed(params, model.backbone, xi, delta, model.vpg.epsilon)
      .value()
      .values();
}

}  // namespace

std::size_t rank_under_perturbation(const market::DayBatch& batch, const train::Model& model,
                                    std::size_t i, const Tensor& delta) {
  if (i >= batch.stock_count()) {
    throw UsageError("rank: stock " + std::to_string(i) + " out of range for " +
                     std::to_string(batch.stock_count()) + " stocks");
  }
  const Tensor x = ranker::embed_windows(model.params, model.backbone, batch.windows);
  if (delta.rows() != 1 || delta.cols() != x.cols()) {
    throw DimensionError("rank: delta must be 1 x " + std::to_string(x.cols()) + ", got " +
                         delta.shape_string());
  }
  const std::vector<double> clean = score_embeddings(model, x);
  Tensor moved = repeat_row(x, i, 1);
  for (std::size_t c = 0; c < x.cols(); ++c) moved(0, c) += delta(0, c);
  return rank_against_clean(clean, i, score_embeddings(model, moved).front());
}

double ranking_entropy(std::span<const int> ranks) {
  if (ranks.empty()) throw UsageError("ranking_entropy: no samples");
  std::map<int, std::size_t> counts;
  for (int r : ranks) ++counts[r];
  const auto m = static_cast<double>(ranks.size());
  double h = 0.0;
  for (const auto& [rank, count] : counts) {
    const double p = static_cast<double>(count) / m;
    h -= p * std::log(p);
  }
  // Rounding can leave -0 or a tiny negative for a single atom.
  return std::max(h, 0.0);
}

DayRisk quantify_day(const market::DayBatch& batch, const train::Model& model,
                     const EntropyConfig& config, Execution execution,
                     std::vector<RankSample>* samples) {
  config.validate();
  const std::size_t n = batch.stock_count();
  const Tensor x = ranker::embed_windows(model.params, model.backbone, batch.windows);
  const std::vector<double> clean = score_embeddings(model, x);

  vpg::GaussianParams prior;
  {
    diff::Tape tape;
    const BoundParams params(model.params, tape, false);
    prior = vpg::encode_prior(params, model.vpg, tape.constant(x)).values();
  }

  DayRisk day;
  day.target_day = batch.target_day;
  day.stocks.resize(n);
  std::vector<RankSample> drawn(n);
  std::vector<std::exception_ptr> errors(n);

  auto one = [&](std::size_t i) {
    try {
      const auto probes = perturbed_scores(model, x, prior, i, batch.target_day, config);
      RankSample& s = drawn[i];
      s.stock_index = i;
      s.ranks.assign(probes.size(), 0);
      kernels::serial::rank_against(clean, i, probes, s.ranks);
      day.stocks[i] = {i, ranking_entropy(s.ranks), rank_against_clean(clean, i, clean[i]),
                       batch.labels[i]};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (execution == Execution::parallel) {
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) one(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) one(i);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (samples != nullptr) *samples = std::move(drawn);
  return day;
}

std::vector<DayRisk> quantify(const std::vector<market::DayBatch>& batches,
                              const train::Model& model, const EntropyConfig& config,
                              Execution execution) {
  std::vector<DayRisk> days;
  days.reserve(batches.size());
  for (const auto& b : batches) days.push_back(quantify_day(b, model, config, execution));
  return days;
}

void write_entropy_csv(const std::filesystem::path& path, const std::vector<DayRisk>& days,
                       const market::StockPanel& panel) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  out << "date,symbol,entropy,clean_rank,realized_return\n";
  for (const auto& day : days) {
    const std::string date = market::format_date(panel.calendar.at(day.target_day));
    for (const auto& s : day.stocks) {
      out << date << ',' << panel.stock_ids.at(s.stock_index) << ',' << num(s.entropy) << ','
          << s.clean_rank << ',' << num(s.realized_return) << '\n';
    }
  }
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw UsageError("spearman: need two equal-length series of at least 2 points");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace svat::risk
