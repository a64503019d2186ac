#include "svat/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "svat/errors.hpp"

namespace svat::cli {

namespace {

std::string normalized(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw UsageError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw UsageError(key + ": expected true/false, got '" + v + "'");
}

market::Date parse_day(const std::string& key, const std::string& v) {
  const auto d = market::parse_date(v);
  if (!d) throw UsageError(key + ": expected YYYY-MM-DD, got '" + v + "'");
  return *d;
}

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <class T>
ConfigKey real_key(std::string name, std::string help, T RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) { c.*field = parse_real(name, v); },
          [field](const RunConfig& c) { return num(c.*field); }};
}

template <class T>
ConfigKey count_key(std::string name, std::string help, T RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) {
            c.*field = static_cast<T>(parse_count(name, v));
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey path_key(std::string name, std::string help, std::filesystem::path RunConfig::*field) {
  return {name, std::move(help), [field](RunConfig& c, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return (c.*field).string(); }};
}

ConfigKey optional_path_key(std::string name, std::string help,
                            std::optional<std::filesystem::path> RunConfig::*field) {
  return {name, std::move(help),
          [field](RunConfig& c, const std::string& v) {
            if (v.empty() || v == "none") {
              (c.*field).reset();
            } else {
              c.*field = v;
            }
          },
          [field](const RunConfig& c) { return c.*field ? (c.*field)->string() : "none"; }};
}

ConfigKey date_key(std::string name, std::string help, std::optional<market::Date> RunConfig::*field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) {
            if (v.empty() || v == "none") {
              (c.*field).reset();
            } else {
              c.*field = parse_day(name, v);
            }
          },
          [field](const RunConfig& c) { return c.*field ? market::format_date(*(c.*field)) : "none"; }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back(path_key("data", "panel directory (per-stock CSV files)", &RunConfig::data));
  keys.push_back(path_key("out", "output directory", &RunConfig::out));
  keys.push_back(count_key("seed", "master RNG seed", &RunConfig::seed));
  keys.push_back({"force", "overwrite a non-empty output directory",
                  [](RunConfig& c, const std::string& v) { c.force = parse_bool("force", v); },
                  [](const RunConfig& c) { return std::string(c.force ? "true" : "false"); }});

  keys.push_back(count_key("stocks", "synth: number of stocks", &RunConfig::stocks));
  keys.push_back(count_key("days", "synth: number of trading days", &RunConfig::days));
  keys.push_back(real_key("signal", "synth: regime signal strength", &RunConfig::signal));

  keys.push_back(date_key("train-end", "last training date (YYYY-MM-DD)", &RunConfig::train_end));
  keys.push_back(date_key("valid-end", "last validation date (YYYY-MM-DD)", &RunConfig::valid_end));
  keys.push_back(real_key("train-frac", "training fraction when no dates are given", &RunConfig::train_frac));
  keys.push_back(real_key("valid-frac", "validation fraction when no dates are given", &RunConfig::valid_frac));

  keys.push_back(real_key("alpha", "pairwise ranking weight", &RunConfig::alpha));
  keys.push_back(real_key("lambda", "adversarial weight (0 disables the adversarial terms)", &RunConfig::lambda));
  keys.push_back(real_key("epsilon", "perturbation radius", &RunConfig::epsilon));
  keys.push_back(real_key("lr", "Adam learning rate", &RunConfig::lr));
  keys.push_back(count_key("epochs", "training epochs", &RunConfig::epochs));
  keys.push_back(count_key("lookback", "window length T", &RunConfig::lookback));
  keys.push_back({"pair-subsample", "cap on ranking pairs per stock (none = all)",
                  [](RunConfig& c, const std::string& v) {
                    if (v.empty() || v == "none") {
                      c.pair_subsample.reset();
                    } else {
                      c.pair_subsample = parse_count("pair-subsample", v);
                    }
                  },
                  [](const RunConfig& c) {
                    return c.pair_subsample ? std::to_string(*c.pair_subsample) : std::string("none");
                  }});

  keys.push_back({"psi", "embedding: recurrent | concat",
                  [](RunConfig& c, const std::string& v) { c.psi = ranker::parse_psi_kind(v); },
                  [](const RunConfig& c) { return ranker::to_string(c.psi); }});
  keys.push_back(count_key("hidden", "recurrent embedding width", &RunConfig::hidden));
  keys.push_back(count_key("head-hidden", "scoring head width (0 = linear)", &RunConfig::head_hidden));
  keys.push_back(count_key("latent-dim", "latent risk factors H", &RunConfig::latent_dim));
  keys.push_back(count_key("vpg-hidden", "generator network width", &RunConfig::vpg_hidden));

  keys.push_back(count_key("k", "portfolio size", &RunConfig::k));
  keys.push_back(real_key("rf", "daily risk-free rate", &RunConfig::rf));
  keys.push_back({"strategy", "topk | buyhold",
                  [](RunConfig& c, const std::string& v) {
                    if (v != "topk" && v != "buyhold") {
                      throw UsageError("strategy: expected topk or buyhold, got '" + v + "'");
                    }
                    c.strategy = v;
                  },
                  [](const RunConfig& c) { return c.strategy; }});
  keys.push_back({"sweep-k", "k range a:b, one report per k",
                  [](RunConfig& c, const std::string& v) {
                    if (v.empty() || v == "none") {
                      c.sweep_k.reset();
                      return;
                    }
                    const auto colon = v.find(':');
                    if (colon == std::string::npos) throw UsageError("sweep-k: expected a:b");
                    const auto a = parse_count("sweep-k", v.substr(0, colon));
                    const auto b = parse_count("sweep-k", v.substr(colon + 1));
                    if (a < 1 || b < a) throw UsageError("sweep-k: need 1 <= a <= b");
                    c.sweep_k = std::pair<std::size_t, std::size_t>(a, b);
                  },
                  [](const RunConfig& c) {
                    return c.sweep_k ? std::to_string(c.sweep_k->first) + ":" +
                                           std::to_string(c.sweep_k->second)
                                     : std::string("none");
                  }});
  keys.push_back(optional_path_key("checkpoint", "checkpoint file", &RunConfig::checkpoint));
  keys.push_back(optional_path_key("scores", "score file (date,symbol,score)", &RunConfig::scores));
  keys.push_back(count_key("samples", "Monte-Carlo samples per stock", &RunConfig::samples));
  return keys;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  const std::string wanted = normalized(name);
  for (const auto& key : config_keys()) {
    if (key.name == wanted) return &key;
  }
  return nullptr;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const ConfigKey* k = find_key(key);
    if (k == nullptr) throw UsageError(where + "unknown key '" + key + "'");
    try {
      k->set(config, trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
}

void apply_overrides(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& overrides) {
  for (const auto& [key, value] : overrides) {
    const ConfigKey* k = find_key(key);
    if (k == nullptr) throw UsageError("unknown option '" + key + "'");
    k->set(config, value);
  }
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& key : config_keys()) os << key.name << '=' << key.get(config) << '\n';
  return os.str();
}

void validate(const RunConfig& c) {
  c.train_config().validate();
  c.backbone_config().validate();
  c.vpg_config().validate();
  c.entropy_config().validate();
  if (c.stocks < 2) throw UsageError("stocks must be >= 2");
  if (c.days < 20) throw UsageError("days must be >= 20");
  if (!(c.train_frac > 0.0) || !(c.valid_frac >= 0.0) || c.train_frac + c.valid_frac >= 1.0) {
    throw UsageError("train-frac and valid-frac must be positive and sum to < 1");
  }
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.alpha = alpha;
  t.lambda = lambda;
  t.epsilon = epsilon;
  t.lr = lr;
  t.epochs = epochs;
  t.lookback = lookback;
  t.seed = seed;
  t.pair_subsample = pair_subsample;
  t.k = k;
  t.r_f = rf;
  // lambda = 0 is the plain backbone: the adversarial graph would contribute
  // nothing to the update.
  t.svat = lambda > 0.0;
  return t;
}

ranker::BackboneConfig RunConfig::backbone_config() const {
  ranker::BackboneConfig b;
  b.psi = psi;
  b.lookback = lookback;
  b.hidden = hidden;
  b.head_hidden = head_hidden;
  return b;
}

vpg::VpgConfig RunConfig::vpg_config() const {
  vpg::VpgConfig v;
  v.epsilon = epsilon;
  v.latent_dim = latent_dim;
  v.encoder_hidden = vpg_hidden;
  v.prior_hidden = vpg_hidden;
  v.decoder_hidden = vpg_hidden;
  return v;
}

std::string RunConfig::format_real(double v) { return num(v); }

risk::EntropyConfig RunConfig::entropy_config() const { return {samples, seed}; }

market::SplitSpec RunConfig::split(const market::StockPanel& panel) const {
  market::SplitSpec s;
  if (train_end || valid_end) {
    if (!train_end || !valid_end) throw UsageError("give both train-end and valid-end");
    if (*valid_end < *train_end) throw UsageError("valid-end precedes train-end");
    s = market::split_by_dates(panel, *train_end, *valid_end);
  } else {
    s = market::split_by_fraction(panel.day_count(), train_frac, valid_frac);
  }
  s.validate(panel.day_count());
  return s;
}

}  // namespace svat::cli
