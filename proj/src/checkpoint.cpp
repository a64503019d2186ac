#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "svat/errors.hpp"
#include "svat/trainer.hpp"

namespace svat::train {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'A', 'T', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.append(s);
  }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string file) : bytes_(std::move(bytes)), file_(std::move(file)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw UsageError(file_ + ": corrupt checkpoint: " + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated");
  }
  std::string bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string config_text(const Checkpoint& c) {
  const auto& t = c.config;
  const auto& b = c.model.backbone;
  const auto& g = c.model.vpg;
  const auto& a = c.adam.config;
  std::ostringstream os;
  os << "alpha=" << num(t.alpha) << '\n'
     << "lambda=" << num(t.lambda) << '\n'
     << "epsilon=" << num(t.epsilon) << '\n'
     << "lr=" << num(t.lr) << '\n'
     << "epochs=" << t.epochs << '\n'
     << "lookback=" << t.lookback << '\n'
     << "seed=" << t.seed << '\n'
     << "pair_subsample=" << (t.pair_subsample ? std::to_string(*t.pair_subsample) : "none") << '\n'
     << "svat=" << (t.svat ? 1 : 0) << '\n'
     << "k=" << t.k << '\n'
     << "rf=" << num(t.r_f) << '\n'
     << "shuffle=" << (t.shuffle ? 1 : 0) << '\n'
     << "psi=" << ranker::to_string(b.psi) << '\n'
     << "backbone_lookback=" << b.lookback << '\n'
     << "features=" << b.features << '\n'
     << "hidden=" << b.hidden << '\n'
     << "head_hidden=" << b.head_hidden << '\n'
     << "vpg_epsilon=" << num(g.epsilon) << '\n'
     << "latent_dim=" << g.latent_dim << '\n'
     << "encoder_hidden=" << g.encoder_hidden << '\n'
     << "prior_hidden=" << g.prior_hidden << '\n'
     << "decoder_hidden=" << g.decoder_hidden << '\n'
     << "adam_beta1=" << num(a.beta1) << '\n'
     << "adam_beta2=" << num(a.beta2) << '\n'
     << "adam_floor=" << num(a.numeric_floor) << '\n';
  return os.str();
}

class ConfigMap {
 public:
  ConfigMap(const std::string& text, const Reader& reader) : reader_(reader) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) reader_.fail("bad config line '" + line + "'");
      values_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) reader_.fail("missing config key " + key);
    return it->second;
  }
  double real(const std::string& key) const {
    const auto& s = text(key);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) reader_.fail("bad value for " + key);
    return v;
  }
  std::uint64_t count(const std::string& key) const {
    const auto& s = text(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) reader_.fail("bad value for " + key);
    return v;
  }

 private:
  std::map<std::string, std::string> values_;
  const Reader& reader_;
};

void put_tensor(Writer& w, const std::string& name, const diff::Tensor& t) {
  w.str(name);
  w.u64(t.rows());
  w.u64(t.cols());
  for (double v : t.values()) w.f64(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto& params = c.model.params;
  if (c.adam.first_moment.size() != params.size() || c.adam.second_moment.size() != params.size()) {
    throw UsageError("save_checkpoint: optimizer state does not match the parameters");
  }
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(Checkpoint::kFormatVersion);
  w.str(config_text(c));
  w.u64(c.epoch);
  w.u64(c.adam.step_count);
  w.str(c.noise_rng_state);
  w.str(c.shuffle_rng_state);
  w.str(c.pair_rng_state);
  w.u64(3 * params.size());
  for (std::size_t i = 0; i < params.size(); ++i) put_tensor(w, "param/" + params.name(i), params.at(i));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_tensor(w, "adam_m/" + params.name(i), c.adam.first_moment[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_tensor(w, "adam_v/" + params.name(i), c.adam.second_moment[i]);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw UsageError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) r.fail("bad magic");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kFormatVersion) {
    r.fail("unsupported format version " + std::to_string(version));
  }

  Checkpoint c;
  const ConfigMap cfg(r.str(), r);
  auto& t = c.config;
  t.alpha = cfg.real("alpha");
  t.lambda = cfg.real("lambda");
  t.epsilon = cfg.real("epsilon");
  t.lr = cfg.real("lr");
  t.epochs = cfg.count("epochs");
  t.lookback = cfg.count("lookback");
  t.seed = cfg.count("seed");
  if (cfg.text("pair_subsample") != "none") t.pair_subsample = cfg.count("pair_subsample");
  t.svat = cfg.count("svat") != 0;
  t.k = cfg.count("k");
  t.r_f = cfg.real("rf");
  t.shuffle = cfg.count("shuffle") != 0;
  auto& b = c.model.backbone;
  b.psi = ranker::parse_psi_kind(cfg.text("psi"));
  b.lookback = cfg.count("backbone_lookback");
  b.features = cfg.count("features");
  b.hidden = cfg.count("hidden");
  b.head_hidden = cfg.count("head_hidden");
  auto& g = c.model.vpg;
  g.epsilon = cfg.real("vpg_epsilon");
  g.latent_dim = cfg.count("latent_dim");
  g.encoder_hidden = cfg.count("encoder_hidden");
  g.prior_hidden = cfg.count("prior_hidden");
  g.decoder_hidden = cfg.count("decoder_hidden");
  c.adam.config.beta1 = cfg.real("adam_beta1");
  c.adam.config.beta2 = cfg.real("adam_beta2");
  c.adam.config.numeric_floor = cfg.real("adam_floor");

  c.epoch = r.u64();
  c.adam.step_count = r.u64();
  c.noise_rng_state = r.str();
  c.shuffle_rng_state = r.str();
  c.pair_rng_state = r.str();

  const std::uint64_t count = r.u64();
  if (count % 3 != 0) r.fail("tensor count is not a multiple of 3");
  const std::uint64_t n = count / 3;
  std::vector<std::pair<std::string, diff::Tensor>> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows != 0 && cols > (std::uint64_t{1} << 40) / rows) r.fail("tensor " + name + " too large");
    std::vector<double> values(rows * cols);
    for (double& v : values) v = r.f64();
    try {
      tensors.emplace_back(std::move(name), diff::Tensor(rows, cols, std::move(values)));
    } catch (const std::exception& e) {
      r.fail(e.what());
    }
  }
  if (!r.done()) r.fail("trailing bytes");

  for (std::uint64_t i = 0; i < n; ++i) {
    auto& [pname, pvalue] = tensors[i];
    if (pname.rfind("param/", 0) != 0) r.fail("expected a parameter, got " + pname);
    const std::string bare = pname.substr(6);
    const auto& m = tensors[n + i];
    const auto& v = tensors[2 * n + i];
    if (m.first != "adam_m/" + bare || v.first != "adam_v/" + bare) {
      r.fail("optimizer state out of order for " + bare);
    }
    if (!m.second.same_shape(pvalue) || !v.second.same_shape(pvalue)) {
      r.fail("optimizer state shape differs for " + bare);
    }
    c.model.params.add(bare, pvalue);
    c.adam.first_moment.push_back(m.second);
    c.adam.second_moment.push_back(v.second);
  }

  // The stored config must describe exactly these tensors.
  const Model expected = Model::initialize(c.model.backbone, c.model.vpg, 0);
  if (expected.params.size() != c.model.params.size()) r.fail("parameter count does not match the config");
  for (std::size_t i = 0; i < expected.params.size(); ++i) {
    if (expected.params.name(i) != c.model.params.name(i)) {
      r.fail("unexpected parameter " + c.model.params.name(i));
    }
    if (!expected.params.at(i).same_shape(c.model.params.at(i))) {
      r.fail("shape of " + c.model.params.name(i) + " does not match the config");
    }
  }
  return c;
}

}  // namespace svat::train
