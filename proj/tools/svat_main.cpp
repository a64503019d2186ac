// svat: synthetic markets, training, backtesting, risk quantification and
// self-verification from one binary.

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"
#include "svat/errors.hpp"

namespace {

using svat::cli::RunConfig;

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_file;
  // Node-based so CLI11 can keep references into it.
  std::map<std::string, std::string> values;
};

void add_config_options(Subcommand& sub) {
  sub.app->add_option("--config", sub.config_file, "key=value file applied before the flags");
  for (const auto& key : svat::cli::config_keys()) {
    if (key.name == "force") continue;
    sub.app->add_option("--" + key.name, sub.values[key.name], key.help);
  }
  sub.app->add_flag("--force", "overwrite a non-empty output directory");
}

RunConfig resolve(const Subcommand& sub) {
  RunConfig config;
  if (!sub.config_file.empty()) svat::cli::apply_config_file(config, sub.config_file);
  std::vector<std::pair<std::string, std::string>> flags;
  for (const auto& [name, value] : sub.values) {
    if (sub.app->count("--" + name) > 0) flags.emplace_back(name, value);
  }
  if (sub.app->count("--force") > 0) flags.emplace_back("force", "true");
  svat::cli::apply_overrides(config, flags);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split variational adversarial training for stock ranking"};
  app.require_subcommand(1);

  std::map<std::string, Subcommand> subs;
  const std::pair<const char*, const char*> names[] = {
      {"synth", "write a synthetic regime market as per-stock CSV files"},
      {"train", "train a ranker (with the adversarial generator unless --lambda 0)"},
      {"backtest", "daily top-k backtest of a checkpoint or score file"},
      {"quantify", "ranking entropy of every test stock-day"},
      {"verify", "run the built-in verification suite"},
  };
  for (const auto& [name, help] : names) {
    Subcommand& sub = subs[name];
    sub.app = app.add_subcommand(name, help);
    add_config_options(sub);
  }
  bool corrupt_kl_sign = false;
  subs["verify"].app->add_flag("--corrupt-kl-sign", corrupt_kl_sign)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      const RunConfig config = resolve(sub);
      if (name == "synth") return svat::cli::cmd_synth(config, std::cout);
      if (name == "train") return svat::cli::cmd_train(config, std::cout);
      if (name == "backtest") return svat::cli::cmd_backtest(config, std::cout);
      if (name == "quantify") return svat::cli::cmd_quantify(config, std::cout);
      if (name == "verify") return svat::cli::cmd_verify(config, corrupt_kl_sign, std::cout);
    }
  } catch (const svat::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
