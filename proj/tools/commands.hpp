#pragma once

#include <iosfwd>

#include "svat/config.hpp"

namespace svat::cli {

// Each returns the process exit code. Errors propagate as exceptions.
int cmd_synth(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_backtest(const RunConfig& config, std::ostream& log);
int cmd_quantify(const RunConfig& config, std::ostream& log);
int cmd_verify(const RunConfig& config, bool corrupt_kl_sign, std::ostream& log);

}  // namespace svat::cli
