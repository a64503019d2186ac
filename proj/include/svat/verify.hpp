#pragma once

// Built-in verification suite behind `svat verify`.
//
// Every check reports its name, the tolerance it enforces and the observed
// value, so the output can be diffed and grepped.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svat/tape.hpp"

namespace svat::verify {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double observed = 0.0;
  bool passed = false;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  // Test-harness hook: negates every KL value seen by the KL checks.
  bool corrupt_kl_sign = false;
};

// Norm-wise relative error max_k |g_k - n_k| / max(|g_k|, |n_k|, 1e-8) between
// reverse-mode and central-difference gradients of sum(W * f(inputs)), with
// a fixed random W of f's output shape, taken over the inputs k.
double gradient_error(const std::function<diff::Var(std::span<const diff::Var>)>& f,
                      const std::vector<diff::Tensor>& inputs, std::uint64_t seed,
                      double step = 1e-6);

std::vector<CheckResult> primitive_gradient_checks(std::uint64_t seed);
// 3 stocks, T = 2, d = 2, D = 4, H = 2; delta_post and the noise held fixed.
CheckResult objective_gradient_check(std::uint64_t seed);
std::vector<CheckResult> norm_checks(std::uint64_t seed, std::size_t evaluations = 10000);
std::vector<CheckResult> kl_checks(std::uint64_t seed, bool corrupt_sign = false);
std::vector<CheckResult> entropy_checks(std::uint64_t seed);
std::vector<CheckResult> backtest_checks();
CheckResult split_sign_check(std::uint64_t seed);

std::vector<CheckResult> run_all(const VerifyOptions& options);

// `check=<name> status=PASS|FAIL tol=<t> observed=<v>` per line, then
// `summary passed=<p> failed=<f>`.
std::string format_results(const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace svat::verify
