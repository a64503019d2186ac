#pragma once

#include "svat/tape.hpp"

namespace svat {

// x W + b with b repeated over rows.
inline diff::Var dense(diff::Var x, diff::Var w, diff::Var b) {
  return diff::add_row(diff::matmul(x, w), b);
}

}  // namespace svat
