// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace infinet {

struct OpCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;
  bool pass = false;
  double seconds = 0.0;
};

const std::vector<std::string>& opcheck_names();

// Runs central-difference verification (64-bit, h = 1e-5) for one op or
// "all". Each trial redraws inputs from a derived seed. The composite
// "infinet_gdl" check drives the full dual-arm network with the GDL loss on
// an 8x8 input and sweeps inputs plus every parameter tensor.
std::vector<OpCheckResult> run_op_gradient_checks(const std::string& op, int trials, double tolerance);

std::string format_opcheck_report(const std::vector<OpCheckResult>& results);

bool opchecks_all_passed(const std::vector<OpCheckResult>& results);

}  // namespace infinet
