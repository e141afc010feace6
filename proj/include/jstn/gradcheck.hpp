#pragma once

#include "jstn/common.hpp"

#include <string>
#include <vector>

namespace jstn {

struct GradCheckResult {
  std::string loss_name;
  double max_rel_err = 0.0;
  bool pass = true;
};

// Names checked, in output order. "total" is the fully assembled objective.
const std::vector<std::string>& gradcheck_loss_names();

// Central finite differences (h = 1e-5) against backpropagated gradients for
// every loss term, over `num_seeds` independently drawn tiny scenarios.
// Teachers, source weights, pseudo-label acceptances and cluster memberships
// are frozen per scenario, matching what one optimisation step sees. The
// discriminator BCE is checked without the reversal layer; the GRL itself is
// not the gradient of any scalar and its sign contract is asserted
// algebraically in the test suite.
//
// rel_err = |fd - bp| / max(1, |fd|, |bp|).
//
// corrupt_op deliberately perturbs the named op's adjoint; the negative
// control for the harness itself.
std::vector<GradCheckResult> run_gradcheck(std::uint64_t base_seed,
                                           int num_seeds, double tol,
                                           const std::string& corrupt_op = "");

}  // namespace jstn
