#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ossem {

struct GradSuiteResult {
  int configs_run = 0;
  int configs_skipped = 0;  // landed too close to an L1 kink; re-seeded cases
  int params_checked = 0;
  double worst_rel_err = 0.0;
  std::string worst_where;
  bool pass = false;
};

// Finite-difference validation of the whole model gradient in double
// precision: random small configurations covering every mask placement, full
// forward (mask network + enhancer + L1 loss) per config, every parameter
// checked element-wise against central differences.
GradSuiteResult run_grad_suite(int n_configs, uint64_t seed, double h, double tol,
                               std::ostream* progress);

}  // namespace ossem
