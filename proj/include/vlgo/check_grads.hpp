#pragma once

// Finite-difference and quadrature checks of every hand-written derivative.

#include <cstdint>
#include <string>
#include <vector>

namespace vlgo {

struct GradCheck {
  std::string name;
  /// Largest relative (or absolute, for closed-form checks) error observed.
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct CheckGradsConfig {
  std::uint64_t seed = 0;
  /// Random instances per check.
  int trials = 3;
  /// Test hook: added to the first entry of every analytic gradient.
  double perturb = 0.0;
};

[[nodiscard]] std::vector<GradCheck> run_gradient_checks(const CheckGradsConfig& cfg);

/// Fixed-width table: name, max error, tolerance, PASS/FAIL.
[[nodiscard]] std::string format_check_table(const std::vector<GradCheck>& checks);

}  // namespace vlgo
