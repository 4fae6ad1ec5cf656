#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "corrtrack/tensor.hpp"

namespace corrtrack {

struct GradCheckOptions {
  double eps = 1e-4;          // central-difference step
  double rel_floor = 1e-2;    // denominator floor for the relative error
  // Entries probed per parameter: 0 means all. Larger parameters are
  // subsampled with a deterministic stride so every region gets coverage.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t entries_checked = 0;

  bool ok(double tol) const { return max_rel_err < tol; }
  std::string describe() const;
};

/// Compares tape gradients of a scalar-valued forward function against
/// central finite differences over the given named parameters.
///
/// `forward` is re-run for every probe; it must be a pure function of the
/// parameter values (it may not depend on hidden mutable state or fresh
/// randomness). rel_err = |a - n| / max(|a|, |n|, rel_floor).
GradCheckResult check_gradients(
    const std::function<Tensor()>& forward,
    const std::vector<std::pair<std::string, Tensor>>& params,
    const GradCheckOptions& opts = {});

}  // namespace corrtrack
