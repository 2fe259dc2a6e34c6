#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace expertad {

struct GradReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  bool passed = false;
  double step_size = 0.0;
  bool finite = true;
  std::string message;
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences against an analytic gradient. Relative error per
/// coordinate is |a - n| / max(1, |a|, |n|). A non-finite evaluation of `fn`
/// yields a failed report, never a pass.
GradReport check_gradient(const ScalarFn& fn, std::span<const double> point,
                          std::span<const double> analytic, double step, double tolerance);

/// Same check restricted to `coordinates` (indices into point/analytic).
GradReport check_gradient(const ScalarFn& fn, std::span<const double> point,
                          std::span<const double> analytic, double step, double tolerance,
                          std::span<const std::size_t> coordinates);

double relative_error(double analytic, double numeric);

}  // namespace expertad
