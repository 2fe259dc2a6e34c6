#include "expertad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "expertad/error.hpp"

namespace expertad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

GradReport check_gradient(const ScalarFn& fn, std::span<const double> point,
                          std::span<const double> analytic, double step, double tolerance) {
  std::vector<std::size_t> all(point.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return check_gradient(fn, point, analytic, step, tolerance, all);
}

GradReport check_gradient(const ScalarFn& fn, std::span<const double> point,
                          std::span<const double> analytic, double step, double tolerance,
                          std::span<const std::size_t> coordinates) {
  require(point.size() == analytic.size(), ErrorKind::shape,
          "check_gradient: point and analytic gradient differ in length");
  require(step > 0.0, ErrorKind::config, "check_gradient: step must be positive");

  GradReport report;
  report.step_size = step;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t idx : coordinates) {
    require(idx < x.size(), ErrorKind::shape, "check_gradient: coordinate out of range");
    const double orig = x[idx];
    x[idx] = orig + step;
    const double fp = fn(x);
    x[idx] = orig - step;
    const double fm = fn(x);
    x[idx] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      report.finite = false;
      report.passed = false;
      report.worst_coordinate = idx;
      report.max_relative_error = std::numeric_limits<double>::infinity();
      report.message = "non-finite function value at coordinate " + std::to_string(idx);
      return report;
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = relative_error(analytic[idx], numeric);
    // NaN analytic entries poison the report.
    if (err > report.max_relative_error || std::isnan(err)) {
      report.max_relative_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
      report.worst_coordinate = idx;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace expertad
