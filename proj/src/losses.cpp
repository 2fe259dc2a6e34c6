#include "expertad/losses.hpp"

#include <cmath>

#include "expertad/error.hpp"

namespace expertad {

double switch_loss(const LoadStats& stats) {
  require(stats.f.size() == stats.P.size() && stats.f.size() > 0, ErrorKind::shape,
          "switch_loss: f and P must be non-empty and equal length");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < stats.f.size(); ++i) acc += stats.f[i] * stats.P[i];
  return static_cast<double>(stats.f.size()) * acc;
}

LossBreakdown total_loss(double perception, double prediction, double planning, double switch_value,
                         const LossWeights& w) {
  LossBreakdown b{perception, prediction, planning, switch_value, 0.0};
  b.total = w.alpha1 * perception + w.alpha2 * prediction + w.alpha3 * planning + w.alpha4 * switch_value;
  return b;
}

double planning_loss(const std::vector<Point2>& predicted, const std::vector<Point2>& truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::shape,
          "planning_loss: trajectories must be non-empty and equal length");
  double acc = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    const double dx = predicted[s].x - truth[s].x, dy = predicted[s].y - truth[s].y;
    acc += dx * dx + dy * dy;
  }
  return acc / static_cast<double>(truth.size());
}

Vec prediction_target(const EgoState& next) {
  Vec t(4);
  t << next.x, next.y, next.yaw, next.v;
  return t;
}

double prediction_loss(const Vec& predicted, const EgoState& next) {
  require(predicted.size() == 4, ErrorKind::shape, "prediction_loss: expected (x, y, yaw, v)");
  return (predicted - prediction_target(next)).squaredNorm();
}

double perception_loss(const Mat& aligned, const Mat& clean, const std::vector<std::size_t>& planted) {
  require(aligned.rows() == clean.rows() && aligned.cols() == clean.cols(), ErrorKind::shape,
          "perception_loss: aligned and clean shapes differ");
  if (planted.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t c : planted) acc += (aligned.col(c) - clean.col(c)).squaredNorm();
  return acc / static_cast<double>(planted.size() * aligned.rows());
}

double coefficient_of_variation(const Vec& f) {
  require(f.size() > 0, ErrorKind::shape, "coefficient_of_variation: empty vector");
  const double mean = f.mean();
  if (mean == 0.0) return 0.0;
  const double var = (f.array() - mean).square().mean();
  return std::sqrt(var) / mean;
}

}  // namespace expertad
