#pragma once

#include <vector>

#include "expertad/config.hpp"
#include "expertad/moe_router.hpp"
#include "expertad/scenario.hpp"

namespace expertad {

struct LossBreakdown {
  double perception = 0.0;
  double prediction = 0.0;
  double planning = 0.0;
  double switch_loss = 0.0;
  double total = 0.0;
};

/// N * sum_i f_i * P_i.
double switch_loss(const LoadStats& stats);

/// Weighted sum of the four parts; the breakdown keeps them unweighted.
LossBreakdown total_loss(double perception, double prediction, double planning, double switch_value,
                         const LossWeights& weights);

/// Mean over steps of the squared Euclidean distance.
double planning_loss(const std::vector<Point2>& predicted, const std::vector<Point2>& truth);

/// Sum of squared errors of (x, y, yaw, v) against the next ego state.
double prediction_loss(const Vec& predicted, const EgoState& next);
Vec prediction_target(const EgoState& next);

/// Mean squared error over the planted channels of a token matrix.
double perception_loss(const Mat& aligned, const Mat& clean, const std::vector<std::size_t>& planted);

/// Coefficient of variation (population std / mean) of a load vector.
double coefficient_of_variation(const Vec& f);

}  // namespace expertad
