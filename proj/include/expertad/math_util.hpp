#pragma once

#include <cmath>

#include "expertad/tensor.hpp"

namespace expertad {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Row-wise max-shifted softmax, in place.
inline void softmax_rows(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = std::exp(m(r, c) - mx);
      sum += m(r, c);
    }
    m.row(r) /= sum;
  }
}

/// Softmax backward for row-stochastic `p`: dz = p * (dp - <p, dp>).
inline Mat softmax_rows_backward(const Mat& p, const Mat& dp) {
  Mat dz(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double inner = p.row(r).dot(dp.row(r));
    dz.row(r) = (p.row(r).array() * (dp.row(r).array() - inner)).matrix();
  }
  return dz;
}

}  // namespace expertad
