#pragma once

#include <cstddef>
#include <string_view>

#include "expertad/random_stream.hpp"
#include "expertad/tensor.hpp"

namespace expertad::test {

inline Mat random_mat(RandomStream rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = sd * rng.next_normal();
  }
  return m;
}

inline Vec random_vec(RandomStream rng, std::size_t n, double sd = 1.0) {
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = sd * rng.next_normal();
  return v;
}

inline double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace expertad::test
