#pragma once

#include <Eigen/Dense>

namespace expertad {

// Row-major so that rows are tokens and a token matrix maps onto
// channels-last storage without copies.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

}  // namespace expertad
