#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace vitclust {

// Row-major so that a row is one point / one token, contiguous in memory.
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;
using VectorD = Eigen::VectorXd;

using Labels = std::vector<int>;

}  // namespace vitclust
