#pragma once

#include <Eigen/Core>

namespace hindicap {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVectorX = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ArrayRow = Eigen::Array<T, 1, Eigen::Dynamic>;

using MatrixXf = MatrixX<float>;
using VectorXf = VectorX<float>;
using MatrixXd = MatrixX<double>;
using VectorXd = VectorX<double>;

// Token matrix: one column per sample, one row per position.
using TokenMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

} // namespace hindicap
