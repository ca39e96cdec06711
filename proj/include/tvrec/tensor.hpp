#pragma once

#include <complex>

#include <Eigen/Dense>

namespace tvrec {

/// Dense row-major real matrix; the storage type for every model tensor.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline bool all_finite(const Tensor2& t) { return t.allFinite(); }

} // namespace tvrec
