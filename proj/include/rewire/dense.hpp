#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace rewire {

/// Dense matrix/vector aliases, templated on scalar. Everything numeric in
/// this library runs on these; Eigen is the only math dependency.
template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrixd = DenseMatrix<double>;
using Vectord = DenseVector<double>;

// Elementwise activations as expression-friendly free functions.

template <typename Scalar>
Scalar relu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

template <typename Scalar>
Scalar leaky_relu(Scalar x, Scalar slope) {
  return x > Scalar(0) ? x : slope * x;
}

template <typename Scalar>
Scalar elu(Scalar x) {
  return x > Scalar(0) ? x : std::expm1(x);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    const Scalar z = std::exp(-x);
    return Scalar(1) / (Scalar(1) + z);
  }
  const Scalar z = std::exp(x);
  return z / (Scalar(1) + z);
}

/// Index of the largest entry in a row vector; ties resolve to the lowest
/// index. This is the documented prediction tie-break.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = j;
  }
  return best;
}

}  // namespace rewire
