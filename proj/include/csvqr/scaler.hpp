#pragma once

#include "csvqr/core.hpp"

namespace csvqr {

/// Per-column min/max fitted on training rows.
template <typename Scalar = double>
struct MinMaxScaler {
  Vector<Scalar> min;
  Vector<Scalar> max;

  Index columns() const noexcept { return min.size(); }
  bool operator==(const MinMaxScaler& o) const { return min == o.min && max == o.max; }
};

template <typename Derived>
MinMaxScaler<typename Derived::Scalar> fit_minmax_scaler(const Eigen::MatrixBase<Derived>& X) {
  if (X.rows() == 0 || X.cols() == 0) throw DimensionError("fit_minmax_scaler: empty matrix");
  if (!X.allFinite()) throw ValidationError("fit_minmax_scaler: non-finite value in training features");
  return {X.colwise().minCoeff().transpose(), X.colwise().maxCoeff().transpose()};
}

/// Maps each column onto [0,1] with the training range; values outside the
/// training range are clamped and constant columns map to 0.
template <typename Scalar, typename Derived>
Matrix<Scalar> apply_minmax(const MinMaxScaler<Scalar>& scaler, const Eigen::MatrixBase<Derived>& X) {
  if (X.rows() == 0) throw DimensionError("apply_minmax: empty matrix");
  if (X.cols() != scaler.columns())
    throw DimensionError("apply_minmax: scaler has " + std::to_string(scaler.columns()) + " columns, input has " +
                         std::to_string(X.cols()));
  Matrix<Scalar> out(X.rows(), X.cols());
  for (Index c = 0; c < X.cols(); ++c) {
    const Scalar span = scaler.max(c) - scaler.min(c);
    if (!(span > Scalar(0))) {
      out.col(c).setZero();
      continue;
    }
    out.col(c) = ((X.col(c).array() - scaler.min(c)) / span).cwiseMax(Scalar(0)).cwiseMin(Scalar(1)).matrix();
  }
  return out;
}

}  // namespace csvqr
