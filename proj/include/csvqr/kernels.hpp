#pragma once

#include "csvqr/core.hpp"

#include <cmath>
#include <string>

namespace csvqr {

enum class KernelKind { Rbf, Linear };

template <typename Scalar = double>
struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  Scalar sigma = Scalar(1);

  static KernelSpec rbf(Scalar sigma) { return {KernelKind::Rbf, sigma}; }
  static KernelSpec linear() { return {KernelKind::Linear, Scalar(1)}; }

  void validate() const {
    if (kind == KernelKind::Rbf && !(sigma > Scalar(0) && std::isfinite(double(sigma))))
      throw ValidationError("kernel: RBF bandwidth must be positive and finite");
  }

  bool operator==(const KernelSpec&) const = default;
};

inline std::string to_string(KernelKind kind) {
  return kind == KernelKind::Rbf ? "rbf" : "linear";
}

inline KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "rbf") return KernelKind::Rbf;
  if (name == "linear") return KernelKind::Linear;
  throw ValidationError("kernel: unknown kind '" + name + "'");
}

/// K(x, x') = exp(-|x - x'|^2 / (2 sigma^2)) for RBF, x . x' for Linear.
template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar kernel(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedA>& x,
              const Eigen::MatrixBase<DerivedB>& xp) {
  if (x.size() != xp.size())
    throw DimensionError("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(xp.size()) + ")");
  if (spec.kind == KernelKind::Linear)
    return x.reshaped().dot(xp.reshaped());
  const Scalar d2 = (x.reshaped() - xp.reshaped()).squaredNorm();
  return std::exp(-d2 / (Scalar(2) * spec.sigma * spec.sigma));
}

/// Dense n x n Gram matrix over the rows of X. Only the upper triangle is
/// evaluated and mirrored, so the result is exactly symmetric.
template <typename Scalar, typename Derived>
Matrix<Scalar> gram(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& X) {
  spec.validate();
  const Index n = X.rows();
  if (n == 0) throw DimensionError("gram: empty matrix");
  Matrix<Scalar> G(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      const Scalar k = kernel(spec, X.row(i), X.row(j));
      G(i, j) = k;
      G(j, i) = k;
    }
  }
  return G;
}

/// m x n matrix with entry (q, i) = K(query_q, train_i).
template <typename Scalar, typename DerivedT, typename DerivedQ>
Matrix<Scalar> gram_cross(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedT>& X_train,
                          const Eigen::MatrixBase<DerivedQ>& X_query) {
  spec.validate();
  if (X_train.rows() == 0 || X_query.rows() == 0) throw DimensionError("gram_cross: empty matrix");
  if (X_train.cols() != X_query.cols())
    throw DimensionError("gram_cross: training has " + std::to_string(X_train.cols()) +
                         " columns, query has " + std::to_string(X_query.cols()));
  Matrix<Scalar> K(X_query.rows(), X_train.rows());
  for (Index i = 0; i < X_train.rows(); ++i)
    for (Index q = 0; q < X_query.rows(); ++q) K(q, i) = kernel(spec, X_query.row(q), X_train.row(i));
  return K;
}

}  // namespace csvqr
