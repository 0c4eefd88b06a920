#pragma once

// Non-crossing multi-quantile kernel regression solved in the dual.
//
// Primal, for levels tau_1 < ... < tau_M and a bias-free model f_m = w_m' phi(x):
//   min  sum_m 1/2 |w_m|^2 + C sum_i (tau_m xi+_mi + (1 - tau_m) xi-_mi)
//   s.t. y_i - f_m(x_i) <= xi+_mi,  f_m(x_i) - y_i <= xi-_mi,  xi >= 0,
//        f_m(x_i) <= f_{m+1}(x_i).
// Dual (maximized): with d_m = lambda_m - lambda_{m-1} (lambda_0 = lambda_M = 0),
//   D = sum_m -1/2 (a+_m - a-_m)' G (a+_m - a-_m) + (a+_m - a-_m)' y
//             -1/2 d_m' G d_m + (a+_m - a-_m)' G d_m
//   over a+_m in [0, tau_m C], a-_m in [0, (1 - tau_m) C], lambda >= 0.
// Prediction: f_m(x) = sum_i beta_mi K(x, x_i), beta_m = (a+_m - a-_m) - d_m.

#include "csvqr/core.hpp"
#include "csvqr/detail/smo_solver.hpp"
#include "csvqr/kernels.hpp"
#include "csvqr/scaler.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace csvqr {

/// Dual variables in level-major layout: alpha_plus / alpha_minus are M x N,
/// lambda is (M-1) x N with lambda_0 = lambda_M = 0 implicit.
template <typename Scalar = double>
struct DualSolution {
  Matrix<Scalar> alpha_plus;
  Matrix<Scalar> alpha_minus;
  Matrix<Scalar> lambda;

  static DualSolution zeros(Index levels, Index points) {
    return {Matrix<Scalar>::Zero(levels, points), Matrix<Scalar>::Zero(levels, points),
            Matrix<Scalar>::Zero(std::max<Index>(levels - 1, 0), points)};
  }

  Index levels() const noexcept { return alpha_plus.rows(); }
  Index points() const noexcept { return alpha_plus.cols(); }

  void check_shape(Index levels, Index points) const {
    if (alpha_plus.rows() != levels || alpha_plus.cols() != points || alpha_minus.rows() != levels ||
        alpha_minus.cols() != points || lambda.rows() != std::max<Index>(levels - 1, 0) || lambda.cols() != points)
      throw DimensionError("dual solution: expected " + std::to_string(levels) + " levels x " +
                           std::to_string(points) + " points");
  }

  /// lambda_m - lambda_{m-1} for every level m (M x N).
  Matrix<Scalar> lambda_differences() const {
    Matrix<Scalar> d = Matrix<Scalar>::Zero(levels(), points());
    for (Index m = 0; m + 1 < levels(); ++m) {
      d.row(m) += lambda.row(m);
      d.row(m + 1) -= lambda.row(m);
    }
    return d;
  }

  /// Expansion coefficients beta (M x N) used by prediction.
  Matrix<Scalar> coefficients() const { return alpha_plus - alpha_minus - lambda_differences(); }

  bool operator==(const DualSolution& o) const {
    return alpha_plus == o.alpha_plus && alpha_minus == o.alpha_minus && lambda == o.lambda;
  }
};

namespace detail {
template <typename Scalar, typename DG, typename DY>
void check_problem(const DualSolution<Scalar>& dual, const Eigen::MatrixBase<DG>& G, const Eigen::MatrixBase<DY>& y,
                   const QuantileLevels<Scalar>& levels) {
  const Index n = y.size();
  if (G.rows() != n || G.cols() != n) throw DimensionError("Gram matrix does not match the target length");
  dual.check_shape(levels.size(), n);
}
}  // namespace detail

/// Value of the concave dual at a feasible point (maximization direction).
template <typename Scalar, typename DG, typename DY>
Scalar dual_objective(const DualSolution<Scalar>& dual, const Eigen::MatrixBase<DG>& G, const Eigen::MatrixBase<DY>& y,
                      const QuantileLevels<Scalar>& levels, Scalar /*C*/) {
  detail::check_problem(dual, G, y, levels);
  const Matrix<Scalar> a = dual.alpha_plus - dual.alpha_minus;
  const Matrix<Scalar> beta = a - dual.lambda_differences();
  const Matrix<Scalar> F = beta * G;  // row m holds (G beta_m)'
  Scalar value = Scalar(0);
  for (Index m = 0; m < a.rows(); ++m) value += -Scalar(0.5) * beta.row(m).dot(F.row(m)) + a.row(m).dot(y.transpose());
  return value;
}

/// Gradient of dual_objective, shaped like the dual.
template <typename Scalar, typename DG, typename DY>
DualSolution<Scalar> dual_gradient(const DualSolution<Scalar>& dual, const Eigen::MatrixBase<DG>& G,
                                   const Eigen::MatrixBase<DY>& y, const QuantileLevels<Scalar>& levels, Scalar /*C*/) {
  detail::check_problem(dual, G, y, levels);
  const Matrix<Scalar> F = dual.coefficients() * G;
  const Index M = levels.size();
  DualSolution<Scalar> g = DualSolution<Scalar>::zeros(M, y.size());
  for (Index m = 0; m < M; ++m) {
    g.alpha_plus.row(m) = y.transpose() - F.row(m);
    g.alpha_minus.row(m) = F.row(m) - y.transpose();
  }
  for (Index m = 0; m + 1 < M; ++m) g.lambda.row(m) = F.row(m) - F.row(m + 1);
  return g;
}

/// Largest projected-gradient magnitude over all dual variables; zero
/// exactly at a stationary point of the box/nonnegativity-constrained dual.
template <typename Scalar, typename DG, typename DY>
Scalar kkt_violation(const DualSolution<Scalar>& dual, const Eigen::MatrixBase<DG>& G, const Eigen::MatrixBase<DY>& y,
                     const QuantileLevels<Scalar>& levels, Scalar C) {
  const DualSolution<Scalar> g = dual_gradient(dual, G, y, levels, C);
  auto projected = [](Scalar grad, Scalar x, Scalar lo, Scalar hi) {
    if (grad > Scalar(0)) return x < hi ? grad : Scalar(0);
    if (grad < Scalar(0)) return x > lo ? -grad : Scalar(0);
    return Scalar(0);
  };
  Scalar worst = Scalar(0);
  for (Index m = 0; m < levels.size(); ++m) {
    for (Index i = 0; i < y.size(); ++i) {
      worst = std::max(worst, projected(g.alpha_plus(m, i), dual.alpha_plus(m, i), Scalar(0), levels[m] * C));
      worst = std::max(worst,
                       projected(g.alpha_minus(m, i), dual.alpha_minus(m, i), Scalar(0), (Scalar(1) - levels[m]) * C));
    }
  }
  for (Index m = 0; m + 1 < levels.size(); ++m)
    for (Index i = 0; i < y.size(); ++i)
      worst = std::max(worst, projected(g.lambda(m, i), dual.lambda(m, i), Scalar(0),
                                        std::numeric_limits<Scalar>::infinity()));
  return worst;
}

template <typename Scalar = double>
struct CsvqrConfig {
  Scalar C = Scalar(1);
  KernelSpec<Scalar> kernel = KernelSpec<Scalar>::rbf(std::sqrt(Scalar(13)));
  Scalar tol = Scalar(1e-3);
  Scalar crossing_tol = Scalar(1e-8);
  long max_iter = 200;  // sweep-equivalents: the step cap is max_iter * dual variable count
  bool clamp_output = true;

  void validate() const {
    if (!(C > Scalar(0) && std::isfinite(double(C)))) throw ValidationError("csvqr: C must be positive and finite");
    if (!(tol > Scalar(0))) throw ValidationError("csvqr: tol must be positive");
    if (!(crossing_tol > Scalar(0))) throw ValidationError("csvqr: crossing_tol must be positive");
    if (max_iter < 1) throw ValidationError("csvqr: max_iter must be at least 1");
    kernel.validate();
  }

  bool operator==(const CsvqrConfig&) const = default;
};

/// Frozen fit: support features (scaled), dual, levels, config, optional scaler.
template <typename Scalar = double>
class CsvqrModel {
public:
  CsvqrModel(Matrix<Scalar> support_features, DualSolution<Scalar> dual, QuantileLevels<Scalar> levels,
             CsvqrConfig<Scalar> config, std::optional<MinMaxScaler<Scalar>> scaler, SolveStatus<Scalar> status)
      : support_(std::move(support_features)),
        dual_(std::move(dual)),
        levels_(std::move(levels)),
        config_(std::move(config)),
        scaler_(std::move(scaler)),
        status_(status) {
    dual_.check_shape(levels_.size(), support_.rows());
    if (scaler_ && scaler_->columns() != support_.cols())
      throw DimensionError("csvqr model: scaler width differs from support feature width");
    coefficients_ = dual_.coefficients();
  }

  const Matrix<Scalar>& support_features() const noexcept { return support_; }
  const DualSolution<Scalar>& dual() const noexcept { return dual_; }
  const QuantileLevels<Scalar>& levels() const noexcept { return levels_; }
  const CsvqrConfig<Scalar>& config() const noexcept { return config_; }
  const std::optional<MinMaxScaler<Scalar>>& scaler() const noexcept { return scaler_; }
  const SolveStatus<Scalar>& status() const noexcept { return status_; }
  const Matrix<Scalar>& coefficients() const noexcept { return coefficients_; }
  Index feature_count() const noexcept { return support_.cols(); }

private:
  Matrix<Scalar> support_;
  DualSolution<Scalar> dual_;
  QuantileLevels<Scalar> levels_;
  CsvqrConfig<Scalar> config_;
  std::optional<MinMaxScaler<Scalar>> scaler_;
  SolveStatus<Scalar> status_;
  Matrix<Scalar> coefficients_;
};

/// Fits on an already-scaled training matrix. Non-convergence within
/// max_iter is reported on the model status, not thrown.
template <typename Scalar, typename DX, typename DY>
CsvqrModel<Scalar> solve(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& y,
                         const QuantileLevels<Scalar>& levels, const CsvqrConfig<Scalar>& config,
                         const SolveObserver<Scalar>& observer = {}) {
  config.validate();
  if (X.rows() < 1) throw DimensionError("solve: at least one training point is required");
  if (X.rows() != y.size()) throw DimensionError("solve: feature rows differ from target length");
  if (levels.size() < 1) throw ValidationError("solve: no quantile levels");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("solve: non-finite training input");

  const Matrix<Scalar> features = X;
  const Vector<Scalar> targets = y;
  const Matrix<Scalar> G = gram(config.kernel, features);
  detail::SmoSolver<Scalar> solver(G, targets, levels, config.C);
  const long max_steps = config.max_iter * long(solver.variable_count());
  const SolveStatus<Scalar> status = solver.run(config.tol, config.crossing_tol, max_steps, observer);
  DualSolution<Scalar> dual{solver.alpha_plus(), solver.alpha_minus(), solver.lambda()};
  return CsvqrModel<Scalar>(features, std::move(dual), levels, config, std::nullopt, status);
}

/// Fits a min-max scaler on the raw training features, then solves.
template <typename Scalar, typename DX, typename DY>
CsvqrModel<Scalar> fit(const Eigen::MatrixBase<DX>& X_raw, const Eigen::MatrixBase<DY>& y,
                       const QuantileLevels<Scalar>& levels, const CsvqrConfig<Scalar>& config) {
  auto scaler = fit_minmax_scaler(X_raw);
  const Matrix<Scalar> X = apply_minmax(scaler, X_raw);
  CsvqrModel<Scalar> solved = solve(X, y, levels, config);
  return CsvqrModel<Scalar>(solved.support_features(), solved.dual(), levels, config, std::move(scaler),
                            solved.status());
}

/// Unclamped f_m(x) values for each query row (queries x M); the model's
/// scaler, if any, is applied to the query first.
template <typename Scalar, typename DQ>
Matrix<Scalar> decision_values(const CsvqrModel<Scalar>& model, const Eigen::MatrixBase<DQ>& X_query) {
  if (X_query.cols() != model.feature_count())
    throw DimensionError("predict: model expects " + std::to_string(model.feature_count()) + " feature columns, got " +
                         std::to_string(X_query.cols()));
  if (X_query.rows() == 0) return Matrix<Scalar>(0, model.levels().size());
  const Matrix<Scalar> Q = model.scaler() ? apply_minmax(*model.scaler(), X_query) : Matrix<Scalar>(X_query);
  const Matrix<Scalar> K = gram_cross(model.config().kernel, model.support_features(), Q);
  return K * model.coefficients().transpose();
}

/// Quantile estimates (queries x M); clamped to [0,1] when the model's
/// config.clamp_output is set.
template <typename Scalar, typename DQ>
Matrix<Scalar> predict(const CsvqrModel<Scalar>& model, const Eigen::MatrixBase<DQ>& X_query) {
  Matrix<Scalar> out = decision_values(model, X_query);
  if (model.config().clamp_output) out = out.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return out;
}

/// Primal value for the fitted model on (X, y): the RKHS norm comes from the
/// kernel expansion, the slack term from the pinball loss of the unclamped fit.
template <typename Scalar, typename DX, typename DY>
Scalar primal_objective(const CsvqrModel<Scalar>& model, const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DY>& y) {
  if (X.rows() != y.size()) throw DimensionError("primal_objective: feature rows differ from target length");
  const Matrix<Scalar> G = gram(model.config().kernel, model.support_features());
  const Matrix<Scalar>& B = model.coefficients();
  const Matrix<Scalar> f = decision_values(model, X);
  const Scalar C = model.config().C;
  Scalar value = Scalar(0);
  for (Index m = 0; m < B.rows(); ++m) {
    value += Scalar(0.5) * B.row(m).dot(B.row(m) * G);
    const Scalar tau = model.levels()[m];
    for (Index i = 0; i < y.size(); ++i) {
      const Scalar r = y(i) - f(i, m);
      value += C * (r >= Scalar(0) ? tau * r : (tau - Scalar(1)) * r);
    }
  }
  return value;
}

/// Number of (row, m) cells with q_m > q_{m+1} + tol.
template <typename DQ>
Index count_crossings(const Eigen::MatrixBase<DQ>& quantiles, typename DQ::Scalar tol = 0) {
  Index count = 0;
  for (Index t = 0; t < quantiles.rows(); ++t)
    for (Index m = 0; m + 1 < quantiles.cols(); ++m)
      if (quantiles(t, m) > quantiles(t, m + 1) + tol) ++count;
  return count;
}

template <typename Scalar = double>
struct PredictionInterval {
  Scalar tau_lower;
  Scalar tau_upper;
  Vector<Scalar> lower;
  Vector<Scalar> upper;

  /// Nominal coverage in percent, 100 (tau_u - tau_l).
  Scalar pinc() const { return Scalar(100) * (tau_upper - tau_lower); }
  /// beta with tau_u - tau_l = 1 - beta.
  Scalar beta() const { return Scalar(1) - (tau_upper - tau_lower); }
};

/// [q_{tau_l}, q_{tau_u}] per row for each requested level pair.
template <typename Scalar, typename DQ>
std::vector<PredictionInterval<Scalar>> predict_intervals(const Eigen::MatrixBase<DQ>& quantiles,
                                                          const QuantileLevels<Scalar>& levels,
                                                          const std::vector<std::pair<Scalar, Scalar>>& pairs) {
  if (quantiles.cols() != levels.size()) throw DimensionError("predict_intervals: column count differs from levels");
  std::vector<PredictionInterval<Scalar>> out;
  for (const auto& [lo, hi] : pairs) {
    if (!(lo < hi))
      throw ValidationError("predict_intervals: lower level " + std::to_string(double(lo)) +
                            " must be below upper level " + std::to_string(double(hi)));
    const Index l = levels.index_of(lo);
    const Index u = levels.index_of(hi);
    if (l < 0 || u < 0)
      throw ValidationError("predict_intervals: level " + std::to_string(double(l < 0 ? lo : hi)) +
                            " is not among the fitted levels");
    out.push_back({levels[l], levels[u], quantiles.col(l), quantiles.col(u)});
  }
  return out;
}

/// Symmetric central pairs (0.5 - p/2, 0.5 + p/2) for nominal coverages p.
template <typename Scalar = double>
std::vector<std::pair<Scalar, Scalar>> central_pairs(const std::vector<Scalar>& coverages) {
  std::vector<std::pair<Scalar, Scalar>> out;
  for (const Scalar p : coverages) {
    const Scalar lo = std::round((Scalar(0.5) - p / 2) * Scalar(1e9)) / Scalar(1e9);
    const Scalar hi = std::round((Scalar(0.5) + p / 2) * Scalar(1e9)) / Scalar(1e9);
    out.emplace_back(lo, hi);
  }
  return out;
}

}  // namespace csvqr
