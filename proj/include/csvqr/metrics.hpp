#pragma once

#include "csvqr/core.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace csvqr {

namespace detail {
template <typename Scalar>
void require_level(Scalar tau, const char* who) {
  if (!(tau > Scalar(0) && tau < Scalar(1)))
    throw ValidationError(std::string(who) + ": tau must lie in (0,1), got " + std::to_string(double(tau)));
}
}  // namespace detail

/// rho_tau(u) = tau*u for u >= 0, (tau-1)*u otherwise.
template <typename Scalar>
Scalar pinball(Scalar u, Scalar tau) {
  detail::require_level(tau, "pinball");
  return u >= Scalar(0) ? tau * u : (tau - Scalar(1)) * u;
}

/// Quantile score of estimate q_hat against observation y; tau is a fraction.
template <typename Scalar>
Scalar quantile_score(Scalar q_hat, Scalar y, Scalar tau) {
  detail::require_level(tau, "quantile_score");
  return pinball(y - q_hat, tau);
}

template <typename Scalar = double>
struct ReliabilityResult {
  Scalar pinc;  // nominal coverage, percent
  Scalar picp;  // empirical coverage, percent
  Scalar ace;   // |picp - pinc|
};

enum class CrossedInterval {
  Reject,      // throw ValidationError
  CountAsMiss  // the step contributes no coverage
};

/// Percentage of observations inside the closed interval [lower_i, upper_i].
template <typename DerivedL, typename DerivedU, typename DerivedY>
typename DerivedY::Scalar picp(const Eigen::MatrixBase<DerivedL>& lower, const Eigen::MatrixBase<DerivedU>& upper,
                               const Eigen::MatrixBase<DerivedY>& y,
                               CrossedInterval policy = CrossedInterval::Reject) {
  using Scalar = typename DerivedY::Scalar;
  if (lower.size() != y.size() || upper.size() != y.size())
    throw DimensionError("picp: interval and observation lengths differ");
  if (y.size() == 0) throw DimensionError("picp: no observations");
  Index inside = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (lower(i) > upper(i)) {
      if (policy == CrossedInterval::CountAsMiss) continue;
      throw ValidationError("picp: crossed interval at step " + std::to_string(i) + " (lower " +
                            std::to_string(double(lower(i))) + " > upper " + std::to_string(double(upper(i))) + ")");
    }
    if (lower(i) <= y(i) && y(i) <= upper(i)) ++inside;
  }
  return Scalar(100) * Scalar(inside) / Scalar(y.size());
}

/// |picp - 100(1 - beta)|, all in percent.
template <typename Scalar>
Scalar ace(Scalar picp_percent, Scalar beta) {
  if (!(picp_percent >= Scalar(0) && picp_percent <= Scalar(100)))
    throw ValidationError("ace: picp must lie in [0,100]");
  if (!(beta > Scalar(0) && beta < Scalar(1))) throw ValidationError("ace: beta must lie in (0,1)");
  return std::abs(picp_percent - Scalar(100) * (Scalar(1) - beta));
}

template <typename Scalar = double>
struct ScoreSummary {
  Scalar mean;
  Scalar sd;  // population standard deviation over all cells
  Index cells;
};

/// Quantile score of every (step, level) cell; quantiles is steps x M with
/// column m holding the tau_m estimates.
template <typename DerivedQ, typename DerivedY, typename Scalar = typename DerivedY::Scalar>
Matrix<Scalar> score_cells(const Eigen::MatrixBase<DerivedQ>& quantiles, const Eigen::MatrixBase<DerivedY>& y,
                           const QuantileLevels<Scalar>& levels) {
  if (quantiles.rows() != y.size()) throw DimensionError("quantile score: row count differs from observations");
  if (quantiles.cols() != levels.size()) throw DimensionError("quantile score: column count differs from levels");
  Matrix<Scalar> cells(quantiles.rows(), quantiles.cols());
  for (Index m = 0; m < quantiles.cols(); ++m)
    for (Index t = 0; t < quantiles.rows(); ++t)
      cells(t, m) = quantile_score(Scalar(quantiles(t, m)), Scalar(y(t)), levels[m]);
  return cells;
}

/// Mean/SD of a flat set of score cells (used for cross-month aggregation).
template <typename Derived>
ScoreSummary<typename Derived::Scalar> summarize_scores(const Eigen::MatrixBase<Derived>& cells) {
  using Scalar = typename Derived::Scalar;
  if (cells.size() == 0) throw DimensionError("quantile score: no cells");
  const Scalar mean = cells.mean();
  const Scalar var = (cells.array() - mean).square().mean();
  return {mean, std::sqrt(var), cells.size()};
}

/// Mean and population SD of the quantile score over every (step, level) cell.
template <typename DerivedQ, typename DerivedY, typename Scalar = typename DerivedY::Scalar>
ScoreSummary<Scalar> aggregate_qscore(const Eigen::MatrixBase<DerivedQ>& quantiles, const Eigen::MatrixBase<DerivedY>& y,
                                      const QuantileLevels<Scalar>& levels) {
  return summarize_scores(score_cells(quantiles, y, levels));
}

}  // namespace csvqr
