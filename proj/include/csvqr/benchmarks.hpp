#pragma once

#include "csvqr/core.hpp"

#include <span>

namespace csvqr {

/// Sample quantiles by linear interpolation between order statistics at the
/// 1-based position tau (n - 1) + 1.
Eigen::VectorXd empirical_quantiles(std::span<const double> sample, const QuantileLevels<double>& levels);

/// Empirical quantiles of the last window_hours observations, repeated for
/// every horizon step.
Eigen::MatrixXd persistence_forecast(std::span<const double> history, Index horizon,
                                     const QuantileLevels<double>& levels, Index window_hours = 12);

/// Empirical quantiles of the whole history, repeated for every step.
Eigen::MatrixXd climatology_forecast(std::span<const double> history, Index horizon,
                                     const QuantileLevels<double>& levels);

/// Quantiles of U(0,1): row t, column m equals tau_m.
Eigen::MatrixXd uniform_forecast(Index horizon, const QuantileLevels<double>& levels);

}  // namespace csvqr
