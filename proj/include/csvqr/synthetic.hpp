#pragma once

#include "csvqr/core.hpp"
#include "csvqr/dataset.hpp"

#include <cstdint>
#include <vector>

namespace csvqr {

/// Inverse of the standard normal CDF.
double normal_quantile(double p);

/// y = 0.5 + 0.4 x1 eps with x1 ~ U(0,1), eps ~ N(0,1). Column 0 of X is x1;
/// any further columns are independent U(0,1) nuisance features.
struct HeteroscedasticSample {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

HeteroscedasticSample synthetic_heteroscedastic(Index n, std::uint64_t seed, Index nuisance_features = 0);

/// Conditional tau-quantile of the process above: 0.5 + 0.4 x1 z_tau.
double heteroscedastic_quantile(double x1, double tau);

/// Hourly wind-like records for every hour of the months [first, last].
/// The driver x1(t) is a smooth process in (0,1) with ws100 = 20 x1, and
/// power = clamp(0.5 + 0.4 x1 eps, 0, 1), so conditional power quantiles are
/// clamp(heteroscedastic_quantile(x1, tau), 0, 1).
std::vector<TimeSeriesRecord> synthetic_wind_records(YearMonth first, YearMonth last, std::uint64_t seed, int zone = 1);

/// Recovers x1 from a synthetic record (ws100 / 20).
double synthetic_driver(const TimeSeriesRecord& record);

}  // namespace csvqr
