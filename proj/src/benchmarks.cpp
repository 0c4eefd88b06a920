#include "csvqr/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace csvqr {

Eigen::VectorXd empirical_quantiles(std::span<const double> sample, const QuantileLevels<double>& levels) {
  if (sample.empty()) throw ValidationError("empirical_quantiles: empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double last = double(sorted.size() - 1);
  Eigen::VectorXd q(levels.size());
  for (Index m = 0; m < levels.size(); ++m) {
    const double pos = levels[m] * last;
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    q(m) = sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
  }
  return q;
}

namespace {
Eigen::MatrixXd repeat_rows(const Eigen::VectorXd& row, Index horizon) {
  if (horizon < 0) throw ValidationError("benchmark: negative horizon");
  return row.transpose().replicate(horizon, 1);
}
}  // namespace

Eigen::MatrixXd persistence_forecast(std::span<const double> history, Index horizon,
                                     const QuantileLevels<double>& levels, Index window_hours) {
  if (window_hours < 1) throw ValidationError("persistence: window must be at least one hour");
  if (Index(history.size()) < window_hours)
    throw CoverageError("persistence: needs " + std::to_string(window_hours) + " observed hours, have " +
                        std::to_string(history.size()));
  return repeat_rows(empirical_quantiles(history.last(std::size_t(window_hours)), levels), horizon);
}

Eigen::MatrixXd climatology_forecast(std::span<const double> history, Index horizon,
                                     const QuantileLevels<double>& levels) {
  if (history.empty()) throw CoverageError("climatology: empty history");
  return repeat_rows(empirical_quantiles(history, levels), horizon);
}

Eigen::MatrixXd uniform_forecast(Index horizon, const QuantileLevels<double>& levels) {
  return repeat_rows(Eigen::Map<const Eigen::VectorXd>(levels.values().data(), levels.size()), horizon);
}

}  // namespace csvqr
