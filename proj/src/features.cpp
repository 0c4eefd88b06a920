#include "csvqr/features.hpp"

#include <cmath>
#include <numbers>

namespace csvqr {

double wind_speed(double u, double v) { return std::hypot(u, v); }

double wind_direction(double u, double v) {
  if (u == 0.0 && v == 0.0) return 0.0;
  return wrap_degrees(std::atan2(u, v) * 180.0 / std::numbers::pi);
}

double wind_energy(double ws, double density) { return 0.5 * density * ws * ws * ws; }

double wind_shear(double ws10, double ws100) { return std::sqrt(ws10 * ws10 + ws100 * ws100); }

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

Eigen::MatrixXd build_features(std::span<const TimeSeriesRecord> records, const FeatureConfig& config) {
  config.validate();
  if (records.empty()) throw DimensionError("build_features: no records");
  Eigen::MatrixXd X(Index(records.size()), kFeatureCount);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    const double ws10 = wind_speed(r.u10, r.v10);
    const double ws100 = wind_speed(r.u100, r.v100);
    const double wd10 = wind_direction(r.u10, r.v10);
    const double wd100 = wind_direction(r.u100, r.v100);
    const double we10 = wind_energy(ws10, config.density);
    const double we100 = wind_energy(ws100, config.density);
    X.row(Index(k)) << ws10, ws100, wd10, wd100, we10, we100, wind_shear(ws10, ws100), we100 - we10,
        wrap_degrees(wd100 - wd10), r.u10, r.v10, r.u100, r.v100;
  }
  return X;
}

}  // namespace csvqr
