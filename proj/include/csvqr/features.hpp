#pragma once

#include "csvqr/core.hpp"
#include "csvqr/dataset.hpp"

#include <array>
#include <span>
#include <string_view>

namespace csvqr {

inline constexpr Index kFeatureCount = 13;

/// Column order of the feature matrix.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "ws10", "ws100", "wd10", "wd100", "we10", "we100", "wsh", "wed", "wdd", "u10", "v10", "u100", "v100"};

struct FeatureConfig {
  double density = 1.0;  // d in we = d ws^3 / 2

  void validate() const {
    if (!(density > 0.0)) throw ValidationError("features: energy density must be positive");
  }
};

double wind_speed(double u, double v);

/// Degrees in (-180, 180]: (180/pi) atan2(u, v), with u as the first argument.
/// (0,0) maps to 0.
double wind_direction(double u, double v);

double wind_energy(double ws, double density);

/// Root-sum-of-squares of the two speeds.
double wind_shear(double ws10, double ws100);

/// Wraps an angle difference into (-180, 180].
double wrap_degrees(double deg);

/// rows x 13 unscaled feature matrix, one row per record.
Eigen::MatrixXd build_features(std::span<const TimeSeriesRecord> records, const FeatureConfig& config = {});

}  // namespace csvqr
