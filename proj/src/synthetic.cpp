#include "csvqr/synthetic.hpp"

#include "csvqr/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace csvqr {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must lie in (0,1)");
  // Acklam's rational approximation followed by one Halley step on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

double heteroscedastic_quantile(double x1, double tau) { return 0.5 + 0.4 * x1 * normal_quantile(tau); }

HeteroscedasticSample synthetic_heteroscedastic(Index n, std::uint64_t seed, Index nuisance_features) {
  if (n < 1) throw ValidationError("synthetic: sample size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  HeteroscedasticSample s{Eigen::MatrixXd(n, 1 + nuisance_features), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const double x1 = unif(rng);
    s.X(i, 0) = x1;
    for (Index k = 0; k < nuisance_features; ++k) s.X(i, 1 + k) = unif(rng);
    s.y(i) = 0.5 + 0.4 * x1 * normal(rng);
  }
  return s;
}

std::vector<TimeSeriesRecord> synthetic_wind_records(YearMonth first, YearMonth last, std::uint64_t seed, int zone) {
  if (last < first) throw ValidationError("synthetic: last month precedes the first");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Hour begin = month_start(first);
  const Hour end = month_start(last + std::chrono::months{1});
  std::vector<TimeSeriesRecord> out;
  out.reserve(std::size_t((end - begin).count()));

  // AR(1) on the logit scale keeps x1 in (0,1) with hour-to-hour persistence.
  double z = 0.0;
  double direction = 0.0;
  for (Hour h = begin; h < end; h += std::chrono::hours{1}) {
    z = 0.97 * z + 0.35 * normal(rng);
    direction = wrap_degrees(direction + 8.0 * normal(rng));
    const double x1 = 1.0 / (1.0 + std::exp(-z));
    const double ws100 = 20.0 * x1;
    const double ws10 = 0.7 * ws100 * (1.0 + 0.05 * normal(rng));
    const double rad100 = direction * std::numbers::pi / 180.0;
    const double rad10 = (direction - 15.0 + 5.0 * normal(rng)) * std::numbers::pi / 180.0;

    TimeSeriesRecord r;
    r.timestamp = h;
    r.zone = zone;
    r.u100 = ws100 * std::sin(rad100);
    r.v100 = ws100 * std::cos(rad100);
    r.u10 = std::abs(ws10) * std::sin(rad10);
    r.v10 = std::abs(ws10) * std::cos(rad10);
    r.power = std::clamp(0.5 + 0.4 * x1 * normal(rng), 0.0, 1.0);
    out.push_back(r);
  }
  return out;
}

double synthetic_driver(const TimeSeriesRecord& record) { return wind_speed(record.u100, record.v100) / 20.0; }

}  // namespace csvqr
