#pragma once

#include "csvqr/csvqr.hpp"
#include "csvqr/dataset.hpp"
#include "csvqr/features.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csvqr {

enum class Method { Csvqr, Climatology, Persistence, Uniform };

std::string to_string(Method method);
Method parse_method(std::string_view name);
std::vector<Method> parse_methods(std::string_view comma_list);

/// (C, sigma) candidates. Empty sigma means "defaults scaled by sqrt(p)".
struct HyperGrid {
  std::vector<double> C = {0.1, 1.0, 10.0, 100.0};
  std::vector<double> sigma;

  static std::vector<double> default_sigma(Index features);
  std::vector<double> sigma_for(Index features) const { return sigma.empty() ? default_sigma(features) : sigma; }
};

struct TuningCell {
  double C;
  double sigma;
  double score;  // mean pinball on the holdout tail
  bool converged;
};

struct TuningResult {
  double C;
  double sigma;
  std::vector<TuningCell> cells;
};

struct TuneOptions {
  double holdout_fraction = 0.2;
  CsvqrConfig<double> base;  // tol, max_iter, clamp and kernel kind are taken from here
};

/// Chronological holdout search: fits each grid cell on the leading rows and
/// scores mean pinball on the trailing holdout_fraction. Ties go to the
/// smaller C, then the smaller sigma.
TuningResult tune_hyperparameters(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, const HyperGrid& grid,
                                  const QuantileLevels<double>& levels, const TuneOptions& options = {});

struct BacktestConfig {
  std::vector<Method> methods = {Method::Csvqr, Method::Climatology, Method::Persistence, Method::Uniform};
  QuantileLevels<double> levels = QuantileLevels<double>::deciles();
  std::vector<double> coverages = {0.8, 0.6, 0.4, 0.2};
  HyperGrid grid;
  bool tune = true;
  CsvqrConfig<double> csvqr;  // C and kernel are used directly when tune is off
  FeatureConfig features;
  Index persistence_hours = 12;
  double holdout_fraction = 0.2;
  int thinning = 1;  // keep every k-th training row
  int train_months = 3;
  int jobs = 1;

  void validate() const;
};

/// Raw forecast of one method for one test month.
struct MethodForecast {
  YearMonth month;
  Method method;
  std::vector<Hour> timestamps;  // every test-month row, in order
  Eigen::VectorXd observed;      // NaN where power is absent
  Eigen::MatrixXd quantiles;     // rows x M
  Index query_crossings = 0;     // cells with q_m > q_{m+1}
  Index training_crossings = 0;  // same, at training points beyond 1e-6 (csvqr only)
  Index training_rows = 0;
  Index dropped_rows = 0;        // training rows without power
  std::optional<double> C;
  std::optional<double> sigma;
  bool converged = true;
  std::optional<Hour> latest_input;  // newest timestamp consumed to form the forecast
};

struct ReliabilityRow {
  std::string month;
  Method method;
  double pinc;
  double picp;
  double ace;
};

struct QScoreRow {
  std::string month;  // YYYY-MM or "All"
  Method method;
  double mean;
  double sd;
  Index cells;
  Index query_crossings;
};

struct BacktestReport {
  QuantileLevels<double> levels;
  std::vector<double> coverages;
  std::vector<ReliabilityRow> reliability;
  std::vector<QScoreRow> qscore;
  std::vector<MethodForecast> forecasts;
  std::vector<std::string> warnings;
};

/// PICP/ACE per coverage for one forecast, over rows with observed power.
std::vector<ReliabilityRow> evaluate_reliability(const MethodForecast& forecast, const QuantileLevels<double>& levels,
                                                 const std::vector<double>& coverages);

/// Score cells over rows with observed power (rows x M).
Eigen::MatrixXd forecast_score_cells(const MethodForecast& forecast, const QuantileLevels<double>& levels);

/// Fits/forms each method per sliding window over [from, to] on one zone's
/// series and evaluates it on the test month.
BacktestReport run_backtest(std::span<const TimeSeriesRecord> series, YearMonth from, YearMonth to,
                            const BacktestConfig& config);

/// Writes reliability.csv, qscore.csv and fanchart_<YYYY-MM>.csv (for the
/// first method in the report) into dir.
void export_report(const BacktestReport& report, const std::filesystem::path& dir);

}  // namespace csvqr
