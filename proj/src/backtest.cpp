#include "csvqr/backtest.hpp"

#include "csvqr/benchmarks.hpp"
#include "csvqr/metrics.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

namespace csvqr {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string label(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

// Re-throws the in-flight exception with a context prefix, keeping its type
// so callers can still tell data errors from usage errors.
[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(e.line(), context + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(context + ": " + e.what());
  } catch (const CoverageError& e) {
    throw CoverageError(context + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(context + ": " + e.what());
  }
}

// Runs task(i) for i in [0, count) on up to `jobs` threads. Each task writes
// only its own slot, so results are independent of scheduling.
template <typename Task>
void parallel_for(std::size_t count, int jobs, Task task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::size_t(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct TrainingSet {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Index dropped = 0;
  std::optional<Hour> latest;
};

TrainingSet training_rows(std::span<const TimeSeriesRecord> series, const SlidingWindowSplit& w,
                          const BacktestConfig& config) {
  std::vector<TimeSeriesRecord> kept;
  TrainingSet out;
  Index observed = 0;
  for (const auto& r : series) {
    if (!w.in_train(r.timestamp)) continue;
    if (!r.has_power()) {
      ++out.dropped;
      continue;
    }
    if (observed++ % config.thinning == 0) kept.push_back(r);
  }
  if (kept.empty()) throw CoverageError("training window holds no observed power");
  out.X = build_features(kept, config.features);
  out.y.resize(Index(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) out.y(Index(i)) = *kept[i].power;
  out.latest = kept.back().timestamp;
  return out;
}

MethodForecast forecast_month(std::span<const TimeSeriesRecord> series, const SlidingWindowSplit& w, Method method,
                              const BacktestConfig& config) {
  MethodForecast fc;
  fc.month = w.test_month;
  fc.method = method;

  std::vector<TimeSeriesRecord> test;
  for (const auto& r : series)
    if (w.in_test(r.timestamp)) test.push_back(r);
  const auto horizon = Index(test.size());
  fc.observed.resize(horizon);
  for (Index t = 0; t < horizon; ++t) {
    fc.timestamps.push_back(test[std::size_t(t)].timestamp);
    fc.observed(t) = test[std::size_t(t)].power.value_or(std::numeric_limits<double>::quiet_NaN());
  }

  switch (method) {
    case Method::Uniform:
      fc.quantiles = uniform_forecast(horizon, config.levels);
      break;
    case Method::Climatology: {
      std::vector<double> history;
      for (const auto& r : series) {
        if (r.timestamp >= w.test_begin) break;
        if (!r.has_power()) continue;
        history.push_back(*r.power);
        fc.latest_input = r.timestamp;
      }
      if (history.empty()) throw CoverageError("no observed power before the test month");
      fc.training_rows = Index(history.size());
      fc.quantiles = climatology_forecast(history, horizon, config.levels);
      break;
    }
    case Method::Persistence: {
      std::vector<double> history;
      for (const auto& r : series) {
        if (r.timestamp >= w.test_begin) break;
        if (!r.has_power()) continue;
        history.push_back(*r.power);
        fc.latest_input = r.timestamp;
      }
      fc.training_rows = std::min(Index(history.size()), config.persistence_hours);
      fc.quantiles = persistence_forecast(history, horizon, config.levels, config.persistence_hours);
      break;
    }
    case Method::Csvqr: {
      const TrainingSet train = training_rows(series, w, config);
      fc.training_rows = train.y.size();
      fc.dropped_rows = train.dropped;
      fc.latest_input = train.latest;
      CsvqrConfig<double> cfg = config.csvqr;
      if (config.tune) {
        TuneOptions opts;
        opts.holdout_fraction = config.holdout_fraction;
        opts.base = config.csvqr;
        const TuningResult best = tune_hyperparameters(train.X, train.y, config.grid, config.levels, opts);
        cfg.C = best.C;
        cfg.kernel.sigma = best.sigma;
      }
      const CsvqrModel<double> model = fit(train.X, train.y, config.levels, cfg);
      fc.C = cfg.C;
      fc.sigma = cfg.kernel.sigma;
      fc.converged = model.status().converged;
      const Eigen::MatrixXd Xq = horizon > 0 ? build_features(test, config.features) : Eigen::MatrixXd(0, kFeatureCount);
      fc.quantiles = predict(model, Xq);
      fc.query_crossings = count_crossings(fc.quantiles);
      const Eigen::MatrixXd at_train = decision_values(model, train.X);
      fc.training_crossings = count_crossings(at_train, 1e-6);
      break;
    }
  }
  return fc;
}

std::vector<Index> observed_rows(const MethodForecast& fc) {
  std::vector<Index> rows;
  for (Index t = 0; t < fc.observed.size(); ++t)
    if (!std::isnan(fc.observed(t))) rows.push_back(t);
  return rows;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::Csvqr: return "csvqr";
    case Method::Climatology: return "climatology";
    case Method::Persistence: return "persistence";
    case Method::Uniform: return "uniform";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::Csvqr, Method::Climatology, Method::Persistence, Method::Uniform})
    if (name == to_string(m)) return m;
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected csvqr, climatology, persistence or uniform)");
}

std::vector<Method> parse_methods(std::string_view comma_list) {
  std::vector<Method> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const std::size_t comma = comma_list.find(',', start);
    const std::string_view item =
        comma_list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw ValidationError("method '" + std::string(item) + "' listed twice");
    out.push_back(m);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<double> HyperGrid::default_sigma(Index features) {
  const double root = std::sqrt(double(features));
  return {0.5 * root, 1.0 * root, 2.0 * root, 4.0 * root};
}

TuningResult tune_hyperparameters(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y, const HyperGrid& grid,
                                  const QuantileLevels<double>& levels, const TuneOptions& options) {
  if (X_raw.rows() != y.size()) throw DimensionError("tune: feature rows differ from target length");
  std::vector<double> sigmas = grid.sigma_for(X_raw.cols());
  if (grid.C.empty() || sigmas.empty()) throw ValidationError("tune: empty hyperparameter grid");
  if (!(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0))
    throw ValidationError("tune: holdout fraction must lie in (0,1)");
  const auto n = y.size();
  const auto holdout = Index(std::floor(double(n) * options.holdout_fraction));
  const Index head = n - holdout;
  if (holdout < 1 || head < 1)
    throw CoverageError("tune: " + std::to_string(n) + " rows are too few for a chronological holdout");

  const Eigen::MatrixXd X_fit = X_raw.topRows(head);
  const Eigen::VectorXd y_fit = y.head(head);
  const Eigen::MatrixXd X_hold = X_raw.bottomRows(holdout);
  const Eigen::VectorXd y_hold = y.tail(holdout);

  // Sorted candidates make "first strict improvement wins" equal to the
  // smaller-C-then-smaller-sigma tie-break.
  std::vector<double> Cs = grid.C;
  std::sort(Cs.begin(), Cs.end());
  std::sort(sigmas.begin(), sigmas.end());

  TuningResult result{0.0, 0.0, {}};
  double best = std::numeric_limits<double>::infinity();
  for (const double C : Cs) {
    for (const double sigma : sigmas) {
      CsvqrConfig<double> cfg = options.base;
      cfg.C = C;
      cfg.kernel.sigma = sigma;
      const CsvqrModel<double> model = fit(X_fit, y_fit, levels, cfg);
      const double score = aggregate_qscore(predict(model, X_hold), y_hold, levels).mean;
      result.cells.push_back({C, sigma, score, model.status().converged});
      if (score < best) {
        best = score;
        result.C = C;
        result.sigma = sigma;
      }
    }
  }
  return result;
}

void BacktestConfig::validate() const {
  if (methods.empty()) throw ValidationError("backtest: no methods selected");
  for (const double p : coverages)
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("backtest: coverage " + num(p) + " is outside (0,1)");
  for (const auto& [lo, hi] : central_pairs(coverages))
    if (levels.index_of(lo) < 0 || levels.index_of(hi) < 0)
      throw ValidationError("backtest: coverage " + fixed(100 * (hi - lo), 0) + "% needs levels " + num(lo) + " and " +
                            num(hi));
  if (persistence_hours < 1) throw ValidationError("backtest: persistence window must be at least one hour");
  if (thinning < 1) throw ValidationError("backtest: thinning factor must be at least 1");
  if (train_months < 1) throw ValidationError("backtest: training window must span at least one month");
  if (jobs < 1) throw ValidationError("backtest: jobs must be at least 1");
  csvqr.validate();
  features.validate();
  for (const double C : grid.C)
    if (!(C > 0.0)) throw ValidationError("backtest: grid C values must be positive");
  for (const double s : grid.sigma)
    if (!(s > 0.0)) throw ValidationError("backtest: grid sigma values must be positive");
}

std::vector<ReliabilityRow> evaluate_reliability(const MethodForecast& fc, const QuantileLevels<double>& levels,
                                                 const std::vector<double>& coverages) {
  const std::vector<Index> rows = observed_rows(fc);
  if (rows.empty()) throw CoverageError("no observed power in the test month");
  const Eigen::VectorXd y = fc.observed(rows);
  const Eigen::MatrixXd q = fc.quantiles(rows, Eigen::all);
  std::vector<ReliabilityRow> out;
  for (const auto& pi : predict_intervals(q, levels, central_pairs(coverages))) {
    // Crossed intervals can only come from query-point crossings; they count
    // as misses and are reported through the query_crossings diagnostic.
    const double p = picp(pi.lower, pi.upper, y, CrossedInterval::CountAsMiss);
    out.push_back({format_month(fc.month), fc.method, pi.pinc(), p, ace(p, pi.beta())});
  }
  return out;
}

Eigen::MatrixXd forecast_score_cells(const MethodForecast& fc, const QuantileLevels<double>& levels) {
  const std::vector<Index> rows = observed_rows(fc);
  if (rows.empty()) throw CoverageError("no observed power in the test month");
  const Eigen::VectorXd y = fc.observed(rows);
  const Eigen::MatrixXd q = fc.quantiles(rows, Eigen::all);
  return score_cells(q, y, levels);
}

BacktestReport run_backtest(std::span<const TimeSeriesRecord> series, YearMonth from, YearMonth to,
                            const BacktestConfig& config) {
  config.validate();
  for (std::size_t i = 1; i < series.size(); ++i)
    if (series[i].zone != series[0].zone || !(series[i - 1].timestamp < series[i].timestamp))
      throw IntegrityError("backtest: series must hold one zone in strictly increasing time order");
  const std::vector<SlidingWindowSplit> windows = make_windows(series, from, to, config.train_months);

  struct Task {
    std::size_t window;
    Method method;
  };
  std::vector<Task> tasks;
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (const Method m : config.methods) tasks.push_back({w, m});

  std::vector<MethodForecast> forecasts(tasks.size());
  parallel_for(tasks.size(), config.jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const SlidingWindowSplit& w = windows[t.window];
    try {
      forecasts[i] = forecast_month(series, w, t.method, config);
      const MethodForecast& fc = forecasts[i];
      if (fc.latest_input && !(*fc.latest_input < w.test_begin))
        throw IntegrityError("look-ahead: input at " + format_hour(*fc.latest_input) + " reaches the test month");
    } catch (...) {
      rethrow_with_context("backtest [" + format_month(w.test_month) + ", " + to_string(t.method) + "]");
    }
  });

  BacktestReport report{config.levels, config.coverages, {}, {}, {}, {}};
  for (const Method m : config.methods) {
    std::vector<Eigen::MatrixXd> month_cells;
    Index crossings = 0;
    for (const auto& fc : forecasts) {
      if (fc.method != m) continue;
      const std::string month = format_month(fc.month);
      const std::string context = "backtest [" + month + ", " + to_string(m) + "]";
      try {
        for (auto& row : evaluate_reliability(fc, config.levels, config.coverages)) report.reliability.push_back(row);
        Eigen::MatrixXd cells = forecast_score_cells(fc, config.levels);
        const auto s = summarize_scores(cells);
        report.qscore.push_back({month, m, s.mean, s.sd, s.cells, fc.query_crossings});
        month_cells.push_back(std::move(cells));
      } catch (...) {
        rethrow_with_context(context);
      }
      crossings += fc.query_crossings;
      if (fc.dropped_rows > 0)
        report.warnings.push_back(context + ": dropped " + std::to_string(fc.dropped_rows) +
                                  " training rows without power");
      if (!fc.converged)
        report.warnings.push_back(context + ": solver stopped at the iteration cap before reaching tol");
      if (fc.training_crossings > 0)
        report.warnings.push_back(context + ": " + std::to_string(fc.training_crossings) +
                                  " crossed quantile pairs at training points");
      if (fc.query_crossings > 0)
        report.warnings.push_back(context + ": " + std::to_string(fc.query_crossings) +
                                  " crossed quantile pairs at test points");
    }
    Index total = 0;
    for (const auto& c : month_cells) total += c.size();
    Eigen::VectorXd all(total);
    Index offset = 0;
    for (const auto& c : month_cells) {
      all.segment(offset, c.size()) = c.reshaped();
      offset += c.size();
    }
    const auto s = summarize_scores(all);
    report.qscore.push_back({"All", m, s.mean, s.sd, s.cells, crossings});
  }
  report.forecasts = std::move(forecasts);
  return report;
}

void export_report(const BacktestReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("export: cannot create " + dir.string() + ": " + ec.message());

  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("export: cannot write " + (dir / name).string());
    return out;
  };
  auto finish = [&](std::ofstream& out, const std::string& name) {
    out.close();
    if (!out) throw IoError("export: write failed for " + (dir / name).string());
  };

  {
    auto out = open("reliability.csv");
    out << "month,method,pinc,picp,ace\n";
    for (const auto& r : report.reliability)
      out << r.month << ',' << to_string(r.method) << ',' << fixed(r.pinc, 2) << ',' << num(r.picp) << ','
          << num(r.ace) << '\n';
    finish(out, "reliability.csv");
  }
  {
    auto out = open("qscore.csv");
    out << "month,method,qscore_mean,qscore_sd,cells,query_crossings\n";
    for (const auto& r : report.qscore)
      out << r.month << ',' << to_string(r.method) << ',' << num(r.mean) << ',' << num(r.sd) << ',' << r.cells << ','
          << r.query_crossings << '\n';
    finish(out, "qscore.csv");
  }
  if (report.forecasts.empty()) return;
  const Method fan = report.forecasts.front().method;
  for (const auto& fc : report.forecasts) {
    if (fc.method != fan) continue;
    const std::string name = "fanchart_" + format_month(fc.month) + ".csv";
    auto out = open(name);
    out << "timestamp,observed";
    for (const double tau : report.levels.values()) out << ",q" << label(tau);
    out << '\n';
    for (std::size_t t = 0; t < fc.timestamps.size(); ++t) {
      const auto row = Index(t);
      out << format_hour(fc.timestamps[t]) << ',';
      if (!std::isnan(fc.observed(row))) out << num(fc.observed(row));
      for (Index m = 0; m < fc.quantiles.cols(); ++m) out << ',' << num(fc.quantiles(row, m));
      out << '\n';
    }
    finish(out, name);
  }
}

}  // namespace csvqr
