#include "csvqr/cli.hpp"

#include "csvqr/backtest.hpp"
#include "csvqr/benchmarks.hpp"
#include "csvqr/csvqr.hpp"
#include "csvqr/dataset.hpp"
#include "csvqr/features.hpp"
#include "csvqr/metrics.hpp"
#include "csvqr/model_io.hpp"
#include "csvqr/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace csvqr::cli {

namespace {

// Raised while turning flags into configuration; maps to the usage status.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

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

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Fills options of `sub` that were not given on the command line from a
// plain key=value file (keys are long flag names without dashes).
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") throw UsageError(path + ":" + std::to_string(lineno) + ": config files cannot nest");
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (opt->count() > 0) continue;  // the command line wins
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::pair<YearMonth, YearMonth> parse_month_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const YearMonth m = parse_month(text);
    return {m, m};
  }
  const YearMonth a = parse_month(text.substr(0, colon));
  const YearMonth b = parse_month(text.substr(colon + 1));
  if (b < a) throw ValidationError("month range " + text + " ends before it starts");
  return {a, b};
}

std::vector<TimeSeriesRecord> in_months(std::span<const TimeSeriesRecord> series, YearMonth first, YearMonth last) {
  const Hour begin = month_start(first);
  const Hour end = month_start(last + std::chrono::months{1});
  std::vector<TimeSeriesRecord> out;
  for (const auto& r : series)
    if (r.timestamp >= begin && r.timestamp < end) out.push_back(r);
  return out;
}

std::vector<TimeSeriesRecord> load_zone(const std::string& path, int zone) {
  const auto all = load_csv(path);
  auto series = select_zone(all, zone);
  if (series.empty()) throw CoverageError(path + " holds no rows for zone " + std::to_string(zone));
  return series;
}

void write_quantile_csv(std::ostream& out, std::span<const Hour> timestamps, const Eigen::MatrixXd& q,
                        const QuantileLevels<double>& levels) {
  out << "timestamp";
  for (const double tau : levels.values()) out << ",q" << label(tau);
  out << '\n';
  for (std::size_t t = 0; t < timestamps.size(); ++t) {
    out << format_hour(timestamps[t]);
    for (Index m = 0; m < q.cols(); ++m) out << ',' << num(q(Index(t), m));
    out << '\n';
  }
}

struct QuantileTable {
  QuantileLevels<double> levels;
  std::vector<Hour> timestamps;
  Eigen::MatrixXd q;
};

QuantileTable read_quantile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(trim(cell));
  }
  if (header.size() < 2 || header[0] != "timestamp")
    throw ParseError(1, path + ": expected a header 'timestamp,q<tau>,...'");
  std::vector<double> taus;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].size() < 2 || header[c][0] != 'q') throw ParseError(1, path + ": bad column '" + header[c] + "'");
    char* end = nullptr;
    taus.push_back(std::strtod(header[c].c_str() + 1, &end));
    if (*end != '\0') throw ParseError(1, path + ": bad column '" + header[c] + "'");
  }
  QuantileTable table{QuantileLevels<double>(taus), {}, {}};
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    try {
      table.timestamps.push_back(parse_hour(trim(cell)));
    } catch (const Error& e) {
      throw ParseError(lineno, path + ": " + e.what());
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const std::string v = trim(cell);
      row.push_back(std::strtod(v.c_str(), &end));
      if (v.empty() || *end != '\0') throw ParseError(lineno, path + ": cannot parse number '" + v + "'");
    }
    if (row.size() != taus.size())
      throw ParseError(lineno, path + ": expected " + std::to_string(taus.size()) + " quantile columns");
    rows.push_back(std::move(row));
  }
  table.q.resize(Index(rows.size()), Index(taus.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t m = 0; m < taus.size(); ++m) table.q(Index(t), Index(m)) = rows[t][m];
  return table;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

// Options shared by the subcommands that fit a model.
struct ModelFlags {
  std::string levels = "0.1:0.9:0.1";
  std::string kernel = "rbf";
  double C = 1.0;
  std::optional<double> sigma;
  double tol = 1e-3;
  long max_iter = 200;
  bool no_clamp = false;

  void add_to(CLI::App& sub) {
    sub.add_option("--levels", levels, "Quantile levels, lo:hi:step or a comma list")->capture_default_str();
    sub.add_option("--kernel", kernel, "rbf or linear")->capture_default_str();
    sub.add_option("--C", C, "Regularization constant")->capture_default_str();
    sub.add_option("--sigma", sigma, "RBF bandwidth (default sqrt of the feature count)");
    sub.add_option("--tol", tol, "KKT tolerance")->capture_default_str();
    sub.add_option("--max-iter", max_iter, "Iteration cap in sweeps over the dual variables")->capture_default_str();
    sub.add_flag("--no-clamp", no_clamp, "Do not clamp predictions to [0,1]");
  }

  CsvqrConfig<double> resolve() const {
    CsvqrConfig<double> cfg;
    cfg.C = C;
    cfg.kernel.kind = parse_kernel_kind(kernel);
    cfg.kernel.sigma = sigma.value_or(std::sqrt(double(kFeatureCount)));
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.clamp_output = !no_clamp;
    cfg.validate();
    return cfg;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string command;

  void warn(const std::string& what) const { err << "csvqr " << command << ": warning: " << what << '\n'; }
};

// Each subcommand resolves its flags (usage errors) and returns the action
// to run (data errors).
using Action = std::function<void(const Context&)>;

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::function<Action()> resolve;
};

Command make_ingest(CLI::App& root) {
  auto* sub = root.add_subcommand("ingest", "Validate a wind CSV and write it back in canonical form");
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto zone = std::make_shared<std::optional<int>>();
  sub->add_option("--data", *data, "Input CSV")->required();
  sub->add_option("--out", *out, "Output CSV")->required();
  sub->add_option("--zone", *zone, "Keep only this zone");
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    return [=](const Context& ctx) {
      auto records = load_csv(*data);
      if (*zone) records = select_zone(records, **zone);
      save_csv(*out, records);
      std::set<int> zones;
      Index observed = 0;
      for (const auto& r : records) {
        zones.insert(r.zone);
        observed += r.has_power() ? 1 : 0;
      }
      ctx.out << "records " << records.size() << ", zones " << zones.size() << ", with power " << observed << '\n';
      if (!records.empty())
        ctx.out << "span " << format_hour(records.front().timestamp) << " .. " << format_hour(records.back().timestamp)
                << '\n';
    };
  };
  return cmd;
}

Command make_features(CLI::App& root) {
  auto* sub = root.add_subcommand("features", "Compute the 13 wind features for one zone");
  struct Flags {
    std::string data, out, months;
    int zone = 1;
    double density = 1.0;
  };
  auto f = std::make_shared<Flags>();
  sub->add_option("--data", f->data, "Input CSV")->required();
  sub->add_option("--out", f->out, "Output CSV")->required();
  sub->add_option("--zone", f->zone, "Zone id")->capture_default_str();
  sub->add_option("--months", f->months, "Month range YYYY-MM[:YYYY-MM] (default: all rows)");
  sub->add_option("--density", f->density, "Energy density d in d*ws^3/2")->capture_default_str();
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    FeatureConfig fcfg{f->density};
    fcfg.validate();
    std::optional<std::pair<YearMonth, YearMonth>> range;
    if (!f->months.empty()) range = parse_month_range(f->months);
    return [=](const Context& ctx) {
      auto series = load_zone(f->data, f->zone);
      if (range) series = in_months(series, range->first, range->second);
      const Eigen::MatrixXd X = build_features(series, fcfg);
      auto out = open_output(f->out);
      out << "timestamp";
      for (const auto name : kFeatureNames) out << ',' << name;
      out << '\n';
      for (std::size_t i = 0; i < series.size(); ++i) {
        out << format_hour(series[i].timestamp);
        for (Index c = 0; c < X.cols(); ++c) out << ',' << num(X(Index(i), c));
        out << '\n';
      }
      ctx.out << "rows " << series.size() << ", features " << kFeatureCount << '\n';
    };
  };
  return cmd;
}

Command make_fit(CLI::App& root) {
  auto* sub = root.add_subcommand("fit", "Fit a CSVQR model on a range of months");
  struct Flags {
    std::string data, train, out;
    int zone = 1;
    int thin = 1;
    bool tune = false;
    std::vector<double> grid_C, grid_sigma;
    ModelFlags model;
  };
  auto f = std::make_shared<Flags>();
  sub->add_option("--data", f->data, "Input CSV")->required();
  sub->add_option("--train", f->train, "Training months YYYY-MM[:YYYY-MM]")->required();
  sub->add_option("--out", f->out, "Model file")->required();
  sub->add_option("--zone", f->zone, "Zone id")->capture_default_str();
  sub->add_option("--thin", f->thin, "Keep every k-th training row")->capture_default_str();
  sub->add_flag("--tune", f->tune, "Pick C and sigma on a chronological 20% holdout");
  sub->add_option("--grid-C", f->grid_C, "Tuning grid for C")->delimiter(',');
  sub->add_option("--grid-sigma", f->grid_sigma, "Tuning grid for sigma")->delimiter(',');
  f->model.add_to(*sub);
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    const auto levels = QuantileLevels<double>::parse(f->model.levels);
    const auto cfg = f->model.resolve();
    const auto range = parse_month_range(f->train);
    if (f->thin < 1) throw ValidationError("--thin must be at least 1");
    HyperGrid grid;
    if (!f->grid_C.empty()) grid.C = f->grid_C;
    grid.sigma = f->grid_sigma;
    return [=](const Context& ctx) {
      const auto series = in_months(load_zone(f->data, f->zone), range.first, range.second);
      std::vector<TimeSeriesRecord> kept;
      Index observed = 0;
      for (const auto& r : series)
        if (r.has_power() && observed++ % f->thin == 0) kept.push_back(r);
      if (kept.empty()) throw CoverageError("fit: no observed power in " + f->train);
      const Eigen::MatrixXd X = build_features(kept);
      Eigen::VectorXd y(Index(kept.size()));
      for (std::size_t i = 0; i < kept.size(); ++i) y(Index(i)) = *kept[i].power;
      CsvqrConfig<double> use = cfg;
      if (f->tune) {
        const auto best = tune_hyperparameters(X, y, grid, levels, {0.2, cfg});
        use.C = best.C;
        use.kernel.sigma = best.sigma;
        ctx.out << "tuned C " << num(best.C) << ", sigma " << num(best.sigma) << '\n';
      }
      const auto model = fit(X, y, levels, use);
      save_model(f->out, model);
      const auto& st = model.status();
      ctx.out << "trained on " << kept.size() << " rows, " << levels.size() << " levels; " << st.iterations
              << " steps, max violation " << num(st.max_violation) << '\n';
      if (!st.converged) ctx.warn("fit: solver stopped at the iteration cap before reaching tol");
    };
  };
  return cmd;
}

Command make_predict(CLI::App& root) {
  auto* sub = root.add_subcommand("predict", "Forecast quantiles for every hour of a month range");
  struct Flags {
    std::string data, months, out, model, benchmark;
    std::string levels = "0.1:0.9:0.1";
    int zone = 1;
    long persistence_hours = 12;
  };
  auto f = std::make_shared<Flags>();
  sub->add_option("--data", f->data, "Input CSV (NWP rows of the forecast months, plus history for benchmarks)")
      ->required();
  sub->add_option("--months", f->months, "Forecast months YYYY-MM[:YYYY-MM]")->required();
  sub->add_option("--out", f->out, "Quantile CSV")->required();
  sub->add_option("--zone", f->zone, "Zone id")->capture_default_str();
  auto* model_opt = sub->add_option("--model", f->model, "Model file written by fit");
  auto* bench_opt = sub->add_option("--benchmark", f->benchmark, "persistence, climatology or uniform");
  model_opt->excludes(bench_opt);
  sub->add_option("--levels", f->levels, "Benchmark quantile levels")->capture_default_str();
  sub->add_option("--persistence-hours", f->persistence_hours, "Persistence window")->capture_default_str();
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    if (f->model.empty() == f->benchmark.empty()) throw UsageError("predict needs exactly one of --model or --benchmark");
    const auto range = parse_month_range(f->months);
    const auto levels = QuantileLevels<double>::parse(f->levels);
    std::optional<Method> bench;
    if (!f->benchmark.empty()) {
      bench = parse_method(f->benchmark);
      if (*bench == Method::Csvqr) throw UsageError("--benchmark must be persistence, climatology or uniform");
    }
    if (f->persistence_hours < 1) throw ValidationError("--persistence-hours must be at least 1");
    return [=](const Context& ctx) {
      const auto all = load_zone(f->data, f->zone);
      const auto rows = in_months(all, range.first, range.second);
      std::vector<Hour> ts;
      for (const auto& r : rows) ts.push_back(r.timestamp);
      Eigen::MatrixXd q;
      QuantileLevels<double> used = levels;
      if (!bench) {
        const auto model = load_model(f->model);
        used = model.levels();
        q = rows.empty() ? Eigen::MatrixXd(0, used.size()) : predict(model, build_features(rows));
        if (const Index c = count_crossings(q); c > 0)
          ctx.warn("predict: " + std::to_string(c) + " crossed quantile pairs at forecast points");
      } else {
        std::vector<double> history;
        const Hour begin = month_start(range.first);
        for (const auto& r : all)
          if (r.timestamp < begin && r.has_power()) history.push_back(*r.power);
        const auto h = Index(rows.size());
        switch (*bench) {
          case Method::Persistence: q = persistence_forecast(history, h, levels, f->persistence_hours); break;
          case Method::Climatology: q = climatology_forecast(history, h, levels); break;
          default: q = uniform_forecast(h, levels); break;
        }
      }
      auto out = open_output(f->out);
      write_quantile_csv(out, ts, q, used);
      ctx.out << "forecast " << rows.size() << " hours x " << used.size() << " levels\n";
    };
  };
  return cmd;
}

Command make_evaluate(CLI::App& root) {
  auto* sub = root.add_subcommand("evaluate", "Score a quantile forecast against observed power");
  struct Flags {
    std::string data, forecast, out;
    int zone = 1;
    std::vector<double> coverages = {0.8, 0.6, 0.4, 0.2};
  };
  auto f = std::make_shared<Flags>();
  sub->add_option("--data", f->data, "CSV with observed power")->required();
  sub->add_option("--forecast", f->forecast, "Quantile CSV written by predict")->required();
  sub->add_option("--zone", f->zone, "Zone id")->capture_default_str();
  sub->add_option("--coverages", f->coverages, "Nominal interval coverages")->delimiter(',')->capture_default_str();
  sub->add_option("--out", f->out, "Optional summary CSV");
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    for (const double p : f->coverages)
      if (!(p > 0.0 && p < 1.0)) throw ValidationError("--coverages must lie in (0,1)");
    return [=](const Context& ctx) {
      const auto table = read_quantile_csv(f->forecast);
      std::map<Hour, double> observed;
      for (const auto& r : load_zone(f->data, f->zone))
        if (r.has_power()) observed[r.timestamp] = *r.power;
      std::vector<Index> rows;
      std::vector<double> ys;
      for (std::size_t t = 0; t < table.timestamps.size(); ++t)
        if (auto it = observed.find(table.timestamps[t]); it != observed.end()) {
          rows.push_back(Index(t));
          ys.push_back(it->second);
        }
      if (rows.empty()) throw CoverageError("evaluate: no forecast hour has observed power");
      const Eigen::MatrixXd q = table.q(rows, Eigen::all);
      const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), Index(ys.size()));
      const auto s = aggregate_qscore(q, y, table.levels);
      std::ostringstream summary;
      summary << "metric,pinc,value\n";
      summary << "qscore_mean,," << num(s.mean) << '\n' << "qscore_sd,," << num(s.sd) << '\n';
      ctx.out << "scored " << rows.size() << " hours; Q-score " << fixed(s.mean, 4) << " (sd " << fixed(s.sd, 4)
              << ")\n";
      for (const auto& pi : predict_intervals(q, table.levels, central_pairs(f->coverages))) {
        const double p = picp(pi.lower, pi.upper, y, CrossedInterval::CountAsMiss);
        const double a = ace(p, pi.beta());
        summary << "picp," << fixed(pi.pinc(), 2) << ',' << num(p) << '\n'
                << "ace," << fixed(pi.pinc(), 2) << ',' << num(a) << '\n';
        ctx.out << "PINC " << fixed(pi.pinc(), 0) << "%: PICP " << fixed(p, 2) << ", ACE " << fixed(a, 2) << '\n';
      }
      if (!f->out.empty()) {
        auto out = open_output(f->out);
        out << summary.str();
      }
    };
  };
  return cmd;
}

Command make_backtest(CLI::App& root) {
  auto* sub = root.add_subcommand("backtest", "Sliding-window backtest of CSVQR and the benchmarks");
  struct Flags {
    std::string data, out;
    bool synthetic = false;
    std::uint64_t seed = 7;
    int zone = 1;
    std::string from, to;
    std::string methods = "csvqr,climatology,persistence,uniform";
    std::vector<double> coverages = {0.8, 0.6, 0.4, 0.2};
    std::vector<double> grid_C, grid_sigma;
    bool no_tune = false;
    double holdout = 0.2;
    int thin = 1;
    int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
    int train_months = 3;
    long persistence_hours = 12;
    ModelFlags model;
  };
  auto f = std::make_shared<Flags>();
  auto* data_opt = sub->add_option("--data", f->data, "Input CSV");
  auto* syn_opt = sub->add_flag("--synthetic", f->synthetic, "Use the built-in heteroscedastic wind process");
  data_opt->excludes(syn_opt);
  sub->add_option("--seed", f->seed, "Seed of the synthetic process")->capture_default_str();
  sub->add_option("--out", f->out, "Report directory")->required();
  sub->add_option("--zone", f->zone, "Zone id")->capture_default_str();
  sub->add_option("--from", f->from, "First test month (default 2013-06)");
  sub->add_option("--to", f->to, "Last test month (default 2013-11, or --from with --synthetic)");
  sub->add_option("--methods", f->methods, "Comma list of csvqr, climatology, persistence, uniform")
      ->capture_default_str();
  sub->add_option("--coverages", f->coverages, "Nominal interval coverages")->delimiter(',')->capture_default_str();
  sub->add_option("--grid-C", f->grid_C, "Tuning grid for C (default 0.1,1,10,100)")->delimiter(',');
  sub->add_option("--grid-sigma", f->grid_sigma, "Tuning grid for sigma (default 0.5,1,2,4 x sqrt(13))")
      ->delimiter(',');
  sub->add_flag("--no-tune", f->no_tune, "Use --C and --sigma instead of the grid search");
  sub->add_option("--holdout", f->holdout, "Chronological holdout fraction for tuning")->capture_default_str();
  auto* thin_opt = sub->add_option("--thin", f->thin, "Keep every k-th training row (default 1, or 4 with --synthetic)");
  sub->add_option("--jobs", f->jobs, "Worker threads")->capture_default_str();
  sub->add_option("--train-months", f->train_months, "Training window length in months")->capture_default_str();
  sub->add_option("--persistence-hours", f->persistence_hours, "Persistence window")->capture_default_str();
  f->model.add_to(*sub);
  Command cmd{sub, {}, {}};
  cmd.resolve = [=]() -> Action {
    if (f->data.empty() && !f->synthetic) throw UsageError("backtest needs --data or --synthetic");
    BacktestConfig cfg;
    cfg.methods = parse_methods(f->methods);
    cfg.levels = QuantileLevels<double>::parse(f->model.levels);
    cfg.coverages = f->coverages;
    if (!f->grid_C.empty()) cfg.grid.C = f->grid_C;
    cfg.grid.sigma = f->grid_sigma;
    cfg.tune = !f->no_tune;
    cfg.csvqr = f->model.resolve();
    cfg.holdout_fraction = f->holdout;
    // The synthetic run is a quick self-check, so it thins by default.
    cfg.thinning = thin_opt->count() > 0 ? f->thin : (f->synthetic ? 4 : 1);
    cfg.jobs = f->jobs;
    cfg.train_months = f->train_months;
    cfg.persistence_hours = f->persistence_hours;
    cfg.validate();
    const YearMonth from = parse_month(f->from.empty() ? "2013-06" : f->from);
    const YearMonth to = !f->to.empty() ? parse_month(f->to) : (f->synthetic ? from : parse_month("2013-11"));
    if (to < from) throw ValidationError("--to precedes --from");
    return [=](const Context& ctx) {
      std::vector<TimeSeriesRecord> series =
          f->synthetic ? synthetic_wind_records(from - std::chrono::months{cfg.train_months}, to, f->seed, f->zone)
                       : load_zone(f->data, f->zone);
      const BacktestReport report = run_backtest(series, from, to, cfg);
      export_report(report, f->out);
      for (const auto& w : report.warnings) ctx.warn(w);
      ctx.out << "month    method       qscore  ";
      for (const double p : cfg.coverages) ctx.out << " ACE" << fixed(100 * p, 0) << (p < 0.095 ? "  " : " ");
      ctx.out << '\n';
      for (const auto& row : report.qscore) {
        char head[64];
        std::snprintf(head, sizeof head, "%-8s %-12s %.4f  ", row.month.c_str(), to_string(row.method).c_str(),
                      row.mean);
        ctx.out << head;
        for (const auto& rel : report.reliability)
          if (rel.month == row.month && rel.method == row.method) {
            char cell[16];
            std::snprintf(cell, sizeof cell, " %6.2f", rel.ace);
            ctx.out << cell;
          }
        ctx.out << '\n';
      }
      ctx.out << "report written to " << f->out << '\n';
    };
  };
  return cmd;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-crossing kernel quantile regression for probabilistic wind power forecasting", "csvqr"};
  app.require_subcommand(1);
  std::vector<Command> commands = {make_ingest(app), make_features(app), make_fit(app),
                                   make_predict(app), make_evaluate(app), make_backtest(app)};
  // Required flags may come from a config file, so their presence is checked
  // only after the file has been applied.
  std::vector<std::vector<CLI::Option*>> required(commands.size());
  for (std::size_t k = 0; k < commands.size(); ++k) {
    auto& c = commands[k];
    c.app->add_option("--config", c.config_path, "key=value file supplying any flag; flags override it");
    for (CLI::Option* opt : c.app->get_options())
      if (opt->get_required()) {
        required[k].push_back(opt);
        opt->required(false);
        opt->description(opt->get_description() + " (required)");
      }
  }

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e, out, err);
    return status == 0 ? kExitOk : kExitUsage;
  }

  std::size_t chosen = 0;
  for (std::size_t k = 0; k < commands.size(); ++k)
    if (commands[k].app->parsed()) chosen = k;
  Command* cmd = &commands[chosen];
  const Context ctx{out, err, cmd->app->get_name()};

  Action action;
  try {
    if (!cmd->config_path.empty()) apply_config_file(*cmd->app, cmd->config_path);
    for (const CLI::Option* opt : required[chosen])
      if (opt->count() == 0) throw UsageError(opt->get_name() + " is required");
    action = cmd->resolve();
  } catch (const std::exception& e) {
    err << "csvqr " << ctx.command << ": usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    action(ctx);
  } catch (const std::exception& e) {
    err << "csvqr " << ctx.command << ": error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace csvqr::cli
