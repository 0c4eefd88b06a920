#include <doctest.h>

#include "csvqr/cli.hpp"
#include "csvqr/dataset.hpp"
#include "csvqr/synthetic.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace csvqr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "csvqr");
  std::ostringstream out, err;
  const int status = cli::dispatch(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// A scratch directory holding four months of synthetic zone-1 data.
struct Workspace {
  fs::path dir;
  fs::path data;

  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / name), data(dir / "wind.csv") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_csv(data, synthetic_wind_records(parse_month("2013-03"), parse_month("2013-06"), 3));
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& file) const { return (dir / file).string(); }
};

}  // namespace

TEST_CASE("help exits cleanly and lists the subcommands") {
  const auto r = run({"--help"});
  CHECK(r.status == cli::kExitOk);
  for (const char* sub : {"ingest", "features", "fit", "predict", "evaluate", "backtest"})
    CHECK(r.out.find(sub) != std::string::npos);
  CHECK(run({"backtest", "--help"}).status == cli::kExitOk);
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run({}).status == cli::kExitUsage);
  CHECK(run({"frobnicate"}).status == cli::kExitUsage);
  CHECK(run({"fit", "--data", "x.csv"}).status == cli::kExitUsage);
  CHECK(run({"backtest", "--out", "/tmp/x"}).status == cli::kExitUsage);  // neither --data nor --synthetic
  const auto r = run({"fit", "--data", "x.csv", "--train", "2013-03", "--out", "m", "--C", "-1"});
  CHECK(r.status == cli::kExitUsage);
  CHECK(r.err.find("usage error") != std::string::npos);
}

TEST_CASE("data errors exit with status 3") {
  const auto r = run({"ingest", "--data", "/nonexistent/wind.csv", "--out", "/tmp/never.csv"});
  CHECK(r.status == cli::kExitData);
  CHECK(r.err.find("csvqr ingest: error:") != std::string::npos);
}

TEST_CASE("ingest and features write canonical files") {
  const Workspace ws("csvqr_cli_ingest");
  REQUIRE(run({"ingest", "--data", ws.data.string(), "--out", ws / "canon.csv"}).status == 0);
  CHECK(slurp(ws / "canon.csv") == slurp(ws.data));

  REQUIRE(run({"features", "--data", ws.data.string(), "--out", ws / "feat.csv", "--months", "2013-06"}).status == 0);
  const auto feat = lines(slurp(ws / "feat.csv"));
  REQUIRE(feat.size() == 1 + 720);
  CHECK(std::count(feat[0].begin(), feat[0].end(), ',') == 13);
}

TEST_CASE("fit, predict and evaluate run end to end") {
  const Workspace ws("csvqr_cli_e2e");
  const auto fit = run({"fit", "--data", ws.data.string(), "--train", "2013-03:2013-05", "--out", ws / "m.model",
                        "--thin", "8", "--levels", "0.1,0.5,0.9"});
  REQUIRE(fit.status == 0);
  CHECK(fit.out.find("trained on 276 rows, 3 levels") != std::string::npos);

  REQUIRE(run({"predict", "--data", ws.data.string(), "--model", ws / "m.model", "--months", "2013-06", "--out",
               ws / "q.csv"})
              .status == 0);
  const auto q = lines(slurp(ws / "q.csv"));
  REQUIRE(q.size() == 1 + 720);
  for (std::size_t k = 1; k < q.size(); ++k) CHECK(std::count(q[k].begin(), q[k].end(), ',') == 3);

  const auto ev = run({"evaluate", "--data", ws.data.string(), "--forecast", ws / "q.csv", "--coverages", "0.8"});
  REQUIRE(ev.status == 0);
  CHECK(ev.out.find("scored 720 hours") != std::string::npos);
  CHECK(ev.out.find("PINC 80%") != std::string::npos);

  REQUIRE(run({"predict", "--data", ws.data.string(), "--benchmark", "climatology", "--months", "2013-06", "--out",
               ws / "clim.csv"})
              .status == 0);
  CHECK(lines(slurp(ws / "clim.csv")).size() == 1 + 720);
  CHECK(run({"predict", "--data", ws.data.string(), "--months", "2013-06", "--out", ws / "x.csv"}).status ==
        cli::kExitUsage);
}

TEST_CASE("a config file supplies flags and the command line overrides it") {
  const Workspace ws("csvqr_cli_config");
  {
    std::ofstream cfg(ws / "run.cfg");
    cfg << "# backtest settings\n"
        << "synthetic = true\n"
        << "methods = uniform,climatology\n"
        << "out = " << (ws / "from_config") << "\n"
        << "coverages = 0.8\n";
  }
  REQUIRE(run({"backtest", "--config", ws / "run.cfg"}).status == 0);
  CHECK(lines(slurp(fs::path(ws / "from_config") / "reliability.csv")).size() == 1 + 2);

  REQUIRE(run({"backtest", "--config", ws / "run.cfg", "--out", ws / "override", "--methods", "uniform"}).status == 0);
  CHECK(fs::exists(fs::path(ws / "override") / "qscore.csv"));
  CHECK_FALSE(fs::exists(fs::path(ws / "from_config") / "override"));
  CHECK(lines(slurp(fs::path(ws / "override") / "reliability.csv")).size() == 1 + 1);

  {
    std::ofstream bad(ws / "bad.cfg");
    bad << "no-such-key = 1\n";
  }
  const auto r = run({"backtest", "--config", ws / "bad.cfg", "--synthetic", "--out", ws / "x"});
  CHECK(r.status == cli::kExitUsage);
  CHECK(r.err.find("unknown key 'no-such-key'") != std::string::npos);
}

TEST_CASE("the installed binary runs a synthetic backtest") {
  const char* bin = std::getenv("CSVQR_BIN");
  if (bin == nullptr) {
    MESSAGE("CSVQR_BIN is not set; skipping the binary smoke test");
    return;
  }
  const Workspace ws("csvqr_cli_binary");
  const std::string out = ws / "report";
  const std::string cmd = std::string(bin) + " backtest --synthetic --methods uniform,persistence --out " + out +
                          " > " + (ws / "log.txt") + " 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  for (const char* f : {"reliability.csv", "qscore.csv", "fanchart_2013-06.csv"}) CHECK(fs::exists(fs::path(out) / f));
  CHECK(std::system((std::string(bin) + " no-such-command > /dev/null 2>&1").c_str()) != 0);
}
