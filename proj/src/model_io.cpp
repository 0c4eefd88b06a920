#include "csvqr/model_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace csvqr {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows(std::ostream& out, const Eigen::MatrixXd& A) {
  for (Index r = 0; r < A.rows(); ++r) {
    for (Index c = 0; c < A.cols(); ++c) out << (c ? " " : "") << num(A(r, c));
    out << '\n';
  }
}

class Reader {
public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect(const std::string& key) {
    std::string got;
    if (!(in_ >> got) || got != key) fail("expected '" + key + "', found '" + got + "'");
  }
  std::string word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of file");
    return w;
  }
  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) fail("cannot parse number '" + w + "'");
    return v;
  }
  long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size()) fail("cannot parse integer '" + w + "'");
    return v;
  }
  Eigen::MatrixXd matrix(const std::string& key, Index rows, Index cols) {
    expect(key);
    if (integer() != rows || integer() != cols) fail(key + ": unexpected dimensions");
    Eigen::MatrixXd A(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) A(r, c) = number();
    return A;
  }
  [[noreturn]] void fail(const std::string& what) { throw ValidationError("model file: " + what); }

private:
  std::istream& in_;
};

}  // namespace

void write_model(std::ostream& out, const CsvqrModel<double>& model) {
  const auto& cfg = model.config();
  const auto& levels = model.levels();
  out << "CSVQR-MODEL " << kModelFormatVersion << '\n';
  out << "levels " << levels.size();
  for (double t : levels.values()) out << ' ' << num(t);
  out << '\n';
  out << "kernel " << to_string(cfg.kernel.kind) << ' ' << num(cfg.kernel.sigma) << '\n';
  out << "C " << num(cfg.C) << '\n';
  out << "tol " << num(cfg.tol) << '\n';
  out << "crossing_tol " << num(cfg.crossing_tol) << '\n';
  out << "max_iter " << cfg.max_iter << '\n';
  out << "clamp " << (cfg.clamp_output ? 1 : 0) << '\n';
  const auto& st = model.status();
  out << "status " << (st.converged ? 1 : 0) << ' ' << st.iterations << ' ' << num(st.max_violation) << ' '
      << num(st.dual_objective) << '\n';
  if (const auto& sc = model.scaler()) {
    out << "scaler " << sc->columns() << '\n';
    write_rows(out, sc->min.transpose());
    write_rows(out, sc->max.transpose());
  } else {
    out << "scaler none\n";
  }
  const auto& X = model.support_features();
  out << "support " << X.rows() << ' ' << X.cols() << '\n';
  write_rows(out, X);
  const auto& d = model.dual();
  out << "alpha_plus " << d.alpha_plus.rows() << ' ' << d.alpha_plus.cols() << '\n';
  write_rows(out, d.alpha_plus);
  out << "alpha_minus " << d.alpha_minus.rows() << ' ' << d.alpha_minus.cols() << '\n';
  write_rows(out, d.alpha_minus);
  out << "lambda " << d.lambda.rows() << ' ' << d.lambda.cols() << '\n';
  write_rows(out, d.lambda);
  out << "end\n";
}

CsvqrModel<double> read_model(std::istream& in) {
  Reader r(in);
  r.expect("CSVQR-MODEL");
  const long version = r.integer();
  if (version != kModelFormatVersion) r.fail("unsupported version " + std::to_string(version));

  r.expect("levels");
  const long M = r.integer();
  if (M < 1) r.fail("no levels");
  std::vector<double> taus;
  for (long m = 0; m < M; ++m) taus.push_back(r.number());
  QuantileLevels<double> levels(std::move(taus));

  CsvqrConfig<double> cfg;
  r.expect("kernel");
  cfg.kernel.kind = parse_kernel_kind(r.word());
  cfg.kernel.sigma = r.number();
  r.expect("C");
  cfg.C = r.number();
  r.expect("tol");
  cfg.tol = r.number();
  r.expect("crossing_tol");
  cfg.crossing_tol = r.number();
  r.expect("max_iter");
  cfg.max_iter = r.integer();
  r.expect("clamp");
  cfg.clamp_output = r.integer() != 0;
  cfg.validate();

  SolveStatus<double> st;
  r.expect("status");
  st.converged = r.integer() != 0;
  st.iterations = r.integer();
  st.max_violation = r.number();
  st.dual_objective = r.number();

  std::optional<MinMaxScaler<double>> scaler;
  r.expect("scaler");
  const std::string sw = r.word();
  if (sw != "none") {
    const long p = std::strtol(sw.c_str(), nullptr, 10);
    if (p < 1) r.fail("bad scaler width '" + sw + "'");
    MinMaxScaler<double> s{Eigen::VectorXd(p), Eigen::VectorXd(p)};
    for (long c = 0; c < p; ++c) s.min(c) = r.number();
    for (long c = 0; c < p; ++c) s.max(c) = r.number();
    scaler = std::move(s);
  }

  r.expect("support");
  const long N = r.integer();
  const long P = r.integer();
  if (N < 1 || P < 1) r.fail("empty support set");
  Eigen::MatrixXd X(N, P);
  for (long i = 0; i < N; ++i)
    for (long c = 0; c < P; ++c) X(i, c) = r.number();

  DualSolution<double> dual;
  dual.alpha_plus = r.matrix("alpha_plus", M, N);
  dual.alpha_minus = r.matrix("alpha_minus", M, N);
  dual.lambda = r.matrix("lambda", M - 1, N);
  r.expect("end");
  return CsvqrModel<double>(std::move(X), std::move(dual), std::move(levels), cfg, std::move(scaler), st);
}

void save_model(const std::filesystem::path& path, const CsvqrModel<double>& model) {
  std::ofstream out(path);
  if (!out) throw IoError("model: cannot write " + path.string());
  write_model(out, model);
  if (!out) throw IoError("model: write failed for " + path.string());
}

CsvqrModel<double> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("model: cannot open " + path.string());
  return read_model(in);
}

}  // namespace csvqr
