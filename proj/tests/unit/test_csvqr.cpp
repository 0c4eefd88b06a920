#include <doctest.h>

#include "csvqr/csvqr.hpp"
#include "csvqr/metrics.hpp"
#include "oracle/primal_qp.hpp"

#include <cmath>
#include <random>

using namespace csvqr;

namespace {

struct Instance {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Instance random_instance(Index n, Index p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Instance in{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < p; ++k) in.X(i, k) = u(rng);
    in.y(i) = 0.5 + 0.3 * std::sin(4.0 * in.X(i, 0)) + 0.2 * in.X(i, 0) * z(rng);
  }
  return in;
}

// Random point inside the feasible box (lambda in [0, 2C]).
DualSolution<double> random_feasible(const QuantileLevels<double>& levels, Index n, double C, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto d = DualSolution<double>::zeros(levels.size(), n);
  for (Index m = 0; m < levels.size(); ++m)
    for (Index i = 0; i < n; ++i) {
      d.alpha_plus(m, i) = u(rng) * levels[m] * C;
      d.alpha_minus(m, i) = u(rng) * (1.0 - levels[m]) * C;
    }
  for (Index i = 0; i < d.lambda.size(); ++i) d.lambda.data()[i] = 2.0 * C * u(rng);
  return d;
}

// The dual written out term by term with explicit loops over points.
double dense_dual(const DualSolution<double>& dual, const Eigen::MatrixXd& G, const Eigen::VectorXd& y) {
  const Index M = dual.levels(), N = dual.points();
  auto lam = [&](Index m, Index i) { return (m <= 0 || m >= M) ? 0.0 : dual.lambda(m - 1, i); };
  double value = 0.0;
  for (Index m = 0; m < M; ++m) {
    for (Index i = 0; i < N; ++i) {
      const double ai = dual.alpha_plus(m, i) - dual.alpha_minus(m, i);
      const double di = lam(m + 1, i) - lam(m, i);
      value += ai * y(i);
      for (Index j = 0; j < N; ++j) {
        const double aj = dual.alpha_plus(m, j) - dual.alpha_minus(m, j);
        const double dj = lam(m + 1, j) - lam(m, j);
        value += -0.5 * ai * G(i, j) * aj - 0.5 * di * G(i, j) * dj + ai * G(i, j) * dj;
      }
    }
  }
  return value;
}

CsvqrConfig<double> rbf_config(double C, double sigma, double tol = 1e-6) {
  CsvqrConfig<double> cfg;
  cfg.C = C;
  cfg.kernel = KernelSpec<double>::rbf(sigma);
  cfg.tol = tol;
  cfg.crossing_tol = 1e-9;
  cfg.max_iter = 100000;
  return cfg;
}

double slack_term(const CsvqrModel<double>& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd f = decision_values(model, X);
  double s = 0.0;
  for (Index m = 0; m < f.cols(); ++m)
    for (Index i = 0; i < y.size(); ++i) s += pinball(y(i) - f(i, m), model.levels()[m]);
  return s;
}

}  // namespace

TEST_CASE("dual value of the zero dual is zero") {
  const auto in = random_instance(4, 2, 1);
  const auto levels = QuantileLevels<double>({0.3, 0.7});
  const Eigen::MatrixXd G = gram(KernelSpec<double>::rbf(1.0), in.X);
  CHECK(dual_objective(DualSolution<double>::zeros(2, 4), G, in.y, levels, 1.0) == 0.0);
}

TEST_CASE("dual value on one point with one level is -a^2/2 + a y") {
  const auto levels = QuantileLevels<double>({0.5});
  auto d = DualSolution<double>::zeros(1, 1);
  d.alpha_plus(0, 0) = 0.3;
  const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.8);
  CHECK(dual_objective(d, G, y, levels, 1.0) == doctest::Approx(-0.5 * 0.09 + 0.3 * 0.8).epsilon(1e-15));
}

TEST_CASE("dual value matches the term-by-term expansion") {
  const auto levels = QuantileLevels<double>({0.25, 0.75});
  for (unsigned seed = 0; seed < 10; ++seed) {
    const auto in = random_instance(4, 3, seed);
    const Eigen::MatrixXd G = gram(KernelSpec<double>::rbf(0.8), in.X);
    const auto d = random_feasible(levels, 4, 3.0, 100 + seed);
    const double expected = dense_dual(d, G, in.y);
    CHECK(std::abs(dual_objective(d, G, in.y, levels, 3.0) - expected) <= 1e-10);
  }
}

TEST_CASE("dual gradient at zero is y for alpha+ and zero for lambda") {
  const auto in = random_instance(5, 2, 3);
  const auto levels = QuantileLevels<double>({0.2, 0.5, 0.8});
  const Eigen::MatrixXd G = gram(KernelSpec<double>::rbf(1.0), in.X);
  const auto g = dual_gradient(DualSolution<double>::zeros(3, 5), G, in.y, levels, 1.0);
  for (Index m = 0; m < 3; ++m) CHECK(g.alpha_plus.row(m) == in.y.transpose());
  CHECK(g.lambda.isZero(0));
}

TEST_CASE("dual gradient matches central finite differences") {
  const auto levels = QuantileLevels<double>({0.2, 0.5, 0.8});
  const double h = 1e-5;
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto in = random_instance(5, 2, 20 + seed);
    const Eigen::MatrixXd G = gram(KernelSpec<double>::rbf(0.7), in.X);
    const auto d = random_feasible(levels, 5, 2.0, 40 + seed);
    const auto g = dual_gradient(d, G, in.y, levels, 2.0);
    auto check = [&](Eigen::MatrixXd DualSolution<double>::*field, const Eigen::MatrixXd& grad) {
      for (Index k = 0; k < grad.size(); ++k) {
        auto up = d, down = d;
        (up.*field).data()[k] += h;
        (down.*field).data()[k] -= h;
        const double fd = (dual_objective(up, G, in.y, levels, 2.0) - dual_objective(down, G, in.y, levels, 2.0)) / (2 * h);
        CHECK(std::abs(grad.data()[k] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
    };
    check(&DualSolution<double>::alpha_plus, g.alpha_plus);
    check(&DualSolution<double>::alpha_minus, g.alpha_minus);
    check(&DualSolution<double>::lambda, g.lambda);
  }
}

TEST_CASE("all-zero targets give the zero dual and zero predictions") {
  const auto in = random_instance(8, 2, 5);
  const auto model = solve(in.X, Eigen::VectorXd::Zero(8), QuantileLevels<double>::deciles(), rbf_config(10, 1));
  CHECK(model.status().converged);
  CHECK(model.dual().alpha_plus.isZero(0));
  CHECK(model.dual().alpha_minus.isZero(0));
  CHECK(model.dual().lambda.isZero(0));
  CHECK(predict(model, in.X).isZero(0));
}

TEST_CASE("six-point two-level fit matches the primal oracle") {
  const auto in = random_instance(6, 2, 7);
  const auto levels = QuantileLevels<double>({0.25, 0.75});
  const auto cfg = rbf_config(10, 1);
  const auto model = solve(in.X, in.y, levels, cfg);
  REQUIRE(model.status().converged);
  const Eigen::MatrixXd G = gram(cfg.kernel, in.X);
  const Eigen::MatrixXd expected = oracle::primal_fit(G, in.y, levels.values(), cfg.C);
  const Eigen::MatrixXd fitted = decision_values(model, in.X);
  CHECK((fitted - expected).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("random small instances match the primal oracle and never cross") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const Index N = 4 + Index(u(rng) * 17);  // 4..20
    const Index M = 1 + Index(u(rng) * 3);   // 1..3
    std::vector<double> taus;
    for (Index m = 0; m < M; ++m) taus.push_back((double(m) + 0.2 + 0.6 * u(rng)) / double(M));
    const auto levels = QuantileLevels<double>(taus);
    const double C = u(rng) < 0.5 ? 1.0 : 10.0;
    const double sigma = 0.5 + 1.5 * u(rng);
    const auto in = random_instance(N, 2, 500 + unsigned(trial));
    const auto cfg = rbf_config(C, sigma);
    const auto model = solve(in.X, in.y, levels, cfg);
    CAPTURE(trial);
    CHECK(model.status().converged);
    const Eigen::MatrixXd expected = oracle::primal_fit(gram(cfg.kernel, in.X), in.y, taus, C);
    const Eigen::MatrixXd fitted = decision_values(model, in.X);
    CHECK((fitted - expected).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(count_crossings(fitted, 1e-6) == 0);
  }
}

TEST_CASE("one level fitted alone equals the same level of an uncoupled multi-level fit") {
  const auto in = random_instance(40, 2, 9);
  auto cfg = rbf_config(1, 1, 1e-11);
  cfg.crossing_tol = 1e-12;
  const auto multi = solve(in.X, in.y, QuantileLevels<double>({0.1, 0.5, 0.9}), cfg);
  // With well-separated levels no ordering constraint binds, so the levels decouple.
  REQUIRE(multi.dual().lambda.isZero(0));
  const auto single = solve(in.X, in.y, QuantileLevels<double>({0.5}), cfg);
  REQUIRE(single.status().converged);
  CHECK(single.dual().lambda.rows() == 0);
  const Eigen::MatrixXd a = decision_values(single, in.X);
  const Eigen::MatrixXd b = decision_values(multi, in.X);
  CHECK((a.col(0) - b.col(1)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("predictions of the zero dual are zero") {
  const auto in = random_instance(3, 2, 1);
  const auto levels = QuantileLevels<double>({0.5});
  const CsvqrModel<double> model(in.X, DualSolution<double>::zeros(1, 3), levels, rbf_config(1, 1), std::nullopt, {});
  CHECK(predict(model, random_instance(5, 2, 2).X).isZero(0));
}

TEST_CASE("a single support point with alpha+ 0.7 predicts 0.7 at itself") {
  Eigen::MatrixXd X(1, 2);
  X << 0.3, 0.6;
  auto d = DualSolution<double>::zeros(1, 1);
  d.alpha_plus(0, 0) = 0.7;
  const CsvqrModel<double> model(X, d, QuantileLevels<double>({0.5}), rbf_config(1, 1), std::nullopt, {});
  CHECK(predict(model, X)(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(predict(model, Eigen::MatrixXd::Zero(1, 3)), DimensionError);
}

TEST_CASE("kkt violation is within tolerance at a solution") {
  const auto in = random_instance(15, 2, 11);
  const auto levels = QuantileLevels<double>({0.1, 0.5, 0.9});
  auto cfg = rbf_config(10, 0.7, 1e-4);
  const auto model = solve(in.X, in.y, levels, cfg);
  REQUIRE(model.status().converged);
  const Eigen::MatrixXd G = gram(cfg.kernel, in.X);
  // alpha+ and alpha- are recovered from their difference, so either side may
  // carry the a-variable violation; lambda gradients are bounded by crossing_tol.
  CHECK(kkt_violation(model.dual(), G, in.y, levels, cfg.C) <= cfg.tol);
}

TEST_CASE("kkt violation of the zero dual on one point is the target") {
  const auto levels = QuantileLevels<double>({0.5});
  const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.6);
  CHECK(kkt_violation(DualSolution<double>::zeros(1, 1), G, y, levels, 1.0) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("a variable at its bound with the gradient pointing outward contributes nothing") {
  const auto levels = QuantileLevels<double>({0.5});
  const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 10.0);
  auto d = DualSolution<double>::zeros(1, 1);
  d.alpha_plus(0, 0) = 0.5;  // upper bound tau C with C = 1; gradient 9.5 > 0
  CHECK(kkt_violation(d, G, y, levels, 1.0) == 0.0);
}

TEST_CASE("primal value of the zero model on zero targets is zero") {
  const auto in = random_instance(4, 2, 1);
  const auto model = solve(in.X, Eigen::VectorXd::Zero(4), QuantileLevels<double>({0.5}), rbf_config(1, 1));
  CHECK(primal_objective(model, in.X, Eigen::VectorXd::Zero(4)) == 0.0);
}

TEST_CASE("duality gap closes at convergence") {
  for (unsigned seed = 0; seed < 4; ++seed) {
    const auto in = random_instance(25, 2, 60 + seed);
    const auto levels = QuantileLevels<double>({0.2, 0.4, 0.6, 0.8});
    const auto cfg = rbf_config(seed % 2 ? 10.0 : 1.0, 0.8, 1e-5);
    const auto model = solve(in.X, in.y, levels, cfg);
    REQUIRE(model.status().converged);
    const double primal = primal_objective(model, in.X, in.y);
    const double dual = model.status().dual_objective;
    CHECK(primal - dual >= -1e-9 * (1 + std::abs(primal)));
    CHECK(primal - dual <= 1e-3 * (1 + std::abs(primal)));
  }
}

TEST_CASE("increasing C weakly decreases the slack term on a crossing-prone instance") {
  // Closely spaced levels and a narrow kernel make independent fits cross.
  const auto in = random_instance(30, 1, 13);
  const auto levels = QuantileLevels<double>({0.45, 0.5, 0.55});
  double previous = std::numeric_limits<double>::infinity();
  bool ordering_binds = false;
  for (const double C : {0.1, 1.0, 10.0}) {
    const auto model = solve(in.X, in.y, levels, rbf_config(C, 0.1, 1e-7));
    REQUIRE(model.status().converged);
    ordering_binds = ordering_binds || model.dual().lambda.maxCoeff() > 0;
    const double slack = slack_term(model, in.X, in.y);
    CHECK(slack <= previous + 1e-6);
    previous = slack;
  }
  CHECK(ordering_binds);
}

TEST_CASE("the dual value never decreases during a solve") {
  const auto in = random_instance(120, 3, 17);
  std::vector<double> trace;
  const auto model = solve(in.X, in.y, QuantileLevels<double>::deciles(), rbf_config(10, 0.5, 1e-4),
                           SolveObserver<double>([&](const SolverTrace<double>& t) { trace.push_back(t.objective); }));
  REQUIRE(trace.size() > 2);
  for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] >= trace[k - 1] - 1e-10 * (1 + std::abs(trace[k])));
  CHECK(model.status().dual_objective >= trace.back() - 1e-10);
}

TEST_CASE("training fits never cross across a range of problems") {
  for (unsigned seed = 0; seed < 6; ++seed) {
    const auto in = random_instance(80, 2, 300 + seed);
    const auto model = solve(in.X, in.y, QuantileLevels<double>::deciles(), rbf_config(seed < 3 ? 1.0 : 10.0, 0.3, 1e-3));
    CHECK(count_crossings(decision_values(model, in.X), 1e-6) == 0);
  }
}

TEST_CASE("hitting the iteration cap is reported, not thrown") {
  const auto in = random_instance(60, 2, 19);
  auto cfg = rbf_config(100, 0.3, 1e-8);
  cfg.max_iter = 1;
  const auto model = solve(in.X, in.y, QuantileLevels<double>::deciles(), cfg);
  CHECK_FALSE(model.status().converged);
  CHECK(model.status().max_violation > 0);
}

TEST_CASE("fit scales raw features and predict applies the same scaling") {
  auto in = random_instance(30, 2, 23);
  Eigen::MatrixXd raw = in.X;
  raw.col(0) = 100.0 * raw.col(0).array() + 5.0;
  raw.col(1) = -3.0 * raw.col(1);
  const auto levels = QuantileLevels<double>({0.25, 0.5, 0.75});
  const auto cfg = rbf_config(1, 1, 1e-6);
  const auto fitted = fit(raw, in.y, levels, cfg);
  REQUIRE(fitted.scaler());
  const Eigen::MatrixXd scaled = apply_minmax(*fitted.scaler(), raw);
  const auto direct = solve(scaled, in.y, levels, cfg);
  CHECK((decision_values(fitted, raw) - decision_values(direct, scaled)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("clamped predictions stay in the unit interval") {
  auto in = random_instance(20, 2, 29);
  in.y.array() -= 0.8;
  auto cfg = rbf_config(10, 0.5, 1e-4);
  const auto clamped = solve(in.X, in.y, QuantileLevels<double>({0.1, 0.9}), cfg);
  const Eigen::MatrixXd q = predict(clamped, in.X);
  CHECK(q.minCoeff() >= 0.0);
  CHECK(q.maxCoeff() <= 1.0);
  cfg.clamp_output = false;
  const auto raw = solve(in.X, in.y, QuantileLevels<double>({0.1, 0.9}), cfg);
  CHECK((predict(raw, in.X).array() < 0.0).any());
}

TEST_CASE("solve validates its inputs") {
  const auto in = random_instance(5, 2, 1);
  const auto levels = QuantileLevels<double>({0.5});
  auto cfg = rbf_config(1, 1);
  CHECK_THROWS_AS(solve(in.X, Eigen::VectorXd::Zero(4), levels, cfg), DimensionError);
  Eigen::MatrixXd bad = in.X;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(solve(bad, in.y, levels, cfg), ValidationError);
  cfg.C = -1;
  CHECK_THROWS_AS(solve(in.X, in.y, levels, cfg), ValidationError);
  cfg = rbf_config(1, 1);
  cfg.tol = 0;
  CHECK_THROWS_AS(solve(in.X, in.y, levels, cfg), ValidationError);
}

TEST_CASE("interval pairs map to nominal coverages") {
  const auto levels = QuantileLevels<double>::deciles();
  const Eigen::MatrixXd q = Eigen::RowVectorXd::LinSpaced(9, 0.1, 0.9).replicate(3, 1);
  const auto pis = predict_intervals(q, levels, central_pairs(std::vector<double>{0.8, 0.6, 0.4, 0.2}));
  REQUIRE(pis.size() == 4);
  CHECK(pis[0].tau_lower == 0.1);
  CHECK(pis[0].tau_upper == 0.9);
  CHECK(pis[0].pinc() == doctest::Approx(80.0));
  CHECK(pis[3].tau_lower == 0.4);
  CHECK(pis[3].tau_upper == 0.6);
  CHECK(pis[3].pinc() == doctest::Approx(20.0));
  CHECK(pis[3].beta() == doctest::Approx(0.8));
  CHECK_THROWS_AS(predict_intervals(q, levels, {{0.5, 0.4}}), ValidationError);
  CHECK_THROWS_AS(predict_intervals(q, levels, {{0.15, 0.9}}), ValidationError);
}

TEST_CASE("the estimator runs in single precision") {
  const auto in = random_instance(20, 2, 31);
  const auto levels_d = QuantileLevels<double>({0.25, 0.75});
  const auto levels_f = QuantileLevels<float>({0.25f, 0.75f});
  CsvqrConfig<float> cfg_f;
  cfg_f.C = 1.0f;
  cfg_f.kernel = KernelSpec<float>::rbf(1.0f);
  cfg_f.tol = 1e-4f;
  cfg_f.crossing_tol = 1e-5f;
  cfg_f.max_iter = 100000;
  const auto mf = solve(Eigen::MatrixXf(in.X.cast<float>()), Eigen::VectorXf(in.y.cast<float>()), levels_f, cfg_f);
  const auto md = solve(in.X, in.y, levels_d, rbf_config(1, 1, 1e-6));
  const Eigen::MatrixXd pf = decision_values(mf, Eigen::MatrixXf(in.X.cast<float>())).cast<double>();
  CHECK((pf - decision_values(md, in.X)).cwiseAbs().maxCoeff() <= 1e-2);
}
