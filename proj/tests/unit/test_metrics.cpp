#include <doctest.h>

#include "csvqr/metrics.hpp"

#include <cmath>

using namespace csvqr;

TEST_CASE("pinball loss hand values") {
  CHECK(pinball(2.0, 0.5) == 1.0);
  CHECK(pinball(-1.0, 0.9) == doctest::Approx(0.1).epsilon(1e-15));
  for (const double tau : {0.1, 0.5, 0.9}) CHECK(pinball(0.0, tau) == 0.0);
  CHECK_THROWS_AS(pinball(1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(pinball(1.0, 1.0), ValidationError);
}

TEST_CASE("quantile score hand values") {
  CHECK(quantile_score(0.5, 1.0, 0.8) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(quantile_score(0.5, 0.5, 0.3) == 0.0);
  CHECK(quantile_score(0.7, 0.5, 0.3) == doctest::Approx(0.14).epsilon(1e-15));
}

TEST_CASE("picp counts observations inside the closed interval") {
  const Eigen::Vector4d lo(0.0, 0.0, 0.0, 0.0), hi(1.0, 1.0, 1.0, 1.0);
  CHECK(picp(lo, hi, Eigen::Vector4d(0.0, 0.5, 1.0, 0.2)) == 100.0);
  CHECK(picp(lo, hi, Eigen::Vector4d(0.5, 2.0, -1.0, 0.2)) == 50.0);
  CHECK(picp(lo, hi, Eigen::Vector4d(3.0, 2.0, -1.0, -0.2)) == 0.0);
}

TEST_CASE("picp rejects crossed intervals unless asked to count them as misses") {
  const Eigen::Vector2d lo(0.0, 0.6), hi(1.0, 0.4), y(0.5, 0.5);
  CHECK_THROWS_AS(picp(lo, hi, y), ValidationError);
  CHECK(picp(lo, hi, y, CrossedInterval::CountAsMiss) == 50.0);
  CHECK_THROWS_AS(picp(lo, Eigen::Vector3d::Zero(), y), DimensionError);
  CHECK_THROWS_AS(picp(Eigen::VectorXd(), Eigen::VectorXd(), Eigen::VectorXd()), DimensionError);
}

TEST_CASE("ace hand values") {
  CHECK(ace(85.00, 0.2) == doctest::Approx(5.00).epsilon(1e-12));
  CHECK(ace(80.0, 0.2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ace(0.0, 0.2) == doctest::Approx(80.0).epsilon(1e-12));
  CHECK_THROWS_AS(ace(101.0, 0.2), ValidationError);
  CHECK_THROWS_AS(ace(50.0, 1.0), ValidationError);
}

TEST_CASE("perfect forecasts score zero with zero spread") {
  const auto levels = QuantileLevels<double>({0.1, 0.5, 0.9});
  const Eigen::Vector3d y(0.2, 0.4, 0.9);
  const Eigen::MatrixXd q = y.replicate(1, 3);
  const auto s = aggregate_qscore(q, y, levels);
  CHECK(s.mean == 0.0);
  CHECK(s.sd == 0.0);
  CHECK(s.cells == 9);
}

TEST_CASE("a single cell has its own score and zero spread") {
  const auto levels = QuantileLevels<double>({0.8});
  Eigen::MatrixXd q(1, 1);
  q << 0.5;
  const auto s = aggregate_qscore(q, Eigen::VectorXd::Constant(1, 1.0), levels);
  CHECK(s.mean == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.sd == 0.0);
}

TEST_CASE("aggregate score equals the direct per-cell computation") {
  const auto levels = QuantileLevels<double>({0.25, 0.75});
  Eigen::MatrixXd q(3, 2);
  q << 0.1, 0.3,  //
      0.5, 0.6,   //
      0.2, 0.9;
  const Eigen::Vector3d y(0.2, 0.4, 1.0);
  // Residuals y - q and their pinball values, by hand.
  const double cells[6] = {0.25 * 0.1, 0.25 * 0.1,    //
                           0.75 * 0.1, 0.25 * 0.2,    //
                           0.25 * 0.8, 0.75 * 0.1};
  double mean = 0.0;
  for (const double c : cells) mean += c / 6.0;
  double var = 0.0;
  for (const double c : cells) var += (c - mean) * (c - mean) / 6.0;
  const auto s = aggregate_qscore(q, y, levels);
  CHECK(s.mean == doctest::Approx(mean).epsilon(1e-14));
  CHECK(s.sd == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  const Eigen::MatrixXd by_cell = score_cells(q, y, levels);
  CHECK(by_cell(2, 0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(by_cell(1, 0) == doctest::Approx(0.075).epsilon(1e-14));
}

TEST_CASE("summarizing concatenated cells equals scoring the stacked forecasts") {
  const auto levels = QuantileLevels<double>({0.3, 0.7});
  Eigen::MatrixXd q1(2, 2), q2(1, 2);
  q1 << 0.1, 0.2, 0.4, 0.8;
  q2 << 0.5, 0.6;
  const Eigen::Vector2d y1(0.3, 0.5);
  const Eigen::VectorXd y2 = Eigen::VectorXd::Constant(1, 0.1);
  Eigen::MatrixXd joint(3, 2);
  joint << score_cells(q1, y1, levels), score_cells(q2, y2, levels);
  Eigen::MatrixXd qs(3, 2);
  qs << q1, q2;
  const Eigen::Vector3d ys(0.3, 0.5, 0.1);
  const auto a = summarize_scores(joint);
  const auto b = aggregate_qscore(qs, ys, levels);
  CHECK(a.mean == b.mean);
  CHECK(a.sd == b.sd);
}

TEST_CASE("score shape mismatches are rejected") {
  const auto levels = QuantileLevels<double>({0.5});
  CHECK_THROWS_AS(aggregate_qscore(Eigen::MatrixXd::Zero(2, 2), Eigen::Vector2d::Zero(), levels), DimensionError);
  CHECK_THROWS_AS(aggregate_qscore(Eigen::MatrixXd::Zero(3, 1), Eigen::Vector2d::Zero(), levels), DimensionError);
}

TEST_CASE("quantile level parsing") {
  const auto d = QuantileLevels<double>::parse("0.1:0.9:0.1");
  CHECK(d == QuantileLevels<double>::deciles());
  CHECK(d[2] == 0.3);
  CHECK(QuantileLevels<double>::parse("0.25,0.75").size() == 2);
  CHECK_THROWS_AS(QuantileLevels<double>::parse("0.5,0.4"), ValidationError);
  CHECK_THROWS_AS(QuantileLevels<double>::parse("0,0.5"), ValidationError);
  CHECK_THROWS_AS(QuantileLevels<double>::parse("abc"), ValidationError);
  CHECK(d.index_of(0.7) == 6);
  CHECK(d.index_of(0.75) == -1);
}
