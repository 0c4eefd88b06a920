#pragma once

// Working-set SMO for the bias-free non-crossing quantile dual.
//
// Variables are a[m][i] = alpha+[m][i] - alpha-[m][i] in [-(1-tau_m)C, tau_m C]
// and lambda[m][i] >= 0 (m < M-1). With beta_m = a_m - (lambda_m - lambda_{m-1})
// the dual value is sum_m -1/2 beta_m' G beta_m + a_m' y, and the solver keeps
// F(:, m) = G beta_m so every gradient entry is O(1):
//   d/da[m][i]      = y_i - F(i, m)
//   d/dlambda[m][i] = F(i, m) - F(i, m+1)
//
// Each outer pass ranks points by their worst violation (relative to tol for
// a, crossing_tol for lambda), takes every variable of the top points as the
// working set, runs greedy two-variable steps on the dual restricted to it and
// folds the accumulated beta change into F with one matrix product. Each
// two-variable step solves its 2-D box subproblem exactly. Every few passes a
// Newton step on the free variables, guarded by a backtracking search that
// only accepts an increase, speeds up the end game. The dual value therefore
// never decreases.

#include "csvqr/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace csvqr {

template <typename Scalar = double>
struct SolveStatus {
  bool converged = false;
  long iterations = 0;  // two-variable steps
  Scalar max_violation = Scalar(0);
  Scalar dual_objective = Scalar(0);
};

template <typename Scalar = double>
struct SolverTrace {
  long iteration;
  Scalar objective;
  Scalar violation;
};

template <typename Scalar = double>
using SolveObserver = std::function<void(const SolverTrace<Scalar>&)>;

namespace detail {

template <typename Scalar>
class SmoSolver {
public:
  SmoSolver(const Matrix<Scalar>& G, const Vector<Scalar>& y, const QuantileLevels<Scalar>& levels, Scalar C,
            Index working_points = 0)
      : G_(G), y_(y), C_(C), N_(y.size()), M_(levels.size()) {
    taus_ = levels.values();
    a_ = Matrix<Scalar>::Zero(N_, M_);
    lam_ = Matrix<Scalar>::Zero(N_, std::max<Index>(M_ - 1, 0));
    F_ = Matrix<Scalar>::Zero(N_, M_);
    // About kWorkingVariables variables per working set unless told otherwise.
    if (working_points <= 0) working_points = std::max<Index>(8, kWorkingVariables / (2 * M_ - 1));
    points_ = std::min(working_points, N_);
  }

  Index variable_count() const { return N_ * (2 * M_ - 1); }

  // tol bounds alpha violations (residual units); crossing_tol bounds lambda
  // violations, which equal the amount f_m(x_i) exceeds f_{m+1}(x_i).
  SolveStatus<Scalar> run(Scalar tol, Scalar crossing_tol, long max_steps, const SolveObserver<Scalar>& observer) {
    SolveStatus<Scalar> status;
    tol_ = tol;
    crossing_tol_ = crossing_tol;
    long steps = 0;
    long passes = 0;
    for (;;) {
      Scalar worst = scan();
      if (worst <= Scalar(1)) {
        refresh();
        worst = scan();
        if (worst <= Scalar(1)) {
          status.converged = true;
          break;
        }
      }
      if (steps >= max_steps) break;
      const Scalar largest = largest_violation();
      steps += optimize_working_set(max_steps - steps);
      ++passes;
      if (passes % kNewtonEvery == 0) newton_polish();
      if (passes % kRefreshEvery == 0) refresh();
      if (observer) observer({steps, objective(), largest});
    }
    status.iterations = steps;
    status.max_violation = largest_violation();
    status.dual_objective = objective();
    return status;
  }

  Scalar objective() const {
    const Matrix<Scalar> B = beta();
    Scalar value = Scalar(0);
    for (Index m = 0; m < M_; ++m) value += -Scalar(0.5) * B.col(m).dot(F_.col(m)) + a_.col(m).dot(y_);
    return value;
  }

  /// M x N layouts matching DualSolution.
  Matrix<Scalar> alpha_plus() const { return a_.cwiseMax(Scalar(0)).transpose(); }
  Matrix<Scalar> alpha_minus() const { return (-a_).cwiseMax(Scalar(0)).transpose(); }
  Matrix<Scalar> lambda() const { return lam_.transpose(); }

private:
  // Flat variable id k: a(i, m) at k = m N + i, lambda(i, m) at k = M N + m N + i.
  struct Var {
    bool is_lambda;
    Index m;
    Index i;
  };

  static constexpr Index kWorkingVariables = 1024;
  static constexpr double kInnerBudget = 0.5;  // inner steps per working variable
  static constexpr long kNewtonEvery = 4;      // passes between Newton polishes
  static constexpr long kRefreshEvery = 64;    // passes between exact recomputations of F
  static constexpr Index kNewtonMaxFree = 800; // larger free blocks are left to SMO
  static constexpr double kNewtonRidge = 1e-6;

  static constexpr Scalar inf() { return std::numeric_limits<Scalar>::infinity(); }

  Var var(Index k) const {
    if (k < M_ * N_) return {false, k / N_, k % N_};
    k -= M_ * N_;
    return {true, k / N_, k % N_};
  }
  Scalar& value(const Var& v) { return v.is_lambda ? lam_(v.i, v.m) : a_(v.i, v.m); }
  Scalar lower(const Var& v) const { return v.is_lambda ? Scalar(0) : -(Scalar(1) - taus_[v.m]) * C_; }
  Scalar upper(const Var& v) const { return v.is_lambda ? inf() : taus_[v.m] * C_; }
  Scalar gradient(const Var& v) const {
    return v.is_lambda ? F_(v.i, v.m) - F_(v.i, v.m + 1) : y_(v.i) - F_(v.i, v.m);
  }

  // Sum of coefficient products over the beta columns shared by two variables.
  // a_m enters column m with +1; lambda_m enters column m with -1 and m+1 with +1.
  static Scalar overlap(const Var& u, const Var& v) {
    if (!u.is_lambda && !v.is_lambda) return u.m == v.m ? Scalar(1) : Scalar(0);
    if (u.is_lambda && v.is_lambda) {
      if (u.m == v.m) return Scalar(2);
      return (u.m + 1 == v.m || v.m + 1 == u.m) ? Scalar(-1) : Scalar(0);
    }
    const Var& l = u.is_lambda ? u : v;
    const Var& a = u.is_lambda ? v : u;
    if (a.m == l.m) return Scalar(-1);
    if (a.m == l.m + 1) return Scalar(1);
    return Scalar(0);
  }

  static Scalar projected(Scalar g, Scalar x, Scalar lo, Scalar hi) {
    if (g > Scalar(0)) return x < hi ? g : Scalar(0);
    if (g < Scalar(0)) return x > lo ? -g : Scalar(0);
    return Scalar(0);
  }

  // Fills ratio_ with violation / tolerance for every variable; returns the max.
  Scalar scan() {
    ratio_.resize(std::size_t(variable_count()));
    Scalar worst = Scalar(0);
    std::size_t k = 0;
    for (Index m = 0; m < M_; ++m) {
      const Scalar lo = -(Scalar(1) - taus_[m]) * C_;
      const Scalar hi = taus_[m] * C_;
      for (Index i = 0; i < N_; ++i, ++k) {
        const Scalar r = projected(y_(i) - F_(i, m), a_(i, m), lo, hi) / tol_;
        ratio_[k] = r;
        worst = std::max(worst, r);
      }
    }
    for (Index m = 0; m + 1 < M_; ++m) {
      for (Index i = 0; i < N_; ++i, ++k) {
        const Scalar r = projected(F_(i, m) - F_(i, m + 1), lam_(i, m), Scalar(0), inf()) / crossing_tol_;
        ratio_[k] = r;
        worst = std::max(worst, r);
      }
    }
    return worst;
  }

  // Dual restricted to the working set W, in local coordinates d (the change
  // of each variable): maximize g'd - 1/2 d'Qd subject to lo <= d <= hi.
  long optimize_working_set(long step_budget) {
    // Rank points by their worst variable and take every variable of the
    // chosen points: fixing a crossing usually needs the free a's next to it.
    std::vector<Scalar> score(std::size_t(N_), Scalar(0));
    for (std::size_t k = 0; k < ratio_.size(); ++k) {
      auto& s = score[std::size_t(Index(k) % N_)];
      s = std::max(s, ratio_[k]);
    }
    std::vector<Index> chosen(static_cast<std::size_t>(N_));
    std::iota(chosen.begin(), chosen.end(), Index(0));
    const auto P = std::size_t(points_);
    std::nth_element(chosen.begin(), chosen.begin() + std::ptrdiff_t(P - 1), chosen.end(),
                     [&](Index l, Index r) { return score[std::size_t(l)] > score[std::size_t(r)]; });
    chosen.resize(P);
    std::sort(chosen.begin(), chosen.end());  // deterministic layout
    std::vector<Index> order;
    for (Index m = 0; m < 2 * M_ - 1; ++m)
      for (const Index i : chosen) order.push_back(m * N_ + i);
    const std::size_t q = order.size();
    const auto width = Index(q);

    std::vector<Var> vars(q);
    Vector<Scalar> g(width), lo(width), hi(width), tol(width), d = Vector<Scalar>::Zero(width);
    for (std::size_t k = 0; k < q; ++k) {
      const Var v = var(order[k]);
      vars[k] = v;
      const Scalar x = value(v);
      g(Index(k)) = gradient(v);
      lo(Index(k)) = lower(v) - x;
      hi(Index(k)) = upper(v) - x;
      tol(Index(k)) = v.is_lambda ? crossing_tol_ : tol_;
    }
    const Subproblem sub(*this, chosen);

    // A short inner budget keeps the working set fresh; solving it to the
    // end would polish variables whose neighbours are still stale.
    const long budget = std::min<long>(step_budget, std::max<long>(1, long(kInnerBudget * double(width))));
    long steps = 0;
    while (steps < budget) {
      Index f = -1;
      Scalar best_ratio = Scalar(0.5);
      Scalar viol_f = Scalar(0);
      for (Index k = 0; k < width; ++k) {
        const Scalar viol = projected(g(k), d(k), lo(k), hi(k));
        if (viol / tol(k) > best_ratio) {
          best_ratio = viol / tol(k);
          f = k;
          viol_f = viol;
        }
      }
      if (f < 0) break;
      const Index p = sub.select_partner(g, d, lo, hi, f, viol_f);
      sub.step(g, d, lo, hi, f, p);
      ++steps;
    }

    apply_changes(vars, d);
    return std::max<long>(steps, 1);
  }

  // Working-set Hessian without forming it: for variable types t (a_0..a_{M-1},
  // lambda_0..lambda_{M-2}) and points p, Q[(t,p),(u,r)] = O[t][u] G(p, r),
  // where O is the fixed type-overlap table. Local index k = t P + p.
  class Subproblem {
  public:
    Subproblem(const SmoSolver& s, const std::vector<Index>& points)
        : P_(Index(points.size())), T_(2 * s.M_ - 1), O_(T_, T_) {
      Gpp_ = s.G_(points, points);
      for (Index t = 0; t < T_; ++t)
        for (Index u = 0; u < T_; ++u) O_(t, u) = overlap(type_var(s, t), type_var(s, u));
      for (Index t = 0; t < T_; ++t) {
        std::vector<Index> nz;
        for (Index u = 0; u < T_; ++u)
          if (O_(t, u) != Scalar(0)) nz.push_back(u);
        partners_.push_back(std::move(nz));
      }
    }

    Scalar q(Index k, Index l) const { return O_(k / P_, l / P_) * Gpp_(k % P_, l % P_); }

    // g -= change * Q(:, k), touching only the types that overlap k's type.
    void update(Vector<Scalar>& g, Index k, Scalar change) const {
      const Index t = k / P_;
      const auto col = Gpp_.col(k % P_);
      for (const Index u : partners_[std::size_t(t)]) g.segment(u * P_, P_).noalias() -= (change * O_(u, t)) * col;
    }

    // Second-order partner choice: over every working variable k that can
    // move in some direction s, maximize slope^2 / curvature of the joint
    // direction sign(g_f) e_f + s e_k.
    Index select_partner(const Vector<Scalar>& g, const Vector<Scalar>& d, const Vector<Scalar>& lo,
                         const Vector<Scalar>& hi, Index f, Scalar viol_f) const {
      const Scalar sf = g(f) > Scalar(0) ? Scalar(1) : Scalar(-1);
      const Scalar qff = q(f, f);
      const Scalar floor = Scalar(1e-12) * std::max(Scalar(1), qff);
      const Index tf = f / P_;
      const auto gcol = Gpp_.col(f % P_);
      Index best = -1;
      Scalar best_gain = Scalar(-1);
      for (Index u = 0; u < T_; ++u) {
        const Scalar ov = O_(u, tf);
        const Scalar self = O_(u, u);
        for (Index p = 0; p < P_; ++p) {
          const Index k = u * P_ + p;
          if (k == f) continue;
          const Scalar qfk = ov * gcol(p);
          const Scalar qkk = self * Gpp_(p, p);
          for (const Scalar s : {Scalar(1), Scalar(-1)}) {
            if (s > 0 ? !(d(k) < hi(k)) : !(d(k) > lo(k))) continue;
            const Scalar slope = viol_f + s * g(k);
            if (!(slope > Scalar(0))) continue;
            const Scalar den = std::max(qff + qkk + Scalar(2) * s * sf * qfk, floor);
            const Scalar gain = slope * slope / den;
            if (gain > best_gain) {
              best_gain = gain;
              best = k;
            }
          }
        }
      }
      return best;
    }

    // One exact step on (f, p); p < 0 means f alone.
    void step(Vector<Scalar>& g, Vector<Scalar>& d, const Vector<Scalar>& lo, const Vector<Scalar>& hi, Index f,
              Index p) const {
      Scalar delta[2] = {Scalar(0), Scalar(0)};
      if (p < 0) {
        if (!line_max(g(f), q(f, f), lo(f) - d(f), hi(f) - d(f), delta[0])) return;
      } else {
        const Scalar gg[2] = {g(f), g(p)};
        const Scalar qfp = q(f, p);
        const Scalar QQ[2][2] = {{q(f, f), qfp}, {qfp, q(p, p)}};
        const Scalar L[2] = {lo(f) - d(f), lo(p) - d(p)};
        const Scalar H[2] = {hi(f) - d(f), hi(p) - d(p)};
        box2(gg, QQ, L, H, delta);
      }
      move(g, d, lo, hi, f, delta[0]);
      if (p >= 0) move(g, d, lo, hi, p, delta[1]);
    }

  private:
    static Var type_var(const SmoSolver& s, Index t) {
      return t < s.M_ ? Var{false, t, 0} : Var{true, t - s.M_, 0};
    }

    void move(Vector<Scalar>& g, Vector<Scalar>& d, const Vector<Scalar>& lo, const Vector<Scalar>& hi, Index k,
              Scalar delta) const {
      if (delta == Scalar(0)) return;
      Scalar next = std::clamp(d(k) + delta, lo(k), hi(k));
      // Snap rounding residue so bound-active variables sit exactly on the bound.
      const Scalar eps = Scalar(64) * std::numeric_limits<Scalar>::epsilon() *
                         std::max({Scalar(1), std::abs(lo(k)), std::isfinite(double(hi(k))) ? std::abs(hi(k)) : Scalar(0)});
      if (next - lo(k) <= eps) next = lo(k);
      if (std::isfinite(double(hi(k))) && hi(k) - next <= eps) next = hi(k);
      const Scalar change = next - d(k);
      if (change == Scalar(0)) return;
      d(k) = next;
      update(g, k, change);
    }

    Index P_, T_;
    Matrix<Scalar> Gpp_;
    Matrix<Scalar> O_;
    std::vector<std::vector<Index>> partners_;
  };

  // Newton step on the free variables (a strictly inside its box, lambda > 0)
  // with the others held at their bounds, followed by a projected
  // backtracking search that only accepts an increase of the dual.
  bool newton_polish() {
    // Levels interact only through free lambdas, so the free-variable Hessian
    // splits into blocks of consecutive levels joined by a free lambda_m.
    std::vector<Index> block(std::size_t(M_), 0);
    for (Index m = 1; m < M_; ++m) {
      bool linked = false;
      for (Index i = 0; i < N_ && !linked; ++i) linked = lam_(i, m - 1) > Scalar(0);
      block[std::size_t(m)] = block[std::size_t(m - 1)] + (linked ? 0 : 1);
    }
    std::vector<std::vector<Var>> groups(std::size_t(block.back() + 1));
    for (Index k = 0; k < variable_count(); ++k) {
      const Var v = var(k);
      const Scalar x = value(v);
      if (x > lower(v) && x < upper(v)) groups[std::size_t(block[std::size_t(v.m)])].push_back(v);
    }
    bool improved = false;
    for (const auto& group : groups) improved = newton_block(group) || improved;
    return improved;
  }

  bool newton_block(const std::vector<Var>& free) {
    const auto f = Index(free.size());
    if (f == 0 || f > kNewtonMaxFree) return false;
    Matrix<Scalar> H(f, f);
    Vector<Scalar> g(f), x(f), lo(f), hi(f);
    for (Index r = 0; r < f; ++r) {
      const Var& u = free[std::size_t(r)];
      g(r) = gradient(u);
      x(r) = value(u);
      lo(r) = lower(u);
      hi(r) = upper(u);
      for (Index c = r; c < f; ++c) {
        const Var& v = free[std::size_t(c)];
        const Scalar ov = overlap(u, v);
        H(r, c) = H(c, r) = ov == Scalar(0) ? Scalar(0) : ov * G_(u.i, v.i);
      }
    }
    Matrix<Scalar> R = H;
    // The ridge covers null directions: a_m, lambda_m and a_{m+1} all free at
    // one point move beta along a direction the dual cannot see.
    R.diagonal().array() += Scalar(kNewtonRidge) * std::max(Scalar(1), H.diagonal().maxCoeff());
    const Eigen::LLT<Matrix<Scalar>> llt(R);
    if (llt.info() != Eigen::Success) return false;
    const Vector<Scalar> dir = llt.solve(g);
    Vector<Scalar> delta(f);
    for (Scalar t = Scalar(1); t > Scalar(1e-6); t /= Scalar(2)) {
      delta = (x + t * dir).cwiseMax(lo).cwiseMin(hi) - x;
      const Scalar gain = g.dot(delta) - Scalar(0.5) * delta.dot(H * delta);
      if (!(gain > Scalar(0))) continue;
      apply_changes(free, delta);
      return true;
    }
    return false;
  }

  // Adds delta(k) to free[k] (clamped) and updates F in one product.
  void apply_changes(const std::vector<Var>& vars, const Vector<Scalar>& delta) {
    std::vector<Index> points;
    for (const Var& v : vars) points.push_back(v.i);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    Matrix<Scalar> dB = Matrix<Scalar>::Zero(Index(points.size()), M_);
    bool changed = false;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const Scalar change = commit(vars[k], delta(Index(k)));
      if (change == Scalar(0)) continue;
      changed = true;
      const auto row = Index(std::lower_bound(points.begin(), points.end(), vars[k].i) - points.begin());
      if (vars[k].is_lambda) {
        dB(row, vars[k].m) -= change;
        dB(row, vars[k].m + 1) += change;
      } else {
        dB(row, vars[k].m) += change;
      }
    }
    if (changed) F_.noalias() += G_(Eigen::all, points) * dB;
  }

  // argmax of g*t - q/2 t^2 over t in [lo, hi]; returns false if unbounded.
  static bool line_max(Scalar g, Scalar q, Scalar lo, Scalar hi, Scalar& t) {
    if (q > Scalar(0)) {
      t = std::clamp(g / q, lo, hi);
      return true;
    }
    if (g > Scalar(0)) t = hi;
    else if (g < Scalar(0)) t = lo;
    else t = Scalar(0);
    return std::isfinite(double(t));
  }

  // Exact maximizer of g'd - 1/2 d'Qd over the box [L, H] in two dimensions.
  static void box2(const Scalar g[2], const Scalar Q[2][2], const Scalar L[2], const Scalar H[2], Scalar d[2]) {
    auto value = [&](Scalar d0, Scalar d1) {
      return g[0] * d0 + g[1] * d1 - Scalar(0.5) * (Q[0][0] * d0 * d0 + Scalar(2) * Q[0][1] * d0 * d1 + Q[1][1] * d1 * d1);
    };
    const Scalar det = Q[0][0] * Q[1][1] - Q[0][1] * Q[0][1];
    if (det > Scalar(1e-12) * Q[0][0] * Q[1][1] && det > Scalar(0)) {
      const Scalar d0 = (Q[1][1] * g[0] - Q[0][1] * g[1]) / det;
      const Scalar d1 = (Q[0][0] * g[1] - Q[0][1] * g[0]) / det;
      if (d0 >= L[0] && d0 <= H[0] && d1 >= L[1] && d1 <= H[1]) {
        d[0] = d0;
        d[1] = d1;
        return;
      }
    }
    // Otherwise a maximizer lies on the boundary (or on a single-coordinate line).
    Scalar best = Scalar(0);
    d[0] = d[1] = Scalar(0);
    auto offer = [&](Scalar d0, Scalar d1) {
      const Scalar v = value(d0, d1);
      if (v > best) {
        best = v;
        d[0] = d0;
        d[1] = d1;
      }
    };
    for (int j = 0; j < 2; ++j) {
      const int o = 1 - j;
      for (const Scalar b : {L[j], H[j]}) {
        if (!std::isfinite(double(b))) continue;
        Scalar t;
        if (!line_max(g[o] - Q[o][j] * b, Q[o][o], L[o], H[o], t)) continue;
        j == 0 ? offer(b, t) : offer(t, b);
      }
      Scalar t;
      if (line_max(g[j], Q[j][j], L[j], H[j], t)) j == 0 ? offer(t, Scalar(0)) : offer(Scalar(0), t);
    }
  }

  // Applies a working-set change to the stored variable, clamping to its
  // bounds; returns the change actually applied.
  Scalar commit(const Var& v, Scalar delta) {
    if (delta == Scalar(0)) return Scalar(0);
    Scalar& x = value(v);
    Scalar next = std::clamp(x + delta, lower(v), upper(v));
    const Scalar eps = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), C_);
    if (next - lower(v) <= eps) next = lower(v);
    if (std::isfinite(double(upper(v))) && upper(v) - next <= eps) next = upper(v);
    const Scalar change = next - x;
    x = next;
    return change;
  }

  Matrix<Scalar> beta() const {
    Matrix<Scalar> B = a_;
    for (Index m = 0; m + 1 < M_; ++m) {
      B.col(m) -= lam_.col(m);
      B.col(m + 1) += lam_.col(m);
    }
    return B;
  }

  void refresh() { F_.noalias() = G_ * beta(); }

  Scalar largest_violation() const {
    Scalar worst = Scalar(0);
    for (Index m = 0; m < M_; ++m)
      for (Index i = 0; i < N_; ++i)
        worst = std::max(worst, projected(y_(i) - F_(i, m), a_(i, m), -(Scalar(1) - taus_[m]) * C_, taus_[m] * C_));
    for (Index m = 0; m + 1 < M_; ++m)
      for (Index i = 0; i < N_; ++i)
        worst = std::max(worst, projected(F_(i, m) - F_(i, m + 1), lam_(i, m), Scalar(0), inf()));
    return worst;
  }

  const Matrix<Scalar>& G_;
  const Vector<Scalar>& y_;
  Scalar C_;
  Index N_, M_;
  Index points_;
  Scalar tol_ = Scalar(1e-3);
  Scalar crossing_tol_ = Scalar(1e-8);
  std::vector<Scalar> taus_;
  Matrix<Scalar> a_;    // N x M
  Matrix<Scalar> lam_;  // N x (M-1)
  Matrix<Scalar> F_;    // N x M
  std::vector<Scalar> ratio_;
};

}  // namespace detail
}  // namespace csvqr
