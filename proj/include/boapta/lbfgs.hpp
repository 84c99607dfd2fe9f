#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace boapta {

struct LbfgsOptions {
  int max_iter = 5;
  int memory = 10;
  int max_backtracks = 30;
  double armijo = 1e-4;
  double pgtol = 1e-10;  // stop when the projected gradient is this small
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Minimizes f over the box [lower, upper] with a projected limited-memory
/// BFGS method and Armijo backtracking along the projected path.  `f(x, g)`
/// returns the objective and writes its gradient into g; a non-finite value
/// is treated as a failed trial point.
template <typename F>
LbfgsResult lbfgs_minimize(F&& f, Eigen::VectorXd x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                           const LbfgsOptions& opts = {}) {
  const Eigen::Index n = x.size();
  auto project = [&](const Eigen::VectorXd& v) { return v.cwiseMax(lower).cwiseMin(upper).eval(); };

  LbfgsResult out;
  x = project(x);
  Eigen::VectorXd g(n);
  double fx = f(x, g);
  out.evaluations = 1;
  std::deque<Eigen::VectorXd> s_hist, y_hist;

  for (int it = 0; it < opts.max_iter; ++it) {
    if (!std::isfinite(fx)) break;
    // Variables pinned at a bound with the gradient pushing outward stay fixed.
    Eigen::ArrayXd free = Eigen::ArrayXd::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) free[i] = 0.0;
    }
    const Eigen::VectorXd pg = (g.array() * free).matrix();
    if (pg.lpNorm<Eigen::Infinity>() < opts.pgtol) break;

    // Two-loop recursion restricted to the free variables.
    Eigen::VectorXd q = pg;
    const std::size_t m = s_hist.size();
    std::vector<double> a(m), rho(m);
    for (std::size_t k = m; k-- > 0;) {
      const Eigen::VectorXd s = (s_hist[k].array() * free).matrix();
      const Eigen::VectorXd y = (y_hist[k].array() * free).matrix();
      const double sy = s.dot(y);
      rho[k] = sy > 1e-300 ? 1.0 / sy : 0.0;
      a[k] = rho[k] * s.dot(q);
      q -= a[k] * y;
    }
    if (m > 0) {
      const Eigen::VectorXd y = (y_hist.back().array() * free).matrix();
      const double yy = y.squaredNorm();
      if (yy > 0.0) q *= s_hist.back().dot(y_hist.back()) / yy;
    } else {
      q /= std::max(1.0, pg.norm());
    }
    for (std::size_t k = 0; k < m; ++k) {
      const Eigen::VectorXd s = (s_hist[k].array() * free).matrix();
      const Eigen::VectorXd y = (y_hist[k].array() * free).matrix();
      const double b = rho[k] * y.dot(q);
      q += (a[k] - b) * s;
    }
    Eigen::VectorXd d = -(q.array() * free).matrix();
    if (!(d.dot(g) < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      d = -pg / std::max(1.0, pg.norm());
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, step *= 0.5) {
      x_new = project(x + step * d);
      f_new = f(x_new, g_new);
      ++out.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + opts.armijo * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-12 * y.squaredNorm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    ++out.iterations;
  }
  out.x = x;
  out.value = fx;
  return out;
}

}  // namespace boapta
