#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>

#include "boapta/cepta.hpp"

namespace oracle {

/// Result of integrating one pseudo-branch over a step with many substeps.
struct BranchStep {
  double state_ref;   // reference state at the end of the step
  double state_one;   // state implied by the single-step companion
  double bound;       // h^2 / 2 * max |state''| along the reference path
};

/// Integrates x' = (target - x) / tc(t) with n backward-Euler substeps,
/// tracking the largest second derivative along the path.
template <typename TimeConstant>
inline void integrate(double t0, double h, double x0, double target, TimeConstant tc, int n, double& x_end,
                      double& max_x2) {
  const double dt = h / n;
  double x = x0, t = t0, prev_d = (target - x0) / tc(t0);
  max_x2 = 0.0;
  for (int k = 0; k < n; ++k) {
    t += dt;
    x = (x + dt * target / tc(t)) / (1.0 + dt / tc(t));
    const double d = (target - x) / tc(t);
    max_x2 = std::max(max_x2, std::abs(d - prev_d) / dt);
    prev_d = d;
  }
  x_end = x;
}

/// RVC branch (R(t) = r0 e^{t/tau} in series with C) driven by branch voltage
/// v_next over (t0, t0 + h]; the state is the capacitor voltage.
inline BranchStep rvc_step(double h, double c, double r0, double tau, double t0, double v_prev, double i_prev,
                           double v_next, int substeps = 1000) {
  auto r = [&](double t) { return r0 * std::exp(t / tau); };
  const double vc0 = v_prev - r(t0) * i_prev;
  BranchStep out{};
  double x2 = 0.0;
  integrate(t0, h, vc0, v_next, [&](double t) { return c * r(t); }, substeps, out.state_ref, x2);
  out.bound = 0.5 * h * h * x2;
  const auto comp = boapta::rvc_companion(h, c, r(t0 + h), r(t0), v_prev, i_prev);
  const double i_next = comp.g_eq * v_next + comp.i_eq;
  out.state_one = v_next - r(t0 + h) * i_next;
  return out;
}

/// GVL branch (G(t) = g0 e^{t/tau} parallel with L, in series with source e)
/// carrying current i_next over (t0, t0 + h]; the state is the inductor current.
inline BranchStep gvl_step(double h, double l, double g0, double tau, double t0, double v_prev, double i_prev,
                           double e, double i_next, int substeps = 1000) {
  auto g = [&](double t) { return g0 * std::exp(t / tau); };
  const double il0 = i_prev - g(t0) * (v_prev - e);
  BranchStep out{};
  double x2 = 0.0;
  integrate(t0, h, il0, i_next, [&](double t) { return l * g(t); }, substeps, out.state_ref, x2);
  out.bound = 0.5 * h * h * x2;
  const auto comp = boapta::gvl_companion(h, l, g(t0 + h), g(t0), v_prev, i_prev, e);
  const double v_next = comp.r_eq * i_next + comp.v_eq;
  out.state_one = i_next - g(t0 + h) * (v_next - e);
  return out;
}

}  // namespace oracle
