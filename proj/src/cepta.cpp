#include "boapta/cepta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

namespace boapta {

void SolverParams::validate() const {
  for (double v : {c_pseudo, l_pseudo, r0, g0}) {
    if (!(v >= kParamMin && v <= kParamMax))
      throw std::invalid_argument("solver parameter " + std::to_string(v) + " outside [1e-7, 1e7]");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
}

SolverParams SolverParams::from_vector(const Eigen::Vector4d& x, double tau) {
  return {x[0], x[1], x[2], x[3], tau};
}

std::size_t AugmentedNetlist::count(PseudoKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(branches.begin(), branches.end(), [kind](const PseudoBranch& b) { return b.kind == kind; }));
}

AugmentedNetlist insert_pseudo_elements(const Netlist& netlist, const SolverParams& params) {
  params.validate();
  AugmentedNetlist aug{&netlist, params, {}};
  std::set<int> transistor_nodes;
  for (std::size_t k = 0; k < netlist.elements.size(); ++k) {
    const Element& e = netlist.elements[k];
    switch (e.kind) {
      case ElementKind::VSource: {
        PseudoBranch b{PseudoKind::GVL};
        b.node_a = e.terminals[0];
        b.node_b = e.terminals[1];
        b.source_element = k;
        b.e_source = e.value;
        aug.branches.push_back(b);
        break;
      }
      case ElementKind::ISource: {
        PseudoBranch b{PseudoKind::RVC};
        b.node_a = e.terminals[0];
        b.node_b = e.terminals[1];
        aug.branches.push_back(b);
        break;
      }
      case ElementKind::BJT:
      case ElementKind::MOSFET:
        for (int t : e.terminals)
          if (t != 0) transistor_nodes.insert(t);
        break;
      default:
        break;
    }
  }
  for (int node : transistor_nodes) {
    PseudoBranch b{PseudoKind::RVC};
    b.node_a = node;
    b.node_b = 0;
    aug.branches.push_back(b);
  }
  return aug;
}

double ramp_value(double v0, double tau, double t) {
  const double exponent = t / tau;
  if (exponent >= std::log(kRampCap / v0)) return kRampCap;
  return std::min(v0 * std::exp(exponent), kRampCap);
}

RvcCompanion rvc_companion(double h, double c, double r_next, double r_prev, double v_prev, double i_prev) {
  const double g = 1.0 / (h / c + r_next);
  return {g, g * (i_prev * r_prev - v_prev)};
}

GvlCompanion gvl_companion(double h, double l, double g_next, double g_prev, double v_prev, double i_prev, double e) {
  const double r = 1.0 / (h / l + g_next);
  return {r, r * (-i_prev + g_prev * (v_prev - e)) + e};
}

namespace {

struct Companions {
  std::vector<NortonStamp> nortons;
  std::vector<TheveninStamp> thevenins;
  std::vector<RvcCompanion> rvc;  // parallel to branches; unused entries for GVL
  std::vector<GvlCompanion> gvl;
  bool finite = true;
};

Companions build_companions(const AugmentedNetlist& aug, double t, double h) {
  const SolverParams& p = aug.params;
  const double r_prev = ramp_value(p.r0, p.tau, t);
  const double r_next = ramp_value(p.r0, p.tau, t + h);
  const double g_prev = ramp_value(p.g0, p.tau, t);
  const double g_next = ramp_value(p.g0, p.tau, t + h);

  Companions out;
  out.rvc.resize(aug.branches.size(), {0.0, 0.0});
  out.gvl.resize(aug.branches.size(), {0.0, 0.0});
  for (std::size_t k = 0; k < aug.branches.size(); ++k) {
    const PseudoBranch& b = aug.branches[k];
    if (b.kind == PseudoKind::RVC) {
      // A fully ramped resistor is an open circuit.
      if (r_next >= kRampCap) continue;
      auto c = rvc_companion(h, p.c_pseudo, r_next, r_prev, b.v_cb, b.i_cb);
      out.finite = out.finite && std::isfinite(c.g_eq) && std::isfinite(c.i_eq);
      out.rvc[k] = c;
      out.nortons.push_back({b.node_a, b.node_b, c.g_eq, c.i_eq});
    } else {
      // A fully ramped conductance shorts the inductor: the plain source remains.
      GvlCompanion c{0.0, b.e_source};
      if (g_next < kRampCap) c = gvl_companion(h, p.l_pseudo, g_next, g_prev, b.v_cb, b.i_cb, b.e_source);
      out.finite = out.finite && std::isfinite(c.r_eq) && std::isfinite(c.v_eq);
      out.gvl[k] = c;
      out.thevenins.push_back({b.source_element, c.r_eq, c.v_eq});
    }
  }
  return out;
}

}  // namespace

SimulationResult run_cepta(const Netlist& netlist, const SolverParams& params, const CeptaLimits& limits,
                           const StepControl& control) {
  const auto start = std::chrono::steady_clock::now();
  SimulationResult result;
  AugmentedNetlist aug = insert_pseudo_elements(netlist, params);
  MnaSystem system(netlist);

  Eigen::VectorXd u = Eigen::VectorXd::Zero(system.dimension());
  const double tau = params.tau;
  double t = 0.0;
  double h = control.initial * tau;
  int attempts = 0;

  auto finish = [&](bool converged, std::string why) {
    result.converged = converged;
    result.dc_solution = u;
    result.diagnostic = std::move(why);
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  };

  while (true) {
    if (attempts >= limits.max_time_steps) return finish(false, "time-step limit reached");
    const long budget = limits.max_total_nr - result.total_nr_iterations;
    if (budget <= 0) return finish(false, "iteration budget exhausted");
    ++attempts;

    Companions comp = build_companions(aug, t, h);
    NrResult nr;
    if (comp.finite) {
      NrOptions opts = control.newton;
      opts.max_iter = static_cast<int>(std::min<long>(control.nr_per_step, budget));
      nr = newton_solve(system, u, opts, comp.nortons, comp.thevenins);
      result.total_nr_iterations += nr.iterations;
    }
    if (!nr.converged) {
      ++result.rejected_steps;
      h *= 0.5;
      if (h < control.min * tau) return finish(false, "pseudo-time step underflow");
      continue;
    }

    const double udot = (nr.solution - u).lpNorm<Eigen::Infinity>() / h;
    u = nr.solution;
    t += h;
    ++result.time_steps;
    result.final_udot = udot;

    for (std::size_t k = 0; k < aug.branches.size(); ++k) {
      PseudoBranch& b = aug.branches[k];
      const double v = system.node_voltage(u, b.node_a) - system.node_voltage(u, b.node_b);
      if (b.kind == PseudoKind::RVC) {
        b.v_cb = v;
        b.i_cb = comp.rvc[k].g_eq * v + comp.rvc[k].i_eq;
      } else {
        b.v_cb = v;
        b.i_cb = u[system.branch_row(b.source_element)];
      }
    }

    if (udot < limits.steady_tol) return finish(true, "");
    h = std::min(h * control.growth, control.max * tau);
  }
}

}  // namespace boapta
