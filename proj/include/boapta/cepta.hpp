#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boapta/mna.hpp"
#include "boapta/netlist.hpp"

namespace boapta {

inline constexpr double kParamMin = 1e-7;
inline constexpr double kParamMax = 1e7;
inline constexpr double kRampCap = 1e30;

/// Pseudo-element values: capacitor and inductor of the compound branches,
/// and initial values of the ramped resistor and conductance.
struct SolverParams {
  double c_pseudo = 1e-3;  // F
  double l_pseudo = 1e-3;  // H
  double r0 = 1.0;         // ohm
  double g0 = 1.0;         // S
  double tau = 1.0;        // s, ramp time constant

  /// Throws std::invalid_argument outside [kParamMin, kParamMax] or tau <= 0.
  void validate() const;

  /// (C, L, R0, G0) as a 4-vector.
  Eigen::Vector4d vector() const { return {c_pseudo, l_pseudo, r0, g0}; }
  static SolverParams from_vector(const Eigen::Vector4d& x, double tau = 1.0);
};

enum class PseudoKind { RVC, GVL };

/// One inserted compound branch.  RVC (resistor in series with capacitor)
/// attaches between node_a and node_b; GVL (conductance parallel with
/// inductor) sits in series with voltage source `source_element`, whose
/// value is `e_source`.  v_cb / i_cb hold the last accepted branch state.
struct PseudoBranch {
  PseudoKind kind;
  int node_a = 0;
  int node_b = 0;
  std::size_t source_element = 0;
  double e_source = 0.0;
  double v_cb = 0.0;
  double i_cb = 0.0;
};

struct AugmentedNetlist {
  const Netlist* netlist = nullptr;
  SolverParams params;
  std::vector<PseudoBranch> branches;

  std::size_t count(PseudoKind kind) const;
};

/// Places one GVL in series with every independent voltage source, one RVC
/// across every independent current source, and one RVC from every distinct
/// non-ground transistor terminal node to ground.  The branches are realised
/// as companion stamps, so the MNA dimension does not grow.
AugmentedNetlist insert_pseudo_elements(const Netlist& netlist, const SolverParams& params);

/// v0 * exp(t / tau), saturating at kRampCap.
double ramp_value(double v0, double tau, double t);

struct RvcCompanion {
  double g_eq;
  double i_eq;
};

/// Backward-Euler companion of an RVC branch: I = g_eq * V + i_eq.
RvcCompanion rvc_companion(double h, double c, double r_next, double r_prev, double v_prev, double i_prev);

struct GvlCompanion {
  double r_eq;
  double v_eq;
};

/// Backward-Euler companion of a GVL branch in series with source e:
/// V = r_eq * I + v_eq.
GvlCompanion gvl_companion(double h, double l, double g_next, double g_prev, double v_prev, double i_prev, double e);

struct CeptaLimits {
  long max_total_nr = 20000;
  int max_time_steps = 5000;  // accepted plus rejected
  double steady_tol = 1e-12;
};

/// Pseudo-time step control, in units of tau.
struct StepControl {
  double initial = 0.01;
  double growth = 1.5;
  double max = 10.0;
  double min = 1e-14;
  int nr_per_step = 50;
  NrOptions newton;
};

struct SimulationResult {
  bool converged = false;
  long total_nr_iterations = 0;
  int time_steps = 0;
  int rejected_steps = 0;
  Eigen::VectorXd dc_solution;
  double final_udot = 0.0;
  double wall_time = 0.0;
  std::string diagnostic;
};

/// Integrates the augmented circuit in pseudo time from u = 0 until
/// max|u(n+1) - u(n)| / h < steady_tol.  Non-convergence is reported in
/// the result, never thrown.
SimulationResult run_cepta(const Netlist& netlist, const SolverParams& params, const CeptaLimits& limits = {},
                           const StepControl& control = {});

}  // namespace boapta
