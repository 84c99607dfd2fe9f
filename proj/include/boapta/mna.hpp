#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "boapta/devices.hpp"
#include "boapta/netlist.hpp"

namespace boapta {

/// Norton companion: current g*(v_a - v_b) + i leaves node a and enters node b.
struct NortonStamp {
  int node_a;
  int node_b;
  double conductance;
  double current;
};

/// Thevenin companion placed in series with voltage source `element`:
/// the source row becomes v+ - v- - resistance*I = voltage.
struct TheveninStamp {
  std::size_t element;
  double resistance;
  double voltage;
};

/// Modified nodal analysis of a netlist: unknowns are the non-ground node
/// voltages followed by one branch current per voltage source and inductor.
/// Capacitors are open and inductors are shorts at DC.
///
/// The residual f(u) holds, for each node row, the sum of currents leaving
/// the node through its elements; for each branch row, the branch voltage
/// equation.  A DC operating point satisfies f(u) = 0.
class MnaSystem {
 public:
  explicit MnaSystem(const Netlist& netlist);

  const Netlist& netlist() const { return *netlist_; }
  int dimension() const { return dimension_; }

  /// Row of a node voltage, -1 for ground.
  int node_row(int node) const { return node - 1; }
  /// Row of the branch current of a voltage source or inductor, -1 otherwise.
  int branch_row(std::size_t element) const { return branch_rows_[element]; }

  /// Junction voltage pairs (anode-like, cathode-like node) whose per-step
  /// change is limited during Newton iteration.
  const std::vector<std::pair<int, int>>& junctions() const { return junctions_; }

  /// Adds the linearized stamp of one element at state `u` to (jac, residual).
  /// Throws std::domain_error when the stamp is not finite.
  void stamp_device(std::size_t element, const Eigen::VectorXd& u, Eigen::MatrixXd& jac,
                    Eigen::VectorXd& residual) const;

  void stamp(const NortonStamp& s, const Eigen::VectorXd& u, Eigen::MatrixXd& jac, Eigen::VectorXd& residual) const;

  /// Evaluates f(u) and J(u) for the whole circuit plus companion stamps.
  /// Thevenin stamps replace the plain source equation of their element.
  void assemble(const Eigen::VectorXd& u, Eigen::MatrixXd& jac, Eigen::VectorXd& residual,
                std::span<const NortonStamp> nortons = {},
                std::span<const TheveninStamp> thevenins = {}) const;

  double node_voltage(const Eigen::VectorXd& u, int node) const { return node == 0 ? 0.0 : u[node - 1]; }

  /// Human-readable label of each unknown: node names, then "i(<element>)".
  std::vector<std::string> unknown_labels() const;

 private:
  const Netlist* netlist_;
  int dimension_ = 0;
  std::vector<int> branch_rows_;
  std::vector<std::pair<int, int>> junctions_;
  std::vector<std::variant<std::monostate, DiodeModel, BjtModel, MosModel>> device_models_;
};

struct NrOptions {
  double tol_residual = 1e-9;  // A
  double tol_step = 1e-6;      // V
  int max_iter = 50;
  double junction_step_limit = 0.5;  // V per iteration
};

struct NrResult {
  bool converged = false;
  int iterations = 0;
  Eigen::VectorXd solution;
  double max_residual = 0.0;
  double last_step = 0.0;
  std::string diagnostic;
};

/// Damped Newton-Raphson on f(u) = 0.  Each iteration factors J once.  The
/// solve is declared converged when max|f| <= tol_residual at the new iterate
/// and the next correction, estimated with the current factorization, is
/// within tol_step; that correction is applied before returning.
NrResult newton_solve(const MnaSystem& system, const Eigen::VectorXd& u0, const NrOptions& options = {},
                      std::span<const NortonStamp> nortons = {}, std::span<const TheveninStamp> thevenins = {});

}  // namespace boapta
