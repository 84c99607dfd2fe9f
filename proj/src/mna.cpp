#include "boapta/mna.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace boapta {

MnaSystem::MnaSystem(const Netlist& netlist) : netlist_(&netlist) {
  const auto& elems = netlist.elements;
  dimension_ = netlist.num_nodes() - 1;
  branch_rows_.assign(elems.size(), -1);
  device_models_.resize(elems.size());
  for (std::size_t k = 0; k < elems.size(); ++k) {
    const Element& e = elems[k];
    switch (e.kind) {
      case ElementKind::VSource:
      case ElementKind::Inductor:
        branch_rows_[k] = dimension_++;
        break;
      case ElementKind::Diode:
        device_models_[k] = DiodeModel::from(netlist.model_for(e));
        junctions_.emplace_back(e.terminals[0], e.terminals[1]);
        break;
      case ElementKind::BJT: {
        auto m = BjtModel::from(netlist.model_for(e));
        device_models_[k] = m;
        const int c = e.terminals[0], b = e.terminals[1], em = e.terminals[2];
        if (m.polarity > 0) {
          junctions_.emplace_back(b, em);
          junctions_.emplace_back(b, c);
        } else {
          junctions_.emplace_back(em, b);
          junctions_.emplace_back(c, b);
        }
        break;
      }
      case ElementKind::MOSFET:
        device_models_[k] = MosModel::from(netlist.model_for(e));
        break;
      default:
        break;
    }
  }
}

std::vector<std::string> MnaSystem::unknown_labels() const {
  std::vector<std::string> labels;
  for (int n = 1; n < netlist_->num_nodes(); ++n) labels.push_back(netlist_->nodes[n]);
  for (std::size_t k = 0; k < netlist_->elements.size(); ++k)
    if (branch_rows_[k] >= 0) labels.push_back("i(" + netlist_->elements[k].name + ")");
  return labels;
}

namespace {

// Adds a conductance g between nodes a and b (rows already shifted, -1 = ground).
void add_conductance(Eigen::MatrixXd& jac, int a, int b, double g) {
  if (a >= 0) jac(a, a) += g;
  if (b >= 0) jac(b, b) += g;
  if (a >= 0 && b >= 0) {
    jac(a, b) -= g;
    jac(b, a) -= g;
  }
}

void add_terminal_eval(const TerminalEval& ev, const std::vector<int>& rows, Eigen::MatrixXd& jac,
                       Eigen::VectorXd& residual) {
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i] < 0) continue;
    residual[rows[i]] += ev.current[i];
    for (std::size_t j = 0; j < n; ++j)
      if (rows[j] >= 0) jac(rows[i], rows[j]) += ev.jacobian[i][j];
  }
}

}  // namespace

void MnaSystem::stamp_device(std::size_t element, const Eigen::VectorXd& u, Eigen::MatrixXd& jac,
                             Eigen::VectorXd& residual) const {
  const Element& e = netlist_->elements[element];
  std::vector<int> rows;
  rows.reserve(e.terminals.size());
  for (int t : e.terminals) rows.push_back(node_row(t));
  auto v = [&](int i) { return node_voltage(u, e.terminals[i]); };

  switch (e.kind) {
    case ElementKind::Resistor: {
      const double g = 1.0 / e.value;
      add_conductance(jac, rows[0], rows[1], g);
      const double i = g * (v(0) - v(1));
      if (rows[0] >= 0) residual[rows[0]] += i;
      if (rows[1] >= 0) residual[rows[1]] -= i;
      break;
    }
    case ElementKind::Capacitor:
      break;
    case ElementKind::ISource:
      // Current flows from n+ through the source to n-.
      if (rows[0] >= 0) residual[rows[0]] += e.value;
      if (rows[1] >= 0) residual[rows[1]] -= e.value;
      break;
    case ElementKind::VSource:
    case ElementKind::Inductor: {
      const int br = branch_rows_[element];
      const double current = u[br];
      if (rows[0] >= 0) {
        residual[rows[0]] += current;
        jac(rows[0], br) += 1.0;
        jac(br, rows[0]) += 1.0;
      }
      if (rows[1] >= 0) {
        residual[rows[1]] -= current;
        jac(rows[1], br) -= 1.0;
        jac(br, rows[1]) -= 1.0;
      }
      residual[br] += v(0) - v(1) - (e.kind == ElementKind::VSource ? e.value : 0.0);
      break;
    }
    case ElementKind::Diode:
      add_terminal_eval(eval_diode(std::get<DiodeModel>(device_models_[element]), v(0), v(1)), rows, jac, residual);
      break;
    case ElementKind::BJT:
      add_terminal_eval(eval_bjt(std::get<BjtModel>(device_models_[element]), v(0), v(1), v(2)), rows, jac, residual);
      break;
    case ElementKind::MOSFET:
      add_terminal_eval(eval_mosfet(std::get<MosModel>(device_models_[element]), e.width / e.length, v(0), v(1), v(2)),
                        rows, jac, residual);
      break;
  }
  for (int r : rows)
    if (r >= 0 && !std::isfinite(residual[r])) throw std::domain_error("non-finite stamp for " + e.name);
}

void MnaSystem::stamp(const NortonStamp& s, const Eigen::VectorXd& u, Eigen::MatrixXd& jac,
                      Eigen::VectorXd& residual) const {
  const int a = node_row(s.node_a), b = node_row(s.node_b);
  add_conductance(jac, a, b, s.conductance);
  const double i = s.conductance * (node_voltage(u, s.node_a) - node_voltage(u, s.node_b)) + s.current;
  if (a >= 0) residual[a] += i;
  if (b >= 0) residual[b] -= i;
}

void MnaSystem::assemble(const Eigen::VectorXd& u, Eigen::MatrixXd& jac, Eigen::VectorXd& residual,
                         std::span<const NortonStamp> nortons, std::span<const TheveninStamp> thevenins) const {
  jac.setZero(dimension_, dimension_);
  residual.setZero(dimension_);
  for (std::size_t k = 0; k < netlist_->elements.size(); ++k) stamp_device(k, u, jac, residual);
  for (const auto& s : nortons) stamp(s, u, jac, residual);
  for (const auto& s : thevenins) {
    const int br = branch_rows_.at(s.element);
    if (br < 0 || netlist_->elements[s.element].kind != ElementKind::VSource)
      throw std::invalid_argument("Thevenin stamp must attach to a voltage source");
    // Swap "- E" for "- R*I - V".
    residual[br] += netlist_->elements[s.element].value - s.resistance * u[br] - s.voltage;
    jac(br, br) -= s.resistance;
  }
  if (!residual.allFinite() || !jac.allFinite()) throw std::domain_error("non-finite MNA assembly");
}

NrResult newton_solve(const MnaSystem& system, const Eigen::VectorXd& u0, const NrOptions& options,
                      std::span<const NortonStamp> nortons, std::span<const TheveninStamp> thevenins) {
  if (system.dimension() < 1) throw std::invalid_argument("newton_solve: empty system");
  if (!(options.tol_residual > 0.0) || !(options.tol_step > 0.0))
    throw std::invalid_argument("newton_solve: tolerances must be positive");
  if (u0.size() != system.dimension()) throw std::invalid_argument("newton_solve: initial guess has wrong size");

  NrResult result;
  result.solution = u0;
  Eigen::VectorXd& u = result.solution;
  Eigen::MatrixXd jac;
  Eigen::VectorXd f;
  try {
    system.assemble(u, jac, f, nortons, thevenins);
  } catch (const std::domain_error& err) {
    result.diagnostic = err.what();
    return result;
  }
  result.max_residual = f.lpNorm<Eigen::Infinity>();

  const auto& junctions = system.junctions();
  for (int it = 0; it < options.max_iter; ++it) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    Eigen::VectorXd delta = lu.solve(f);
    if (!delta.allFinite()) {
      result.diagnostic = "singular Jacobian";
      return result;
    }
    double scale = 1.0;
    for (auto [a, b] : junctions) {
      const double dv = std::abs(system.node_voltage(delta, a) - system.node_voltage(delta, b));
      if (dv * scale > options.junction_step_limit) scale = options.junction_step_limit / dv;
    }
    u -= scale * delta;
    ++result.iterations;
    result.last_step = scale * delta.lpNorm<Eigen::Infinity>();

    try {
      system.assemble(u, jac, f, nortons, thevenins);
    } catch (const std::domain_error& err) {
      result.diagnostic = err.what();
      return result;
    }
    result.max_residual = f.lpNorm<Eigen::Infinity>();
    if (result.max_residual <= options.tol_residual) {
      Eigen::VectorXd correction = lu.solve(f);
      const double size = correction.lpNorm<Eigen::Infinity>();
      if (correction.allFinite() && size <= options.tol_step) {
        u -= correction;
        result.last_step = size;
        result.converged = true;
        return result;
      }
    }
  }
  result.diagnostic = "iteration limit reached";
  return result;
}

}  // namespace boapta
