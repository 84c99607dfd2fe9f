#pragma once

#include <array>

#include "boapta/netlist.hpp"

namespace boapta {

inline constexpr double kThermalVoltage = 0.025852;  // kT/q at 300 K
inline constexpr double kMosGmin = 1e-12;

/// Current through a pn junction and its derivative w.r.t. the junction voltage.
struct JunctionEval {
  double current;
  double conductance;
};

/// Shockley diode Is*(exp(v/(n*vt)) - 1). Beyond an exponent of 40 the
/// exponential continues linearly so large trial voltages stay finite.
JunctionEval shockley(double v, double is, double n, double vt = kThermalVoltage);

/// Terminal currents (flowing into each terminal) and their Jacobian with
/// respect to the terminal voltages, for devices with up to three terminals.
struct TerminalEval {
  std::array<double, 3> current{};
  std::array<std::array<double, 3>, 3> jacobian{};  // d current[i] / d v[j]
};

struct DiodeModel {
  double is = 1e-14;
  double n = 1.0;
  static DiodeModel from(const ModelCard& card);
};

/// Ebers-Moll transport model, terminals (C, B, E).
struct BjtModel {
  double is = 1e-16;
  double bf = 100.0;
  double br = 1.0;
  double polarity = 1.0;  // +1 NPN, -1 PNP
  static BjtModel from(const ModelCard& card);
};

/// Shichman-Hodges level-1 model, terminals (D, G, S), bulk tied to source.
/// A kMosGmin leak between drain and source keeps cut-off channels from
/// leaving nodes floating.
struct MosModel {
  double vto = 1.0;
  double kp = 2e-5;
  double lambda = 0.0;
  double polarity = 1.0;  // +1 NMOS, -1 PMOS
  static MosModel from(const ModelCard& card);
};

TerminalEval eval_diode(const DiodeModel& m, double v_anode, double v_cathode);
TerminalEval eval_bjt(const BjtModel& m, double vc, double vb, double ve);
TerminalEval eval_mosfet(const MosModel& m, double w_over_l, double vd, double vg, double vs);

}  // namespace boapta
