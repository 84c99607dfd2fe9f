#include "boapta/devices.hpp"

#include <cmath>
#include <utility>

namespace boapta {

namespace {
constexpr double kExpLimit = 40.0;
}

JunctionEval shockley(double v, double is, double n, double vt) {
  const double nvt = n * vt;
  const double arg = v / nvt;
  if (arg > kExpLimit) {
    const double e = std::exp(kExpLimit);
    return {is * (e * (1.0 + arg - kExpLimit) - 1.0), is * e / nvt};
  }
  const double e = std::exp(arg);
  return {is * (e - 1.0), is * e / nvt};
}

DiodeModel DiodeModel::from(const ModelCard& card) {
  DiodeModel m;
  m.is = card.get("is", m.is);
  m.n = card.get("n", m.n);
  return m;
}

BjtModel BjtModel::from(const ModelCard& card) {
  BjtModel m;
  m.is = card.get("is", m.is);
  m.bf = card.get("bf", m.bf);
  m.br = card.get("br", m.br);
  m.polarity = card.type == "pnp" ? -1.0 : 1.0;
  return m;
}

MosModel MosModel::from(const ModelCard& card) {
  MosModel m;
  m.polarity = card.type == "pmos" ? -1.0 : 1.0;
  m.vto = card.get("vto", m.polarity * 1.0);
  m.kp = card.get("kp", m.kp);
  m.lambda = card.get("lambda", m.lambda);
  return m;
}

TerminalEval eval_diode(const DiodeModel& m, double v_anode, double v_cathode) {
  auto j = shockley(v_anode - v_cathode, m.is, m.n);
  TerminalEval out;
  out.current = {j.current, -j.current, 0.0};
  out.jacobian[0] = {j.conductance, -j.conductance, 0.0};
  out.jacobian[1] = {-j.conductance, j.conductance, 0.0};
  return out;
}

TerminalEval eval_bjt(const BjtModel& m, double vc, double vb, double ve) {
  const double p = m.polarity;
  const double vbe = p * (vb - ve);
  const double vbc = p * (vb - vc);
  const auto f = shockley(vbe, m.is, 1.0);
  const auto r = shockley(vbc, m.is, 1.0);

  const double ic = f.current - r.current * (1.0 + 1.0 / m.br);
  const double ib = f.current / m.bf + r.current / m.br;

  // Derivatives w.r.t. (vbe, vbc); the polarity factors cancel in the
  // Jacobian with respect to node voltages.
  const double dic_dvbe = f.conductance;
  const double dic_dvbc = -r.conductance * (1.0 + 1.0 / m.br);
  const double dib_dvbe = f.conductance / m.bf;
  const double dib_dvbc = r.conductance / m.br;

  TerminalEval out;
  out.current = {p * ic, p * ib, -p * (ic + ib)};
  // vbe = vb - ve, vbc = vb - vc  (terminal order C, B, E)
  auto row = [](double d_vbe, double d_vbc) {
    return std::array<double, 3>{-d_vbc, d_vbe + d_vbc, -d_vbe};
  };
  out.jacobian[0] = row(dic_dvbe, dic_dvbc);
  out.jacobian[1] = row(dib_dvbe, dib_dvbc);
  for (int j = 0; j < 3; ++j) out.jacobian[2][j] = -(out.jacobian[0][j] + out.jacobian[1][j]);
  return out;
}

TerminalEval eval_mosfet(const MosModel& m, double w_over_l, double vd, double vg, double vs) {
  const double p = m.polarity;
  const double vth = p * m.vto;
  const double beta = m.kp * w_over_l;

  // Source and drain swap roles when the channel is reverse biased.
  const bool reversed = p * (vd - vs) < 0.0;
  const double v_hi = reversed ? vs : vd;
  const double v_lo = reversed ? vd : vs;
  const double vgs = p * (vg - v_lo);
  const double vds = p * (v_hi - v_lo);

  double id = 0.0, gm = 0.0, gds = 0.0;
  const double vov = vgs - vth;
  if (vov > 0.0) {
    const double clm = 1.0 + m.lambda * vds;
    if (vds < vov) {
      const double core = vov * vds - 0.5 * vds * vds;
      id = beta * core * clm;
      gm = beta * vds * clm;
      gds = beta * (vov - vds) * clm + beta * core * m.lambda;
    } else {
      id = 0.5 * beta * vov * vov * clm;
      gm = beta * vov * clm;
      gds = 0.5 * beta * vov * vov * m.lambda;
    }
  }

  // Current into the high-side terminal, as a function of (v_hi, vg, v_lo).
  const double i_hi = p * id;
  const std::array<double, 3> d_hi = {gds, gm, -gm - gds};  // d i_hi / d(v_hi, vg, v_lo)

  TerminalEval out;
  const int hi = reversed ? 2 : 0;
  const int lo = reversed ? 0 : 2;
  const int idx[3] = {hi, 1, lo};
  out.current[hi] = i_hi;
  out.current[lo] = -i_hi;
  for (int k = 0; k < 3; ++k) {
    out.jacobian[hi][idx[k]] += d_hi[k];
    out.jacobian[lo][idx[k]] -= d_hi[k];
  }

  // Drain-source leak.
  const double leak = kMosGmin * (vd - vs);
  out.current[0] += leak;
  out.current[2] -= leak;
  out.jacobian[0][0] += kMosGmin;
  out.jacobian[0][2] -= kMosGmin;
  out.jacobian[2][0] -= kMosGmin;
  out.jacobian[2][2] += kMosGmin;
  return out;
}

}  // namespace boapta
