#include <doctest.h>

#include <cmath>
#include <random>

#include "boapta/cepta.hpp"
#include "oracles.hpp"

using namespace boapta;

namespace {

Netlist divider() { return parse_netlist("divider\nV1 1 0 1.0\nR1 1 2 1e3\nR2 2 0 1e3\n.end\n"); }

Netlist diode_resistor() {
  return parse_netlist("dr\nV1 1 0 1.0\nR1 1 2 1k\nD1 2 0 dm\n.model dm d (is=1e-14 n=1)\n.end\n");
}

Eigen::VectorXd nr_solution(const Netlist& n) {
  MnaSystem sys(n);
  const NrResult r = newton_solve(sys, Eigen::VectorXd::Zero(sys.dimension()));
  REQUIRE(r.converged);
  return r.solution;
}

}  // namespace

TEST_CASE("solver parameter validation") {
  CHECK_NOTHROW(SolverParams{}.validate());
  CHECK_THROWS_AS((SolverParams{1e-8, 1, 1, 1, 1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SolverParams{1, 1, 1, 2e7, 1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SolverParams{1, 1, 1, 1, 0}.validate()), std::invalid_argument);
}

TEST_CASE("pseudo-element insertion sites") {
  const AugmentedNetlist a = insert_pseudo_elements(divider(), {});
  CHECK(a.count(PseudoKind::GVL) == 1);
  CHECK(a.count(PseudoKind::RVC) == 0);

  const Netlist q = parse_netlist("q\nV1 1 0 5\nR1 1 2 10k\nR2 1 3 1k\nQ1 3 2 4 qn\nR3 4 0 100\n"
                                  ".model qn npn\n.end\n");
  const AugmentedNetlist b = insert_pseudo_elements(q, {});
  CHECK(b.count(PseudoKind::GVL) == 1);
  CHECK(b.count(PseudoKind::RVC) == 3);

  // An emitter at ground gets no branch; shared nodes are deduplicated.
  const Netlist q2 = parse_netlist("q\nV1 1 0 5\nR1 1 2 10k\nR2 1 3 1k\nQ1 3 2 0 qn\nQ2 3 2 0 qn\n"
                                   ".model qn npn\n.end\n");
  CHECK(insert_pseudo_elements(q2, {}).count(PseudoKind::RVC) == 2);

  const Netlist i = parse_netlist("i\nI1 0 1 1m\nR1 1 0 1k\n.end\n");
  const AugmentedNetlist c = insert_pseudo_elements(i, {});
  CHECK(c.count(PseudoKind::RVC) == 1);
  CHECK(c.count(PseudoKind::GVL) == 0);
}

TEST_CASE("ramp values") {
  CHECK(ramp_value(100, 1, 0) == doctest::Approx(100));
  CHECK(ramp_value(100, 1, 1) == doctest::Approx(271.828182845904).epsilon(1e-12));
  CHECK(ramp_value(1, 1e-3, 1) == kRampCap);
  CHECK(ramp_value(1e7, 1, 1e6) == kRampCap);
}

TEST_CASE("companion stamps by direct substitution") {
  const RvcCompanion r1 = rvc_companion(1, 1, 1, 1, 0, 0);
  CHECK(r1.g_eq == doctest::Approx(0.5));
  CHECK(r1.i_eq == doctest::Approx(0.0));
  const RvcCompanion r2 = rvc_companion(1e-3, 1e-3, 0, 0, 2, 0);
  CHECK(r2.g_eq == doctest::Approx(1.0));
  CHECK(r2.i_eq == doctest::Approx(-2.0));
  const GvlCompanion g1 = gvl_companion(1, 1, 1, 1, 5, 0, 5);
  CHECK(g1.r_eq == doctest::Approx(0.5));
  CHECK(g1.v_eq == doctest::Approx(5.0));
  const GvlCompanion g2 = gvl_companion(1, 1, 0, 0, 0, 1, 0);
  CHECK(g2.r_eq == doctest::Approx(1.0));
  CHECK(g2.v_eq == doctest::Approx(-1.0));
}

TEST_CASE("companion stamps agree with a fine-step integrator to first order") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lg(-2.0, 2.0), v(-5.0, 5.0), frac(0.001, 0.5);
  for (int k = 0; k < 50; ++k) {
    const double tau = 1.0, t0 = 3 * frac(rng), h = frac(rng) * tau;
    const auto r = oracle::rvc_step(h, std::pow(10, lg(rng)), std::pow(10, lg(rng)), tau, t0, v(rng), 1e-2 * v(rng),
                                    v(rng));
    CHECK(std::abs(r.state_one - r.state_ref) <= 2.0 * r.bound + 1e-12);
    const auto g = oracle::gvl_step(h, std::pow(10, lg(rng)), std::pow(10, lg(rng)), tau, t0, v(rng), 1e-2 * v(rng),
                                    v(rng), 1e-2 * v(rng));
    CHECK(std::abs(g.state_one - g.state_ref) <= 2.0 * g.bound + 1e-12);
  }
}

TEST_CASE("fully ramped branches recover the original circuit") {
  const RvcCompanion r = rvc_companion(1e6, 1e-3, 1e25, 1e24, 1.0, 0.0);
  CHECK(r.g_eq < 1e-24);
  const GvlCompanion g = gvl_companion(1e6, 1e-3, 1e25, 1e24, 5.0, 1e-3, 5.0);
  CHECK(g.r_eq < 1e-24);
  CHECK(g.v_eq == doctest::Approx(5.0));
}

TEST_CASE("divider converges to the NR answer for any parameters") {
  const Netlist n = divider();
  const Eigen::VectorXd ref = nr_solution(n);
  for (const SolverParams& p : {SolverParams{}, SolverParams{1e7, 1e-7, 1e-7, 1e7, 1}, SolverParams{1e-7, 1e7, 1e7, 1e-7, 1}}) {
    const SimulationResult r = run_cepta(n, p);
    REQUIRE(r.converged);
    CHECK((r.dc_solution - ref).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK(r.final_udot < 1e-12);
    CHECK(r.total_nr_iterations > 0);
  }
}

TEST_CASE("an iteration budget of one stops the run") {
  CeptaLimits l;
  l.max_total_nr = 1;
  const SimulationResult r = run_cepta(diode_resistor(), {}, l);
  CHECK_FALSE(r.converged);
  CHECK(r.total_nr_iterations <= 1);
  l.max_total_nr = 20000;
  l.max_time_steps = 1;
  CHECK_FALSE(run_cepta(diode_resistor(), {}, l).converged);
}

TEST_CASE("different parameters reach the same diode operating point") {
  const Netlist n = diode_resistor();
  const SimulationResult a = run_cepta(n, {1, 1, 1, 1, 1});
  const SimulationResult b = run_cepta(n, {1e3, 1e3, 1e-3, 1e-3, 1});
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK((a.dc_solution - b.dc_solution).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((a.dc_solution - nr_solution(n)).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(a.total_nr_iterations != b.total_nr_iterations);
}

TEST_CASE("iteration counts are deterministic and include rejected steps") {
  const Netlist n = load_netlist(BOAPTA_CIRCUITS "/bjt_inverter.cir");
  const SolverParams p{1e-2, 1e2, 10, 1e-3, 1};
  const SimulationResult a = run_cepta(n, p);
  const SimulationResult b = run_cepta(n, p);
  CHECK(a.converged == b.converged);
  CHECK(a.total_nr_iterations == b.total_nr_iterations);
  CHECK(a.time_steps == b.time_steps);
  CHECK(a.total_nr_iterations >= a.time_steps + a.rejected_steps);
}
