// boa-pta: simulate, optimize, mc and report subcommands.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fnmatch.h>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "boapta/mna.hpp"
#include "boapta/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace boapta;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNonConvergence = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// INI sections [solver], [bo], [mc]; every key is optional.  bo.circuits
// names the netlists used when none are given on the command line.
void apply_config_file(const std::string& path, CampaignConfig& c, std::string& circuits) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("config " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  try {
    c.defaults.c_pseudo = pt.get("solver.c", c.defaults.c_pseudo);
    c.defaults.l_pseudo = pt.get("solver.l", c.defaults.l_pseudo);
    c.defaults.r0 = pt.get("solver.r0", c.defaults.r0);
    c.defaults.g0 = pt.get("solver.g0", c.defaults.g0);
    c.defaults.tau = pt.get("solver.tau", c.defaults.tau);
    c.max_total_nr = pt.get("solver.max_total_nr", c.max_total_nr);
    c.max_time_steps = pt.get("solver.max_time_steps", c.max_time_steps);

    circuits = pt.get("bo.circuits", circuits);
    c.epochs = pt.get("bo.epochs", c.epochs);
    c.seed = pt.get("bo.seed", c.seed);
    if (auto a = pt.get_optional<std::string>("bo.acquisition")) c.acquisition.kind = parse_acquisition(*a);
    c.acquisition.ucb_beta = pt.get("bo.ucb_beta", c.acquisition.ucb_beta);
    c.acquisition.mes_num_max_samples = pt.get("bo.mes_samples", c.acquisition.mes_num_max_samples);
    c.acquisition.raw_samples = pt.get("bo.raw_samples", c.acquisition.raw_samples);
    c.acquisition.restarts = pt.get("bo.restarts", c.acquisition.restarts);
    c.acquisition.inner_iters = pt.get("bo.inner_iters", c.acquisition.inner_iters);
    c.surrogate.train_iters = pt.get("bo.train_iters", c.surrogate.train_iters);
    c.surrogate.warp_samples = pt.get("bo.warp_samples", c.surrogate.warp_samples);
    c.surrogate.train_warp = pt.get("bo.train_warp", c.surrogate.train_warp);
    c.surrogate.log_targets = pt.get("bo.log_targets", c.surrogate.log_targets);

    c.freeze_after = pt.get("mc.freeze_after", c.freeze_after);
    c.budget_factor = pt.get("mc.budget_factor", c.budget_factor);
    c.incumbent_factor = pt.get("mc.incumbent_factor", c.incumbent_factor);
  } catch (const boost::property_tree::ptree_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

ordered_json config_json(const CampaignConfig& c) {
  ordered_json j;
  j["solver"] = {{"c", c.defaults.c_pseudo}, {"l", c.defaults.l_pseudo}, {"r0", c.defaults.r0},
                 {"g0", c.defaults.g0},      {"tau", c.defaults.tau},    {"max_total_nr", c.max_total_nr},
                 {"max_time_steps", c.max_time_steps}};
  j["bo"] = {{"epochs", c.epochs},
             {"seed", c.seed},
             {"acquisition", to_string(c.acquisition.kind)},
             {"ucb_beta", c.acquisition.ucb_beta},
             {"mes_samples", c.acquisition.mes_num_max_samples},
             {"raw_samples", c.acquisition.raw_samples},
             {"restarts", c.acquisition.restarts},
             {"inner_iters", c.acquisition.inner_iters},
             {"train_iters", c.surrogate.train_iters},
             {"warp_samples", c.surrogate.warp_samples},
             {"train_warp", c.surrogate.train_warp},
             {"log_targets", c.surrogate.log_targets}};
  j["mc"] = {{"freeze_after", c.freeze_after},
             {"budget_factor", c.budget_factor},
             {"incumbent_factor", c.incumbent_factor}};
  return j;
}

// Directories expand to their *.cir files and wildcard patterns to their
// matches, each in name order.
std::vector<fs::path> expand_paths(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (a.find_first_of("*?[") != std::string::npos) {
      const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
      const std::string pattern = p.filename().string();
      std::vector<fs::path> found;
      if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir))
          if (e.is_regular_file() && fnmatch(pattern.c_str(), e.path().filename().c_str(), 0) == 0)
            found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw UsageError(a + ": no matching files");
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".cir") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw UsageError(a + ": no .cir files");
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw UsageError(a + ": no such file or directory");
    }
  }
  return out;
}

// Parses every deck before anything runs.
std::vector<Circuit> load_circuits(const std::vector<std::string>& args) {
  std::vector<Circuit> out;
  for (const fs::path& p : expand_paths(args)) {
    try {
      out.push_back(make_circuit(p.stem().string(), load_netlist(p.string())));
    } catch (const ParseError& e) {
      std::ostringstream msg;
      msg << p.string() << ": " << e.what();
      throw UsageError(msg.str());
    }
  }
  return out;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream f(dir / name);
  if (!f) throw UsageError("cannot write " + (dir / name).string());
  f.precision(17);
  return f;
}

SurrogateModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read model " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_json(ss.str());
  } catch (const std::exception& e) {
    throw UsageError("model " + path + ": " + e.what());
  }
}

std::vector<TrialRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read log " + path);
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw UsageError(path + ": malformed JSON line");
    if (j.contains("config")) continue;  // header
    try {
      out.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrialRecord> default_runs(const std::vector<TrialRecord>& records) {
  std::vector<TrialRecord> out;
  for (const auto& r : records)
    if (r.method == "default" && r.epoch == 0) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::vector<std::string> paths;
  std::string method = "cepta";
  std::optional<double> c, l, r0, g0, tau;
  int nr_max_iter = 100;
  std::string out;
};

int cmd_simulate(const SimulateOpts& o, const CampaignConfig& cfg) {
  const std::vector<Circuit> circuits = load_circuits(o.paths);
  SolverParams p = cfg.defaults;
  if (o.c) p.c_pseudo = *o.c;
  if (o.l) p.l_pseudo = *o.l;
  if (o.r0) p.r0 = *o.r0;
  if (o.g0) p.g0 = *o.g0;
  if (o.tau) p.tau = *o.tau;
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  bool all = true;
  for (const Circuit& c : circuits) {
    ordered_json j;
    j["circuit"] = c.id;
    j["method"] = o.method;
    Eigen::VectorXd u;
    ordered_json udot = nullptr;
    if (o.method == "nr") {
      const MnaSystem sys(c.netlist);
      NrOptions nr;
      nr.max_iter = o.nr_max_iter;
      const NrResult r = newton_solve(sys, Eigen::VectorXd::Zero(sys.dimension()), nr);
      j["converged"] = r.converged;
      j["iterations"] = r.iterations;
      j["time_steps"] = 0;
      u = r.solution;
      all = all && r.converged;
      if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    } else {
      CeptaLimits lim;
      lim.max_total_nr = cfg.max_total_nr;
      lim.max_time_steps = cfg.max_time_steps;
      const SimulationResult r = run_cepta(c.netlist, p, lim);
      j["converged"] = r.converged;
      j["iterations"] = r.total_nr_iterations;
      j["time_steps"] = r.time_steps;
      u = r.dc_solution;
      all = all && r.converged;
      if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
      udot = r.final_udot;
    }
    ordered_json sol = ordered_json::object();
    for (std::size_t n = 1; n < c.netlist.nodes.size() && static_cast<Eigen::Index>(n) <= u.size(); ++n)
      sol[c.netlist.nodes[n]] = u[static_cast<Eigen::Index>(n) - 1];
    j["solution"] = sol;
    j["final_udot"] = udot;
    std::cout << j.dump() << '\n';
    if (!o.out.empty()) open_out(o.out, c.id + ".json") << j.dump(2) << '\n';
  }
  return all ? kExitOk : kExitNonConvergence;
}

// ---------------------------------------------------------------- optimize

struct OptimizeOpts {
  std::vector<std::string> paths;
  std::string out = "boapta_out";
  std::string baseline;
  std::string resume;
  bool no_time = false;
};

void write_log(const fs::path& dir, const std::string& name, const CampaignConfig& cfg, const std::string& method,
               const std::vector<TrialRecord>& records, bool with_time) {
  std::ofstream f = open_out(dir, name);
  ordered_json header;
  header["config"] = config_json(cfg);
  header["method"] = method;
  f << header.dump() << '\n';
  for (const auto& r : records) f << record_to_json(r, with_time) << '\n';
}

int cmd_optimize(const OptimizeOpts& o, const CampaignConfig& cfg) {
  const std::vector<Circuit> circuits = load_circuits(o.paths);
  std::optional<SurrogateModel> warm;
  if (!o.resume.empty()) warm = load_model(o.resume);
  const fs::path dir(o.out);

  const Evaluator eval = cepta_evaluator({cfg.max_total_nr, cfg.max_time_steps});
  // The log is appended as runs finish so an interrupted campaign keeps its trials.
  std::ofstream log = open_out(dir, "trials.jsonl");
  {
    ordered_json header;
    header["config"] = config_json(cfg);
    header["method"] = "bo";
    log << header.dump() << '\n' << std::flush;
  }
  const CampaignResult bo = cold_start(
      circuits, cfg.epochs, cfg, eval, [&](const TrialRecord& r) { log << record_to_json(r, !o.no_time) << '\n' << std::flush; },
      warm);
  open_out(dir, "model.json") << model_to_json(bo.model) << '\n';

  const SpeedupReport vs_default = speedup_report(bo.records, default_runs(bo.records));
  {
    std::ofstream f = open_out(dir, "summary.csv");
    write_speedup_csv(f, vs_default);
  }
  {
    std::ofstream csv = open_out(dir, "curves.csv");
    write_curves_csv(csv, bo.records);
    std::ofstream svg = open_out(dir, "curves.svg");
    write_curves_svg(svg, bo.records, "best NR iterations, " + to_string(cfg.acquisition.kind));
  }
  std::cout << "circuit,default,best,speedup\n";
  for (const auto& r : vs_default.rows)
    std::cout << r.circuit_id << ',' << r.baseline_best << ',' << r.method_best << ','
              << (r.excluded ? std::string("-") : std::to_string(r.speedup)) << '\n';
  std::cout << "mean speedup vs default: " << vs_default.mean << '\n';

  if (o.baseline == "random") {
    const CampaignResult rs = random_search(circuits, cfg.epochs, cfg, eval);
    write_log(dir, "random_trials.jsonl", cfg, "random", rs.records, !o.no_time);
    const SpeedupReport vs_random = speedup_report(bo.records, rs.records);
    {
      std::ofstream f = open_out(dir, "summary_random.csv");
      write_speedup_csv(f, vs_random);
    }
    std::cout << "mean speedup vs random: " << vs_random.mean << '\n';
  }

  for (const auto& [id, b] : bo.best)
    if (!b.converged) return kExitNonConvergence;
  return kExitOk;
}

// ---------------------------------------------------------------- mc

struct McOpts {
  std::string base;
  double variation = 0.05;
  int n = 200;
  std::string warm;
  std::string out = "boapta_mc";
  bool compare = false;
  bool no_time = false;
};

void write_mc_report(std::ostream& out, const McReport& r) {
  out << "index,method,c,l,r0,g0,y,cost,converged,breached,frozen\n";
  out.precision(10);
  for (const auto& s : r.samples)
    out << s.index << ',' << s.method << ',' << s.x[0] << ',' << s.x[1] << ',' << s.x[2] << ',' << s.x[3] << ','
        << s.y << ',' << s.cost << ',' << s.converged << ',' << s.breached << ',' << s.frozen << '\n';
  out << "#NC," << r.non_convergent << "\nmean," << r.mean << "\nSTD," << r.stddev << "\nfrozen_at," << r.frozen_at
      << '\n';
}

ordered_json mc_summary(const McReport& r) {
  return {{"samples", r.samples.size()}, {"nc", r.non_convergent}, {"mean", r.mean}, {"std", r.stddev},
          {"frozen_at", r.frozen_at}};
}

int cmd_mc(const McOpts& o, const CampaignConfig& cfg) {
  if (!(o.variation > 0.0 && o.variation < 1.0)) throw UsageError("--variation must lie in (0, 1)");
  if (o.n < 1) throw UsageError("--n must be >= 1");
  std::vector<Circuit> loaded = load_circuits({o.base});
  if (loaded.size() != 1) throw UsageError("mc takes exactly one netlist");
  Netlist base = loaded.front().netlist;
  base.title = loaded.front().id;
  if (base.count(ElementKind::Resistor) == 0) throw UsageError(o.base + ": no resistors to perturb");
  std::optional<SurrogateModel> warm;
  if (!o.warm.empty()) warm = load_model(o.warm);

  const fs::path dir(o.out);
  const Evaluator eval = cepta_evaluator({cfg.max_total_nr, cfg.max_time_steps});
  std::ofstream log = open_out(dir, "mc_trials.jsonl");
  {
    ordered_json header;
    header["config"] = config_json(cfg);
    header["method"] = "mc";
    header["variation"] = o.variation;
    header["n"] = o.n;
    log << header.dump() << '\n' << std::flush;
  }
  const McReport rep = mc_accelerate(base, o.variation, o.n, cfg, eval, warm,
                                     [&](const TrialRecord& r) { log << record_to_json(r, !o.no_time) << '\n' << std::flush; });
  {
    std::ofstream f = open_out(dir, "mc_report.csv");
    write_mc_report(f, rep);
  }
  open_out(dir, "model.json") << model_to_json(rep.model) << '\n';

  ordered_json summary;
  summary["boa_pta"] = mc_summary(rep);
  if (o.compare) {
    const McReport cst = mc_constant(base, o.variation, o.n, cfg, eval);
    {
      std::ofstream f = open_out(dir, "mc_default_report.csv");
      write_mc_report(f, cst);
    }
    summary["default"] = mc_summary(cst);
  }
  std::cout << summary.dump(2) << '\n';
  return rep.non_convergent == static_cast<int>(rep.samples.size()) ? kExitNonConvergence : kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportOpts {
  std::string log;
  std::string baseline;
  std::string out;
};

int cmd_report(const ReportOpts& o) {
  const std::vector<TrialRecord> records = load_records(o.log);
  if (records.empty()) throw UsageError(o.log + ": no trial records");
  const std::vector<TrialRecord> base = o.baseline.empty() ? default_runs(records) : load_records(o.baseline);
  SpeedupReport rep;
  try {
    rep = speedup_report(records, base);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_speedup_csv(std::cout, rep);
  if (!o.out.empty()) {
    const fs::path dir(o.out);
    {
      std::ofstream f = open_out(dir, "summary.csv");
      write_speedup_csv(f, rep);
    }
    std::ofstream csv = open_out(dir, "curves.csv");
    write_curves_csv(csv, records);
    std::ofstream svg = open_out(dir, "curves.svg");
    write_curves_svg(svg, records, "best NR iterations");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-transient DC solver with Bayesian parameter tuning"};
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("BOAPTA_CONFIG")) config_path = env;
  app.add_option("--config", config_path, "INI config file (default: $BOAPTA_CONFIG)");
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Random seed");

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "Solve DC operating points");
  s->add_option("netlists", sim.paths, "Netlist files or directories")->required();
  s->add_option("--method", sim.method, "nr or cepta")->check(CLI::IsMember({"nr", "cepta"}));
  s->add_option("--c", sim.c, "Pseudo capacitance (F)");
  s->add_option("--l", sim.l, "Pseudo inductance (H)");
  s->add_option("--r0", sim.r0, "Initial RVC resistance (ohm)");
  s->add_option("--g0", sim.g0, "Initial GVL conductance (S)");
  s->add_option("--tau", sim.tau, "Ramp time constant (s)");
  s->add_option("--nr-max-iter", sim.nr_max_iter, "Iteration limit for --method nr")->check(CLI::PositiveNumber);
  s->add_option("--out", sim.out, "Also write <circuit>.json here");

  OptimizeOpts opt;
  std::optional<int> epochs;
  std::optional<std::string> acquisition;
  std::optional<double> ucb_beta;
  auto* o = app.add_subcommand("optimize", "Cold-start parameter search over a circuit set");
  o->add_option("netlists", opt.paths, "Netlist files, directories or patterns (default: bo.circuits)");
  o->add_option("--epochs", epochs, "Epochs")->check(CLI::PositiveNumber);
  o->add_option("--acquisition", acquisition, "ei, ucb or mes");
  o->add_option("--ucb-beta", ucb_beta, "UCB exploration weight");
  o->add_option("--baseline", opt.baseline, "Also run a baseline")->check(CLI::IsMember({"random"}));
  o->add_option("--resume", opt.resume, "Continue from a saved model");
  o->add_option("--out", opt.out, "Output directory");
  o->add_flag("--no-time", opt.no_time, "Omit wall-time fields from logs");

  McOpts mc;
  auto* m = app.add_subcommand("mc", "Monte-Carlo acceleration on perturbed copies of one circuit");
  m->add_option("netlist", mc.base, "Base netlist")->required();
  m->add_option("--variation", mc.variation, "Relative resistor spread (0, 1)");
  m->add_option("--n", mc.n, "Number of draws");
  m->add_option("--warm", mc.warm, "Start from a saved model");
  m->add_option("--out", mc.out, "Output directory");
  m->add_flag("--compare-default", mc.compare, "Also solve the draws at default parameters");
  m->add_flag("--no-time", mc.no_time, "Omit wall-time fields from logs");

  ReportOpts rep;
  auto* r = app.add_subcommand("report", "Speed-up summary from a trial log");
  r->add_option("log", rep.log, "Trial log (JSON lines)")->required();
  r->add_option("--baseline", rep.baseline, "Baseline trial log (default: the log's own default runs)");
  r->add_option("--out", rep.out, "Write summary and curves here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CampaignConfig cfg;
    std::string circuits;
    if (!config_path.empty()) apply_config_file(config_path, cfg, circuits);
    if (opt.paths.empty() && !circuits.empty()) opt.paths.push_back(circuits);
    if (*o && opt.paths.empty()) throw UsageError("optimize: no netlists given and no bo.circuits in the config");
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    if (ucb_beta) cfg.acquisition.ucb_beta = *ucb_beta;
    if (acquisition) {
      try {
        cfg.acquisition.kind = parse_acquisition(*acquisition);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    if (*s) return cmd_simulate(sim, cfg);
    if (*o) return cmd_optimize(opt, cfg);
    if (*m) return cmd_mc(mc, cfg);
    return cmd_report(rep);
  } catch (const UsageError& e) {
    std::cerr << "boa-pta: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "boa-pta: " << e.what() << '\n';
    return kExitNonConvergence;
  }
}
