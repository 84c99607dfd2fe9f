#include "boapta/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace boapta {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

Eigen::Vector4d random_candidate(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-7.0, 7.0);
  Eigen::Vector4d x;
  for (auto& v : x) v = std::pow(10.0, u(rng));
  return x;
}

double observed_y(const Evaluation& e) { return e.converged ? e.iterations : kPenaltyY; }

TrialRecord make_record(const std::string& id, const std::string& method, const Eigen::Vector4d& x, int epoch,
                        const Evaluation& e) {
  return {id, method, x, observed_y(e), epoch, e.wall_time, e.converged};
}

long scaled_budget(double factor, double y) { return static_cast<long>(std::ceil(factor * y)); }

void update_best(std::map<std::string, Best>& best, const TrialRecord& r) {
  Best& b = best[r.circuit_id];
  if (r.converged && (!b.converged || r.y < b.y)) b = {r.x, r.y, true};
}

// Shared loop of cold_start and random_search; `propose` returns the next x.
template <typename Propose>
CampaignResult campaign_loop(const std::vector<Circuit>& circuits, int n_epoch, const CampaignConfig& config,
                             const Evaluator& eval, const RecordSink& sink, Dataset& data, Propose&& propose) {
  if (circuits.empty()) throw std::invalid_argument("campaign needs at least one circuit");
  if (n_epoch < 1) throw std::invalid_argument("epochs must be >= 1");
  config.validate();
  CampaignResult out;
  auto run = [&](const Circuit& c, const Eigen::Vector4d& x, const std::string& method, int epoch) {
    const Evaluation e = eval(c.netlist, SolverParams::from_vector(x, config.defaults.tau), config.max_total_nr);
    TrialRecord r = make_record(c.id, method, x, epoch, e);
    data.add(x, c.features, r.y);
    update_best(out.best, r);
    out.records.push_back(r);
    if (sink) sink(r);
  };
  for (const Circuit& c : circuits) run(c, config.defaults.vector(), "default", 0);
  for (int epoch = 1; epoch <= n_epoch; ++epoch) {
    for (std::size_t i = 0; i < circuits.size(); ++i) {
      auto [x, method] = propose(circuits[i], epoch, i);
      run(circuits[i], x, method, epoch);
    }
  }
  return out;
}

}  // namespace

Circuit make_circuit(std::string id, Netlist netlist) {
  Circuit c{std::move(id), std::move(netlist), {}};
  c.features = extract_features(c.netlist);
  return c;
}

Evaluator cepta_evaluator(CeptaLimits limits, StepControl control) {
  return [limits, control](const Netlist& net, const SolverParams& params, long budget) {
    CeptaLimits l = limits;
    if (budget > 0) l.max_total_nr = std::min(l.max_total_nr, budget);
    Evaluation e;
    try {
      const SimulationResult r = run_cepta(net, params, l, control);
      e.converged = r.converged;
      e.iterations = static_cast<double>(r.total_nr_iterations);
      e.wall_time = r.wall_time;
      e.solution = r.dc_solution;
    } catch (const std::exception&) {
      e.converged = false;
    }
    return e;
  };
}

SolverParams default_params() { return SolverParams{1e-3, 1e-3, 1.0, 1.0, 1.0}; }

CampaignConfig::CampaignConfig() : defaults(default_params()) { surrogate.log_targets = true; }

void CampaignConfig::validate() const {
  defaults.validate();
  acquisition.validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (max_total_nr < 1 || max_time_steps < 1) throw std::invalid_argument("solver budgets must be positive");
  if (freeze_after < 1) throw std::invalid_argument("freeze_after must be >= 1");
  if (!(budget_factor >= 1.0) || !(incumbent_factor >= budget_factor))
    throw std::invalid_argument("need 1 <= budget_factor <= incumbent_factor");
  if (surrogate.train_iters < 0 || surrogate.warp_samples < 1) throw std::invalid_argument("bad surrogate settings");
}

CampaignResult cold_start(const std::vector<Circuit>& circuits, int n_epoch, const CampaignConfig& config,
                          const Evaluator& eval, const RecordSink& sink, const std::optional<SurrogateModel>& warm) {
  SurrogateConfig scfg = config.surrogate;
  scfg.seed = config.seed;
  SurrogateModel model = warm ? *warm : make_surrogate(scfg);
  Dataset data = model.data;
  std::mt19937_64 rng(mix(config.seed, 0xC01D));

  auto propose = [&](const Circuit& c, int epoch, std::size_t i) -> std::pair<Eigen::Vector4d, std::string> {
    if (data.size() >= 2) {
      try {
        train_surrogate(model, data);
        AcquisitionConfig acfg = config.acquisition;
        acfg.seed = mix(config.seed, static_cast<std::uint64_t>(epoch), i);
        const AcquisitionResult a = optimize_acquisition(model, c.features, acfg);
        if (!a.fallback) return {a.x, "bo"};
      } catch (const std::runtime_error&) {
        // Numerically unusable surrogate this round: explore instead.
      }
    }
    return {random_candidate(rng), "random"};
  };
  CampaignResult out = campaign_loop(circuits, n_epoch, config, eval, sink, data, propose);
  if (data.size() >= 2) {
    train_surrogate(model, data);
  } else {
    model.data = data;
  }
  out.model = std::move(model);
  return out;
}

CampaignResult random_search(const std::vector<Circuit>& circuits, int n_epoch, const CampaignConfig& config,
                             const Evaluator& eval, const RecordSink& sink) {
  Dataset data;
  std::mt19937_64 rng(mix(config.seed, 0x5EA4C4));
  auto propose = [&](const Circuit&, int, std::size_t) -> std::pair<Eigen::Vector4d, std::string> {
    return {random_candidate(rng), "random"};
  };
  CampaignResult out = campaign_loop(circuits, n_epoch, config, eval, sink, data, propose);
  out.model.data = data;
  return out;
}

std::vector<double> best_curve(const std::vector<TrialRecord>& records, const std::string& circuit_id) {
  std::vector<double> curve;
  double best = kPenaltyY;
  for (const TrialRecord& r : records) {
    if (r.circuit_id != circuit_id) continue;
    if (static_cast<int>(curve.size()) <= r.epoch) curve.resize(r.epoch + 1, best);
    if (r.converged) best = std::min(best, r.y);
    curve[r.epoch] = best;
  }
  return curve;
}

std::uint64_t mc_draw_seed(std::uint64_t seed, int index) {
  return mix(seed, 0x3C3C, static_cast<std::uint64_t>(index));
}

void summarize(McReport& report) {
  report.non_convergent = 0;
  double sum = 0.0, sq = 0.0;
  for (const McSample& s : report.samples) {
    report.non_convergent += s.converged ? 0 : 1;
    sum += s.cost;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, report.samples.size()));
  report.mean = sum / n;
  for (const McSample& s : report.samples) sq += (s.cost - report.mean) * (s.cost - report.mean);
  report.stddev = std::sqrt(sq / n);
}

McReport mc_accelerate(const Netlist& base, double variation, int n_mc, const CampaignConfig& config,
                       const Evaluator& eval, const std::optional<SurrogateModel>& warm, const RecordSink& sink) {
  if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
  config.validate();
  SurrogateConfig scfg = config.surrogate;
  scfg.seed = config.seed;
  McReport rep;
  rep.model = warm ? *warm : make_surrogate(scfg);
  Dataset data = rep.model.data;
  const FeatureVector features = extract_features(base);
  const std::string id = base.title.empty() ? "mc" : base.title;
  std::mt19937_64 rng(mix(config.seed, 0x3C));
  const double tau = config.defaults.tau;
  const Eigen::Vector4d x_default = config.defaults.vector();

  bool has_best = false;
  Eigen::Vector4d x_best = x_default;
  double y_best = kPenaltyY;
  int since_improve = 0;
  bool frozen = false;

  auto execute = [&](const Netlist& net, const Eigen::Vector4d& x, long budget, const std::string& method, int i,
                     McSample& s) {
    const Evaluation e = eval(net, SolverParams::from_vector(x, tau), budget);
    s.cost += e.iterations;
    const TrialRecord r = make_record(id, method, x, i, e);
    data.add(x, features, r.y);
    rep.records.push_back(r);
    if (sink) sink(r);
    return e;
  };
  auto collect = [&](McSample& s, const Evaluation& e, const Eigen::Vector4d& x, const std::string& method) {
    s.converged = true;
    s.y = e.iterations;
    s.x = x;
    s.method = method;
  };

  for (int i = 0; i < n_mc; ++i) {
    const Netlist net = perturb_netlist(base, variation, mc_draw_seed(config.seed, i));
    McSample s;
    s.index = i;
    s.frozen = frozen;
    const long incumbent_budget = has_best ? scaled_budget(config.incumbent_factor, y_best) : config.max_total_nr;

    Eigen::Vector4d x = x_default;
    std::string method = "default";
    long budget = config.max_total_nr;
    if (i > 0 && frozen) {
      x = x_best;
      method = "frozen";
      budget = incumbent_budget;
    } else if (i > 0) {
      method = "bo";
      budget = has_best ? scaled_budget(config.budget_factor, y_best) : config.max_total_nr;
      bool proposed = false;
      if (data.size() >= 2) {
        try {
          train_surrogate(rep.model, data);
          AcquisitionConfig acfg = config.acquisition;
          acfg.seed = mix(config.seed, 0xAC, static_cast<std::uint64_t>(i));
          const AcquisitionResult a = optimize_acquisition(rep.model, features, acfg);
          if (!a.fallback) {
            x = a.x;
            proposed = true;
          }
        } catch (const std::runtime_error&) {
        }
      }
      if (!proposed) x = random_candidate(rng);
    }
    s.proposed = x;
    s.budget = static_cast<double>(budget);
    const Evaluation e = execute(net, x, budget, method, i, s);
    if (e.converged) {
      collect(s, e, x, method);
    } else {
      s.breached = i > 0;
      // Re-execute the same draw with the incumbent, then the defaults.
      if (has_best && method != "frozen") {
        const Evaluation e2 = execute(net, x_best, incumbent_budget, "incumbent", i, s);
        if (e2.converged) collect(s, e2, x_best, "incumbent");
      }
      if (!s.converged && method != "default") {
        const Evaluation e3 = execute(net, x_default, config.max_total_nr, "default", i, s);
        if (e3.converged) collect(s, e3, x_default, "default");
      }
    }

    if (s.converged && (!has_best || s.y < y_best)) {
      has_best = true;
      y_best = s.y;
      x_best = s.x;
      since_improve = 0;
    } else if (i > 0) {
      ++since_improve;
    }
    if (!frozen && since_improve >= config.freeze_after) {
      frozen = true;
      rep.frozen_at = i + 1;
    }
    rep.samples.push_back(s);
  }
  rep.model.data = data;
  summarize(rep);
  return rep;
}

McReport mc_constant(const Netlist& base, double variation, int n_mc, const CampaignConfig& config,
                     const Evaluator& eval) {
  if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
  McReport rep;
  const std::string id = base.title.empty() ? "mc" : base.title;
  for (int i = 0; i < n_mc; ++i) {
    const Netlist net = perturb_netlist(base, variation, mc_draw_seed(config.seed, i));
    const Evaluation e = eval(net, config.defaults, config.max_total_nr);
    McSample s;
    s.index = i;
    s.method = "default";
    s.x = s.proposed = config.defaults.vector();
    s.cost = e.iterations;
    s.converged = e.converged;
    s.y = observed_y(e);
    s.budget = static_cast<double>(config.max_total_nr);
    rep.samples.push_back(s);
    rep.records.push_back(make_record(id, "default", s.x, i, e));
  }
  summarize(rep);
  return rep;
}

SpeedupReport speedup_report(const std::vector<TrialRecord>& method, const std::vector<TrialRecord>& baseline) {
  std::map<std::string, Best> a, b;
  for (const auto& r : method) {
    a[r.circuit_id];
    update_best(a, r);
  }
  for (const auto& r : baseline) {
    b[r.circuit_id];
    update_best(b, r);
  }
  std::set<std::string> ka, kb;
  for (const auto& [k, v] : a) ka.insert(k);
  for (const auto& [k, v] : b) kb.insert(k);
  if (ka != kb) throw std::invalid_argument("speedup_report: record lists cover different circuits");

  SpeedupReport rep;
  double sum = 0.0;
  int used = 0;
  for (const auto& id : ka) {
    SpeedupRow row{id, a[id].y, b[id].y};
    row.excluded = !a[id].converged || !b[id].converged;
    if (!row.excluded) {
      row.speedup = row.baseline_best / row.method_best;
      sum += row.speedup;
      rep.max = std::max(rep.max, row.speedup);
      ++used;
    }
    rep.rows.push_back(row);
  }
  rep.mean = used > 0 ? sum / used : 0.0;
  return rep;
}

void write_speedup_csv(std::ostream& out, const SpeedupReport& report) {
  out << "circuit,method_best,baseline_best,speedup,excluded\n";
  for (const auto& r : report.rows) {
    out << r.circuit_id << ',' << r.method_best << ',' << r.baseline_best << ',';
    if (r.excluded) {
      out << ",1\n";
    } else {
      out << std::setprecision(6) << r.speedup << ",0\n";
    }
  }
  out << "mean,,," << report.mean << ",\nmax,,," << report.max << ",\n";
}

namespace {

std::vector<std::string> circuit_ids(const std::vector<TrialRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records)
    if (std::find(ids.begin(), ids.end(), r.circuit_id) == ids.end()) ids.push_back(r.circuit_id);
  return ids;
}

}  // namespace

void write_curves_csv(std::ostream& out, const std::vector<TrialRecord>& records) {
  const auto ids = circuit_ids(records);
  std::vector<std::vector<double>> curves;
  std::size_t len = 0;
  out << "epoch";
  for (const auto& id : ids) {
    out << ',' << id;
    curves.push_back(best_curve(records, id));
    len = std::max(len, curves.back().size());
  }
  out << '\n';
  for (std::size_t e = 0; e < len; ++e) {
    out << e;
    for (const auto& c : curves) out << ',' << (e < c.size() ? c[e] : c.back());
    out << '\n';
  }
}

void write_curves_svg(std::ostream& out, const std::vector<TrialRecord>& records, const std::string& title) {
  const auto ids = circuit_ids(records);
  constexpr double kW = 640, kH = 400, kPad = 50;
  std::vector<std::vector<double>> curves;
  std::size_t len = 1;
  double lo = 1e300, hi = 1.0;
  for (const auto& id : ids) {
    curves.push_back(best_curve(records, id));
    len = std::max(len, curves.back().size());
    for (double v : curves.back()) {
      if (v >= kPenaltyY) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (lo > hi) lo = hi = 1.0;
  const double l0 = std::log10(std::max(lo, 1.0)) - 0.05, l1 = std::log10(hi) + 0.05;
  auto px = [&](std::size_t e) { return kPad + (kW - 2 * kPad) * e / std::max<double>(1.0, len - 1.0); };
  auto py = [&](double v) { return kH - kPad - (kH - 2 * kPad) * (std::log10(v) - l0) / (l1 - l0); };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n"
      << "<text x=\"15\" y=\"" << kH / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << kH / 2
      << ")\" text-anchor=\"middle\">best NR iterations (log)</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    out << "<polyline fill=\"none\" stroke=\"" << kColors[c % 10] << "\" points=\"";
    for (std::size_t e = 0; e < curves[c].size(); ++e) {
      if (curves[c][e] >= kPenaltyY) continue;
      out << px(e) << ',' << py(curves[c][e]) << ' ';
    }
    out << "\"/>\n<text x=\"" << kW - kPad + 4 << "\" y=\"" << kPad + 14 * c << "\" font-size=\"10\" fill=\""
        << kColors[c % 10] << "\">" << ids[c] << "</text>\n";
  }
  out << "</svg>\n";
}

std::string record_to_json(const TrialRecord& r, bool with_time) {
  nlohmann::ordered_json j;
  j["circuit"] = r.circuit_id;
  j["method"] = r.method;
  j["epoch"] = r.epoch;
  j["x"] = {r.x[0], r.x[1], r.x[2], r.x[3]};
  j["y"] = r.y;
  j["converged"] = r.converged;
  if (with_time) j["wall_time"] = r.wall_time;
  return j.dump();
}

TrialRecord record_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TrialRecord r;
  r.circuit_id = j.at("circuit").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.epoch = j.at("epoch").get<int>();
  const auto x = j.at("x").get<std::vector<double>>();
  if (x.size() != 4) throw std::invalid_argument("trial record: x must have 4 entries");
  r.x = Eigen::Vector4d(x[0], x[1], x[2], x[3]);
  r.y = j.at("y").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.wall_time = j.value("wall_time", 0.0);
  return r;
}

}  // namespace boapta
