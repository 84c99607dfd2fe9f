#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boapta/acquisition.hpp"
#include "boapta/cepta.hpp"
#include "boapta/netlist.hpp"
#include "boapta/surrogate.hpp"

namespace boapta {

struct Circuit {
  std::string id;
  Netlist netlist;
  FeatureVector features;
};

Circuit make_circuit(std::string id, Netlist netlist);

/// Outcome of one solver execution as seen by the optimizer.
struct Evaluation {
  bool converged = false;
  double iterations = 0.0;  // NR iterations spent, converged or not
  double wall_time = 0.0;
  Eigen::VectorXd solution;
};

/// Runs the solver on a netlist with the given parameters; `budget` caps
/// the total NR iterations (<= 0 means the evaluator's own limit).
using Evaluator = std::function<Evaluation(const Netlist&, const SolverParams&, long budget)>;

/// CEPTA with the given limits.
Evaluator cepta_evaluator(CeptaLimits limits = {}, StepControl control = {});

struct TrialRecord {
  std::string circuit_id;
  std::string method;  // default | bo | random | incumbent
  Eigen::Vector4d x = Eigen::Vector4d::Ones();
  double y = kPenaltyY;
  int epoch = 0;
  double wall_time = 0.0;
  bool converged = false;
};

struct CampaignConfig {
  int epochs = 20;
  std::uint64_t seed = 1;
  SolverParams defaults;
  AcquisitionConfig acquisition;
  SurrogateConfig surrogate;
  long max_total_nr = CeptaLimits{}.max_total_nr;
  int max_time_steps = CeptaLimits{}.max_time_steps;

  // Monte-Carlo acceleration.
  int freeze_after = 20;
  double budget_factor = 2.0;
  double incumbent_factor = 4.0;

  CampaignConfig();
  void validate() const;
};

/// (C, L, R0, G0, tau) = (1e-3, 1e-3, 1, 1, 1).
SolverParams default_params();

struct Best {
  Eigen::Vector4d x = Eigen::Vector4d::Ones();
  double y = kPenaltyY;
  bool converged = false;
};

/// Receives each record as soon as it exists (trial logs).
using RecordSink = std::function<void(const TrialRecord&)>;

struct CampaignResult {
  std::vector<TrialRecord> records;
  std::map<std::string, Best> best;
  SurrogateModel model;
};

/// Cold-start loop: a default-parameter run per circuit, then per epoch and
/// circuit: retrain, maximize the acquisition at the circuit's features,
/// run, record.  Failed runs are recorded with y = 9999.  Passing `warm`
/// continues from an existing model and its data.
CampaignResult cold_start(const std::vector<Circuit>& circuits, int n_epoch, const CampaignConfig& config,
                          const Evaluator& eval, const RecordSink& sink = {},
                          const std::optional<SurrogateModel>& warm = std::nullopt);

/// Same loop with candidates uniform in log10 x over [-7, 7]^4.
CampaignResult random_search(const std::vector<Circuit>& circuits, int n_epoch, const CampaignConfig& config,
                             const Evaluator& eval, const RecordSink& sink = {});

/// Running best y per epoch for one circuit (index = epoch).
std::vector<double> best_curve(const std::vector<TrialRecord>& records, const std::string& circuit_id);

struct McSample {
  int index = 0;
  std::string method;           // default | bo | incumbent | frozen
  Eigen::Vector4d x = Eigen::Vector4d::Ones();  // parameters of the collected run
  double y = kPenaltyY;         // iterations of the collected run
  double cost = 0.0;            // all iterations spent on the sample
  bool converged = false;
  bool breached = false;        // the BO proposal hit the budget
  bool frozen = false;
  double budget = 0.0;          // budget given to the first execution
  Eigen::Vector4d proposed = Eigen::Vector4d::Ones();
};

struct McReport {
  std::vector<McSample> samples;
  std::vector<TrialRecord> records;  // every execution, penalties included
  int non_convergent = 0;
  double mean = 0.0;  // of cost
  double stddev = 0.0;
  int frozen_at = -1;  // sample index where BO stopped, -1 if never
  SurrogateModel model;
};

/// Summarizes per-sample costs (#NC, mean, population STD).
void summarize(McReport& report);

/// Monte-Carlo acceleration over `n_mc` draws of perturb_netlist(base,
/// variation, seed_i).  The BO proposal runs under a budget of
/// budget_factor * y*; on breach the sample is re-run at x* (budget
/// incumbent_factor * y*), then at the defaults.  BO freezes after
/// freeze_after samples without improving y*.
McReport mc_accelerate(const Netlist& base, double variation, int n_mc, const CampaignConfig& config,
                       const Evaluator& eval, const std::optional<SurrogateModel>& warm = std::nullopt,
                       const RecordSink& sink = {});

/// The same draws solved at constant default parameters.
McReport mc_constant(const Netlist& base, double variation, int n_mc, const CampaignConfig& config,
                     const Evaluator& eval);

/// Seed of the i-th Monte-Carlo netlist draw.
std::uint64_t mc_draw_seed(std::uint64_t seed, int index);

struct SpeedupRow {
  std::string circuit_id;
  double method_best = kPenaltyY;
  double baseline_best = kPenaltyY;
  double speedup = 0.0;
  bool excluded = false;  // a side never converged
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  double mean = 0.0;
  double max = 0.0;
};

/// Per-circuit y_best(baseline) / y_best(method).  Throws
/// std::invalid_argument when the circuit sets differ.
SpeedupReport speedup_report(const std::vector<TrialRecord>& method, const std::vector<TrialRecord>& baseline);

void write_speedup_csv(std::ostream& out, const SpeedupReport& report);
/// Per-epoch best-record curves, one column per circuit.
void write_curves_csv(std::ostream& out, const std::vector<TrialRecord>& records);
void write_curves_svg(std::ostream& out, const std::vector<TrialRecord>& records, const std::string& title);

/// One JSON object per line; `with_time` controls the wall-time field.
std::string record_to_json(const TrialRecord& r, bool with_time = true);
TrialRecord record_from_json(const std::string& line);

}  // namespace boapta
