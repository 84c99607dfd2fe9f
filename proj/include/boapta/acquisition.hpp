#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boapta/netlist.hpp"
#include "boapta/surrogate.hpp"

namespace boapta {

enum class AcquisitionKind { EI, UCB, MES };

/// "ei", "ucb" or "mes" (case-insensitive); throws std::invalid_argument.
AcquisitionKind parse_acquisition(const std::string& name);
std::string to_string(AcquisitionKind kind);

struct AcquisitionConfig {
  AcquisitionKind kind = AcquisitionKind::MES;
  double ucb_beta = 0.1;
  int mes_num_max_samples = 10;
  int mes_grid = 512;
  int raw_samples = 256;
  int restarts = 8;
  int inner_iters = 5;
  double z_bound = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// x_d = 10^(14 sigmoid(z_d) - 7), strictly inside [1e-7, 1e7].
Eigen::Vector4d z_to_x(const Eigen::Vector4d& z);
/// Inverse of z_to_x for interior points.
Eigen::Vector4d x_to_z(const Eigen::Vector4d& x);
/// Diagonal of dx/dz.
Eigen::Vector4d z_to_x_jacobian(const Eigen::Vector4d& z);

/// All three scores are in maximization form on the negated objective:
/// `mu` is the negated posterior mean and `best` the negated incumbent.
/// Throws std::invalid_argument for negative variance.
double expected_improvement(double mu, double var, double best);
double ucb_score(double mu, double var, double beta);
/// Mean over y* of gamma phi(gamma) / (2 Psi(gamma)) - ln Psi(gamma),
/// gamma = (y* - mu) / sqrt(var).  Throws for an empty list or var <= 0.
double mes_score(double mu, double var, const std::vector<double>& max_samples);

/// Draws maximum values of the negated objective from a Gumbel fit to
/// P(max <= y) = prod_i Psi((y - mu_i) / s_i) over the given candidates,
/// clamped from below at `floor`.
std::vector<double> sample_max_values(const std::vector<GpPrediction>& candidates, int count, double floor,
                                      std::mt19937_64& rng);

/// First `count` points of the Halton sequence in [0, 1]^4.
Eigen::MatrixXd halton_points(int count);
/// Latin-hypercube sample of `count` points in (0, 1)^4.
Eigen::MatrixXd latin_hypercube(int count, std::mt19937_64& rng);

/// Acquisition evaluation at fixed netlist features: the feature half of the
/// kernel against every training row is computed once at construction.
class AcquisitionSurface {
 public:
  AcquisitionSurface(const SurrogateModel& model, const FeatureVector& xi, const AcquisitionConfig& config);

  /// Latent posterior (standardized units) at z, plus gradients of mean and
  /// variance with respect to z.
  struct Posterior {
    GpPrediction p;
    Eigen::Vector4d d_mean;
    Eigen::Vector4d d_var;
  };
  Posterior posterior(const Eigen::Vector4d& z) const;

  /// Acquisition value at z; fills `grad` when non-null.
  double value(const Eigen::Vector4d& z, Eigen::Vector4d* grad = nullptr) const;

  double incumbent() const { return best_; }
  bool has_incumbent() const { return has_incumbent_; }
  const Eigen::Vector4d& incumbent_z() const { return incumbent_z_; }
  const std::vector<double>& max_samples() const { return max_samples_; }

 private:
  const SurrogateModel& model_;
  AcquisitionConfig config_;
  Eigen::VectorXd feature_factor_;  // exp(-sum_f theta_f (phi* - a_if)^2)
  double best_ = 0.0;               // negated standardized incumbent
  bool has_incumbent_ = false;
  Eigen::Vector4d incumbent_z_ = Eigen::Vector4d::Zero();
  std::vector<double> max_samples_;
};

struct AcquisitionResult {
  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  Eigen::Vector4d x = Eigen::Vector4d::Ones();
  double value = 0.0;
  std::vector<double> start_values;  // acquisition at each restart seed
  bool fallback = false;             // degenerate model, centre point returned
};

/// Multi-start quasi-Newton ascent in z-space from the best Latin-hypercube
/// draws plus the incumbent.  Deterministic in config.seed.
AcquisitionResult optimize_acquisition(const SurrogateModel& model, const FeatureVector& xi,
                                       const AcquisitionConfig& config);

}  // namespace boapta
