#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boapta/mlp.hpp"
#include "boapta/netlist.hpp"
#include "boapta/warp.hpp"

namespace boapta {

/// Input width of the kernel: warped solver parameters then MLP outputs.
inline constexpr int kKernelDims = kSolverDims + MlpWeights::kInput;
inline constexpr double kPenaltyY = 9999.0;

/// ARD squared-exponential hyperparameters, positive entries stored as logs:
/// k(a, b) = theta0 exp(-sum_j theta_j (a_j - b_j)^2).
struct GpHyperparams {
  double log_theta0 = 0.0;
  Eigen::VectorXd log_theta = Eigen::VectorXd::Zero(kKernelDims);
  double mean_const = 0.0;
  double log_noise = std::log(1e-2);

  double theta0() const { return std::exp(log_theta0); }
  Eigen::VectorXd theta() const { return log_theta.array().exp().matrix(); }
  double noise_var() const { return std::exp(log_noise); }
};

/// ARD kernel between two kernel-space points.
double composite_kernel(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                        const GpHyperparams& hp);
/// The same kernel as k1(x part) * k2(feature part) / theta0.
double kernel_solver_part(const Eigen::Ref<const Eigen::VectorXd>& wa, const Eigen::Ref<const Eigen::VectorXd>& wb,
                          const GpHyperparams& hp);
double kernel_feature_part(const Eigen::Ref<const Eigen::VectorXd>& fa, const Eigen::Ref<const Eigen::VectorXd>& fb,
                           const GpHyperparams& hp);

/// Everything that training updates, with a flat packing for the optimizer:
/// [log theta0, log theta (11), m0, log sigma^2, MLP, warp posterior].
struct SurrogateParams {
  GpHyperparams hp;
  MlpWeights mlp = MlpWeights::zeros();
  WarpPosterior warp = WarpPosterior::identity();

  static int size();
  static constexpr int kMlpOffset = 3 + kKernelDims;
  static int warp_offset() { return kMlpOffset + MlpWeights::parameter_count(); }
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::Ref<const Eigen::VectorXd>& v);
};

/// Observations {x_i, xi_i, y_i}.  y >= kPenaltyY marks a failed run.
struct Dataset {
  std::vector<Eigen::Vector4d> x;
  std::vector<FeatureVector> features;
  std::vector<double> y;

  void add(const Eigen::Vector4d& xi, const FeatureVector& f, double yi);
  std::size_t size() const { return y.size(); }
  std::size_t penalty_count() const;
};

/// Training inputs in model space: log-normalized x (N x 4), standardized
/// features (N x 7), and standardized targets.
struct TrainingView {
  Eigen::MatrixXd x01;
  Eigen::MatrixXd features;
  Eigen::VectorXd y;
};

struct LikelihoodResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // packed like SurrogateParams
  double jitter = 0.0;
};

/// Log marginal likelihood minus KL(q || p) of the warp posterior, with the
/// warp evaluated as the average over the given eps draws.  Gradients cover
/// every packed parameter.  Escalates diagonal jitter 1e-8 .. 1e-4 when the
/// Cholesky factorization fails, then throws std::runtime_error.
LikelihoodResult gp_log_likelihood(const TrainingView& data, const SurrogateParams& params,
                                   const std::vector<Eigen::VectorXd>& eps, bool with_gradient = true);

struct SurrogateConfig {
  int train_iters = 5;
  int warp_samples = 1;
  bool train_warp = true;
  bool log_targets = false;  // model log(y) instead of y
  std::uint64_t seed = 0;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// A trained GP with its cached factorization.  Predictions use the median
/// warp exp(mu_gamma).
struct SurrogateModel {
  SurrogateParams params;
  SurrogateConfig config;
  Eigen::VectorXd feature_mean = Eigen::VectorXd::Zero(FeatureVector::kSize);
  Eigen::VectorXd feature_scale = Eigen::VectorXd::Ones(FeatureVector::kSize);
  double y_mean = 0.0;
  double y_scale = 1.0;
  bool degenerate = false;
  int rounds = 0;  // training rounds so far; seeds the eps draws

  // Cache, rebuilt by refresh().
  Eigen::MatrixXd inputs;  // N x 11 kernel-space rows
  Eigen::MatrixXd chol;    // lower factor of K + (sigma^2 + jitter) I
  Eigen::VectorXd alpha;
  double jitter = 0.0;
  Dataset data;

  bool trained() const { return inputs.rows() > 0; }

  TrainingView view() const;
  /// Rebuilds standardization stats from `data` (keeps trained parameters).
  void fit_scalers();
  /// Recomputes the cached factorization at the current parameters.
  void refresh();

  double transform_y(double y) const;
  double untransform_y(double t) const;
  Eigen::VectorXd scale_features(const FeatureVector& f) const;
  Eigen::VectorXd median_warp(const Eigen::Vector4d& x01) const;
};

SurrogateModel make_surrogate(const SurrogateConfig& config = {});

/// One training round on `data`: refits scalers, draws eps, takes
/// config.train_iters projected L-BFGS steps from the model's current
/// parameters and refreshes the cache.  Throws std::invalid_argument for
/// fewer than two rows.  All-equal targets train the mean only.
void train_surrogate(SurrogateModel& model, const Dataset& data);

/// Posterior in standardized target units at a kernel-space point.
GpPrediction predict_latent(const SurrogateModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);

/// Posterior mean and variance of the (optionally log-) transformed target.
/// Throws std::logic_error for an untrained model.
GpPrediction gp_predict(const Eigen::Vector4d& x, const FeatureVector& xi, const SurrogateModel& model);

std::string model_to_json(const SurrogateModel& model);
SurrogateModel model_from_json(const std::string& text);

}  // namespace boapta
